//! Sample containers and PCM wave I/O.

use std::path::Path;

use crate::error::{param, Error, Result};

/// Interleaved audio samples with their rate and channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
    channels: u16,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32, channels: u16) -> Result<Self> {
        if sample_rate == 0 {
            return Err(param("sample rate must be positive"));
        }
        if !(1..=2).contains(&channels) {
            return Err(param(format!("unsupported channel count {channels}")));
        }
        if samples.len() % channels as usize != 0 {
            return Err(param("sample count is not a multiple of channel count"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(param(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate, channels })
    }

    /// Mono waveform; panics on non-finite input or zero rate.
    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self::new(samples, sample_rate, 1).expect("valid mono waveform")
    }

    /// Builds an interleaved waveform from equal-length channel vectors.
    pub fn from_channels(channels: &[Vec<f32>], sample_rate: u32) -> Result<Self> {
        let n = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != n) {
            return Err(param("channel lengths differ"));
        }
        let nc = channels.len();
        let mut samples = Vec::with_capacity(n * nc);
        for i in 0..n {
            for c in channels {
                samples.push(c[i]);
            }
        }
        Self::new(samples, sample_rate, nc as u16)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }

    /// Number of sample frames (samples per channel).
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    /// Channel `c` as its own vector.
    pub fn channel(&self, c: usize) -> Vec<f32> {
        let nc = self.channels as usize;
        self.samples.iter().skip(c).step_by(nc).copied().collect()
    }

    pub fn split_channels(&self) -> Vec<Vec<f32>> {
        (0..self.channels as usize).map(|c| self.channel(c)).collect()
    }

    /// Average of all channels.
    pub fn to_mono(&self) -> Waveform {
        if self.channels == 1 {
            return self.clone();
        }
        let nc = self.channels as usize;
        let samples = self
            .samples
            .chunks_exact(nc)
            .map(|f| f.iter().sum::<f32>() / nc as f32)
            .collect();
        Waveform { samples, sample_rate: self.sample_rate, channels: 1 }
    }

    /// Frames `[start, end)` as a new waveform (clamped to bounds).
    pub fn slice(&self, start: usize, end: usize) -> Waveform {
        let n = self.frames();
        let (s, e) = (start.min(n), end.min(n).max(start.min(n)));
        let nc = self.channels as usize;
        Waveform {
            samples: self.samples[s * nc..e * nc].to_vec(),
            sample_rate: self.sample_rate,
            channels: self.channels,
        }
    }

    /// Root-mean-square over all samples; 0 for empty input.
    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// Applies `f` to every channel independently.
    pub fn map_channels<F>(&self, mut f: F) -> Result<Waveform>
    where
        F: FnMut(&[f32]) -> Result<Vec<f32>>,
    {
        let chans = self
            .split_channels()
            .iter()
            .map(|c| f(c))
            .collect::<Result<Vec<_>>>()?;
        Waveform::from_channels(&chans, self.sample_rate)
    }

    /// Same content at a different rate; channels preserved.
    pub fn resampled(&self, rate: u32) -> Waveform {
        if rate == self.sample_rate {
            return self.clone();
        }
        let chans: Vec<Vec<f32>> = self
            .split_channels()
            .iter()
            .map(|c| crate::dsp::resample(c, self.sample_rate, rate))
            .collect();
        Waveform::from_channels(&chans, rate).expect("resampled channels agree")
    }

    /// Same content spread over `channels` channels (mono is duplicated,
    /// stereo to mono is averaged).
    pub fn with_channels(&self, channels: u16) -> Waveform {
        match (self.channels, channels) {
            (a, b) if a == b => self.clone(),
            (_, 1) => self.to_mono(),
            (1, n) => {
                let nc = n as usize;
                let samples = self
                    .samples
                    .iter()
                    .flat_map(|&s| std::iter::repeat(s).take(nc))
                    .collect();
                Waveform { samples, sample_rate: self.sample_rate, channels: n }
            }
            (_, n) => self.to_mono().with_channels(n),
        }
    }
}

pub fn rms(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / x.len() as f64).sqrt()
}

/// PCM sample format used when writing wave files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Int16,
    Float32,
}

/// Reads a PCM wave file (integer 8/16/24/32-bit or 32-bit float).
pub fn read_wav(path: &Path) -> Result<(Waveform, WavFormat)> {
    let ingest = |reason: String| Error::Ingest { path: path.to_path_buf(), reason };
    let mut reader = hound::WavReader::open(path).map_err(|e| ingest(e.to_string()))?;
    let spec = reader.spec();
    let (samples, fmt): (Vec<f32>, WavFormat) = match spec.sample_format {
        hound::SampleFormat::Float => (
            reader
                .samples::<f32>()
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| ingest(e.to_string()))?,
            WavFormat::Float32,
        ),
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
            (
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f32 / scale))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| ingest(e.to_string()))?,
                WavFormat::Int16,
            )
        }
    };
    if samples.is_empty() {
        return Err(ingest("no audio samples".into()));
    }
    let samples = samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
    let w = Waveform::new(samples, spec.sample_rate, spec.channels)
        .map_err(|e| ingest(e.to_string()))?;
    Ok((w, fmt))
}

/// Writes a wave file; integer output is clamped to full scale.
pub fn write_wav(path: &Path, w: &Waveform, format: WavFormat) -> Result<()> {
    let spec = hound::WavSpec {
        channels: w.channels(),
        sample_rate: w.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Int16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Int16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let io = |e: hound::Error| Error::Io(std::io::Error::other(e.to_string()));
    let mut writer = hound::WavWriter::create(path, spec).map_err(io)?;
    for &s in w.samples() {
        match format {
            WavFormat::Int16 => writer
                .write_sample((s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16)
                .map_err(io)?,
            WavFormat::Float32 => writer.write_sample(s).map_err(io)?,
        }
    }
    writer.finalize().map_err(io)
}
