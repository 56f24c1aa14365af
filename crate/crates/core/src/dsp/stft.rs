use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio::Waveform;
use crate::error::{param, Error, Result};
use crate::exec;

/// Symmetric raised-cosine (Hann) window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![1.0],
        _ => (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
            .collect(),
    }
}

/// Magnitude spectrogram, frames along the outer axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    magnitudes: Vec<f64>,
    n_frames: usize,
    n_bins: usize,
    frame_length: usize,
    hop_length: usize,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn from_frames(
        frames: Vec<Vec<f64>>,
        frame_length: usize,
        hop_length: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        let n_bins = frame_length / 2 + 1;
        if frames.iter().any(|f| f.len() != n_bins) {
            return Err(param("frame width must be frame_length/2 + 1"));
        }
        if frames.iter().flatten().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(param("magnitudes must be finite and non-negative"));
        }
        Ok(Self {
            n_frames: frames.len(),
            magnitudes: frames.concat(),
            n_bins,
            frame_length,
            hop_length,
            sample_rate,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }
    pub fn frame_length(&self) -> usize {
        self.frame_length
    }
    pub fn hop_length(&self) -> usize {
        self.hop_length
    }
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.magnitudes[t * self.n_bins..(t + 1) * self.n_bins]
    }
    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.magnitudes.chunks_exact(self.n_bins)
    }
    /// Centre frequency in Hz of bin `k`.
    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.frame_length as f64
    }
    /// Frames over `[start, end)` in samples, clamped to what exists.
    pub fn frame_range(&self, start: usize, end: usize) -> std::ops::Range<usize> {
        let a = (start / self.hop_length).min(self.n_frames);
        let b = end.div_ceil(self.hop_length).clamp(a, self.n_frames);
        a..b
    }
}

/// Complex short-time transform used by the resynthesis paths.
#[derive(Debug, Clone)]
pub(crate) struct ComplexStft {
    pub bins: Vec<Complex64>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub frame_length: usize,
    pub hop_length: usize,
}

impl ComplexStft {
    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.bins[t * self.n_bins..(t + 1) * self.n_bins]
    }
}

fn check_frame(frame_length: usize, hop_length: usize) -> Result<()> {
    if !frame_length.is_power_of_two() || frame_length < 2 {
        return Err(param(format!("frame length {frame_length} is not a power of two")));
    }
    if hop_length == 0 || hop_length > frame_length {
        return Err(param(format!("hop length {hop_length} out of (0, {frame_length}]")));
    }
    Ok(())
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(n)
}

/// Frame `t` covers `x[t*hop .. t*hop + frame_length]`; no padding.
pub(crate) fn stft_complex(x: &[f32], frame_length: usize, hop_length: usize) -> Result<ComplexStft> {
    check_frame(frame_length, hop_length)?;
    if x.len() < frame_length {
        return Err(Error::InputTooShort { needed: frame_length, got: x.len() });
    }
    let n_frames = 1 + (x.len() - frame_length) / hop_length;
    let n_bins = frame_length / 2 + 1;
    let window = hann(frame_length);
    let fft = forward_plan(frame_length);
    let frames = exec::map_range(n_frames, |t| {
        let start = t * hop_length;
        let mut buf: Vec<Complex64> = x[start..start + frame_length]
            .iter()
            .zip(&window)
            .map(|(&s, &w)| Complex64::new(s as f64 * w, 0.0))
            .collect();
        fft.process(&mut buf);
        buf.truncate(n_bins);
        buf
    });
    Ok(ComplexStft { bins: frames.concat(), n_frames, n_bins, frame_length, hop_length })
}

/// Weighted overlap-add inverse with squared-window normalisation.
/// Samples whose window coverage is negligible come out as zero.
pub(crate) fn istft(spec: &ComplexStft, length: usize) -> Vec<f32> {
    let n = spec.frame_length;
    let window = hann(n);
    let inverse = FftPlanner::new().plan_fft_inverse(n);
    let frames = exec::map_range(spec.n_frames, |t| {
        let half = spec.frame(t);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..spec.n_bins].copy_from_slice(half);
        for k in 1..n / 2 {
            buf[n - k] = half[k].conj();
        }
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        inverse.process(&mut buf);
        buf.iter().zip(&window).map(|(c, w)| c.re / n as f64 * w).collect::<Vec<f64>>()
    });
    let total = (spec.n_frames.saturating_sub(1)) * spec.hop_length + n;
    let mut acc = vec![0.0f64; total.max(length)];
    let mut norm = vec![0.0f64; total.max(length)];
    let w2: Vec<f64> = window.iter().map(|w| w * w).collect();
    for (t, frame) in frames.iter().enumerate() {
        let start = t * spec.hop_length;
        for i in 0..n {
            acc[start + i] += frame[i];
            norm[start + i] += w2[i];
        }
    }
    let floor = 1e-8;
    acc.iter()
        .zip(&norm)
        .take(length)
        .map(|(&a, &w)| if w > floor { (a / w) as f32 } else { 0.0 })
        .collect()
}

/// Zero-pads by one frame on both sides so every input sample is covered by
/// full-weight frames, then transforms.
pub(crate) fn stft_padded(x: &[f32], frame_length: usize, hop_length: usize) -> Result<ComplexStft> {
    let mut padded = vec![0.0f32; x.len() + 2 * frame_length];
    padded[frame_length..frame_length + x.len()].copy_from_slice(x);
    stft_complex(&padded, frame_length, hop_length)
}

/// Inverse of [`stft_padded`] trimmed back to `length` samples.
pub(crate) fn istft_padded(spec: &ComplexStft, length: usize) -> Vec<f32> {
    let pad = spec.frame_length;
    let y = istft(spec, length + 2 * pad);
    y[pad..pad + length].to_vec()
}

/// Magnitude spectrogram of `w`, downmixing stereo to mono first.
pub fn stft(w: &Waveform, frame_length: usize, hop_length: usize) -> Result<Spectrogram> {
    let mono = w.to_mono();
    let spec = stft_complex(mono.samples(), frame_length, hop_length)?;
    Ok(Spectrogram {
        magnitudes: spec.bins.iter().map(|c| c.norm()).collect(),
        n_frames: spec.n_frames,
        n_bins: spec.n_bins,
        frame_length,
        hop_length,
        sample_rate: w.sample_rate(),
    })
}
