//! Where emitted frames go.

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::audio::Waveform;
use crate::error::{Error, Result};

pub trait Sink: Send {
    /// Receives interleaved samples.
    fn write(&mut self, samples: &[f32]) -> Result<()>;
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Discards audio; playback is paced by the wall clock only.
#[derive(Debug, Default)]
pub struct NullSink;

impl Sink for NullSink {
    fn write(&mut self, _: &[f32]) -> Result<()> {
        Ok(())
    }
}

/// Streams to a 32-bit float wave file.
pub struct WavSink {
    writer: Option<hound::WavWriter<std::io::BufWriter<std::fs::File>>>,
}

impl WavSink {
    pub fn create(path: &std::path::Path, sample_rate: u32, channels: u16) -> Result<Self> {
        let spec = hound::WavSpec { channels, sample_rate, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
        let writer = hound::WavWriter::create(path, spec).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        Ok(Self { writer: Some(writer) })
    }
}

impl Sink for WavSink {
    fn write(&mut self, samples: &[f32]) -> Result<()> {
        let w = self.writer.as_mut().ok_or_else(|| Error::Io(std::io::Error::other("sink closed")))?;
        for &s in samples {
            w.write_sample(s).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        if let Some(w) = self.writer.take() {
            w.finalize().map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        Ok(())
    }
}

/// Keeps everything in memory; clones share the buffer.
#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    data: Arc<Mutex<Vec<f32>>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn samples(&self) -> Vec<f32> {
        self.data.lock().unwrap().clone()
    }

    pub fn waveform(&self, sample_rate: u32, channels: u16) -> Waveform {
        Waveform::new(self.samples(), sample_rate, channels).expect("whole frames")
    }
}

impl Sink for MemorySink {
    fn write(&mut self, samples: &[f32]) -> Result<()> {
        self.data.lock().unwrap().extend_from_slice(samples);
        Ok(())
    }
}

/// Output choice as given on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SinkSpec {
    Null,
    Wav(PathBuf),
    /// A sound card. No device backend is built in, so opening one is
    /// refused.
    Device(Option<String>),
}

pub const AVAILABLE_SINKS: &str = "null, wav:PATH";

impl FromStr for SinkSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "null" => Ok(SinkSpec::Null),
            None if s == "device" => Ok(SinkSpec::Device(None)),
            Some(("wav", p)) if !p.is_empty() => Ok(SinkSpec::Wav(PathBuf::from(p))),
            Some(("device", d)) => Ok(SinkSpec::Device(Some(d.to_string()))),
            _ => Err(Error::Parameter(format!("unknown output {s:?}; available: {AVAILABLE_SINKS}"))),
        }
    }
}

impl SinkSpec {
    pub fn open(&self, sample_rate: u32, channels: u16) -> Result<Box<dyn Sink>> {
        match self {
            SinkSpec::Null => Ok(Box::new(NullSink)),
            SinkSpec::Wav(p) => Ok(Box::new(WavSink::create(p, sample_rate, channels)?)),
            SinkSpec::Device(name) => Err(Error::Refused(format!(
                "audio device {} unavailable: no sound-card backend in this build; available outputs: {AVAILABLE_SINKS}",
                name.as_deref().unwrap_or("default")
            ))),
        }
    }
}
