//! Signal-processing primitives shared by analysis and modification.
//!
//! Everything here is a pure function of its inputs.

mod envelope;
mod features;
mod hpss;
mod resample;
pub(crate) mod stft;
mod vocoder;
mod window;

pub use envelope::{amplitude_envelope, lowpass_smooth, onset_strength, Envelope};
pub use features::{chroma, mel_filterbank, mfcc, spectral_flatness, FeatureMatrix};
pub use hpss::{hpss, HPSS_KERNEL, HPSS_POWER};
pub use resample::{resample, resample_to_len};
pub use stft::{hann, stft, Spectrogram};
pub use vocoder::{pitch_shift, time_stretch, MAX_RATE, MIN_RATE};
pub use window::{taper_gain, taper_window};

/// Working rate for all analysis.
pub const ANALYSIS_RATE: u32 = 22050;
pub const FRAME_LENGTH: usize = 2048;
pub const HOP_LENGTH: usize = 512;
pub const N_MELS: usize = 40;
pub const N_MFCC: usize = 13;
