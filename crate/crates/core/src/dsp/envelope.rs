//! Hop-rate envelopes: onset strength, RMS amplitude, zero-phase smoothing.

use std::f64::consts::PI;

use super::stft::Spectrogram;
use crate::audio::Waveform;
use crate::error::{param, Result};
use crate::exec;

/// A time series sampled once per hop.
///
/// Value `i` describes the instant `offset + i * hop_length` in samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub values: Vec<f64>,
    pub hop_length: usize,
    pub sample_rate: u32,
    pub offset: usize,
}

impl Envelope {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Envelope rate in Hz.
    pub fn rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop_length as f64
    }

    pub fn time_of(&self, i: usize) -> usize {
        self.offset + i * self.hop_length
    }

    /// Index whose instant is nearest sample `s`, clamped.
    pub fn index_at(&self, s: usize) -> usize {
        let i = ((s as f64 - self.offset as f64) / self.hop_length as f64).round().max(0.0) as usize;
        i.min(self.values.len().saturating_sub(1))
    }

    pub fn value_at(&self, s: usize) -> f64 {
        self.values.get(self.index_at(s)).copied().unwrap_or(0.0)
    }

    pub fn with_values(&self, values: Vec<f64>) -> Envelope {
        Envelope { values, ..self.clone() }
    }
}

/// Dynamic range kept by the onset detector below the loudest bin.
const ONSET_TOP_DB: f64 = 80.0;

/// Half-wave rectified spectral flux of log magnitude, summed over bins.
///
/// Frames are not centred, so a new event is registered by the first frame
/// whose window reaches it; the envelope offset reflects that.
pub fn onset_strength(s: &Spectrogram) -> Envelope {
    let db = |m: f64| 20.0 * m.max(1e-10).log10();
    let peak = s.frames().flatten().fold(0.0f64, |a, &m| a.max(m));
    let floor = db(peak) - ONSET_TOP_DB;
    let n = s.n_frames();
    let mut values = exec::map_range(n, |t| {
        if t == 0 {
            return 0.0;
        }
        s.frame(t)
            .iter()
            .zip(s.frame(t - 1))
            .map(|(&cur, &prev)| (db(cur).max(floor) - db(prev).max(floor)).max(0.0))
            .sum()
    });
    if let Some(v) = values.first_mut() {
        *v = 0.0;
    }
    Envelope {
        values,
        hop_length: s.hop_length(),
        sample_rate: s.sample_rate(),
        offset: s.frame_length() - s.hop_length() / 2,
    }
}

/// Per-hop RMS of `window_length`-sample windows (stereo is downmixed).
pub fn amplitude_envelope(w: &Waveform, window_length: usize, hop_length: usize) -> Result<Envelope> {
    if window_length == 0 || hop_length == 0 {
        return Err(param("window and hop length must be positive"));
    }
    let mono = w.to_mono();
    let x = mono.samples();
    let n = if x.len() <= window_length { 1 } else { 1 + (x.len() - window_length) / hop_length };
    let values = exec::map_range(n, |t| {
        let a = t * hop_length;
        crate::audio::rms(&x[a..(a + window_length).min(x.len())])
    });
    Ok(Envelope { values, hop_length, sample_rate: w.sample_rate(), offset: window_length / 2 })
}

/// Second-order Butterworth low-pass coefficients `(b, a)` with `a[0] = 1`.
fn butter2(cutoff_hz: f64, fs: f64) -> ([f64; 3], [f64; 3]) {
    let k = (PI * cutoff_hz / fs).tan();
    let q = std::f64::consts::FRAC_1_SQRT_2;
    let norm = 1.0 / (1.0 + k / q + k * k);
    let b0 = k * k * norm;
    ([b0, 2.0 * b0, b0], [1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm])
}

fn biquad(x: &[f64], b: &[f64; 3], a: &[f64; 3]) -> Vec<f64> {
    // Start in steady state for a constant input equal to x[0].
    let c = x.first().copied().unwrap_or(0.0);
    let mut z1 = c * (1.0 - b[0]);
    let mut z2 = c * (b[2] - a[2]);
    x.iter()
        .map(|&v| {
            let y = b[0] * v + z1;
            z1 = b[1] * v - a[1] * y + z2;
            z2 = b[2] * v - a[2] * y;
            y
        })
        .collect()
}

/// Zero-phase low-pass: the filter runs forward then backward over an
/// odd-reflected extension of the input. Output length equals input length.
pub fn lowpass_smooth(e: &Envelope, cutoff_hz: f64) -> Result<Envelope> {
    let fs = e.rate();
    if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
        return Err(param(format!(
            "cutoff {cutoff_hz} Hz outside (0, {:.3}) Hz",
            fs / 2.0
        )));
    }
    let n = e.values.len();
    if n < 2 {
        return Ok(e.clone());
    }
    let (b, a) = butter2(cutoff_hz, fs);
    let pad = ((3.0 * fs / cutoff_hz).ceil() as usize).min(n - 1);
    let x = &e.values;
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    let mut y = biquad(&ext, &b, &a);
    y.reverse();
    let mut y = biquad(&y, &b, &a);
    y.reverse();
    Ok(e.with_values(y[pad..pad + n].to_vec()))
}
