//! Phase-vocoder time stretching and pitch shifting.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::resample::resample_to_len;
use super::stft::{istft, stft_padded, ComplexStft};
use super::{FRAME_LENGTH, HOP_LENGTH};
use crate::audio::Waveform;
use crate::error::{param, Error, Result};

pub const MIN_RATE: f64 = 0.5;
pub const MAX_RATE: f64 = 2.0;

fn wrap(phase: f64) -> f64 {
    phase - 2.0 * PI * (phase / (2.0 * PI)).round()
}

fn stretch_channel(x: &[f32], rate: f64) -> Result<Vec<f32>> {
    let (frame, hop) = (FRAME_LENGTH, HOP_LENGTH);
    let spec = stft_padded(x, frame, hop)?;
    let n_bins = spec.n_bins;
    let zero = vec![Complex64::new(0.0, 0.0); n_bins];
    let frame_at = |t: usize| if t < spec.n_frames { spec.frame(t) } else { &zero[..] };

    // Expected phase advance per hop for each bin's centre frequency.
    let advance: Vec<f64> = (0..n_bins)
        .map(|k| 2.0 * PI * k as f64 * hop as f64 / frame as f64)
        .collect();
    let mut phase: Vec<f64> = spec.frame(0).iter().map(|c| c.arg()).collect();

    let n_out = (spec.n_frames as f64 / rate).ceil() as usize;
    let mut bins = Vec::with_capacity(n_out * n_bins);
    for j in 0..n_out {
        let t = j as f64 * rate;
        let left = t.floor() as usize;
        let alpha = t - left as f64;
        let (a, b) = (frame_at(left), frame_at(left + 1));
        for k in 0..n_bins {
            let mag = (1.0 - alpha) * a[k].norm() + alpha * b[k].norm();
            bins.push(Complex64::from_polar(mag, phase[k]));
            // Instantaneous frequency: measured phase increment minus the
            // nominal advance, wrapped, plus the nominal advance.
            let deviation = wrap(b[k].arg() - a[k].arg() - advance[k]);
            phase[k] += advance[k] + deviation;
        }
    }
    let out_spec = ComplexStft { bins, n_frames: n_out, n_bins, frame_length: frame, hop_length: hop };
    let out_len = (x.len() as f64 / rate).round() as usize;
    let lead = (frame as f64 / rate).round() as usize;
    let y = istft(&out_spec, lead + out_len);
    Ok(y[lead..lead + out_len].to_vec())
}

/// Changes duration by `1 / rate` while keeping pitch. Rates outside
/// `[0.5, 2.0]` are clamped into that band.
pub fn time_stretch(seg: &Waveform, rate: f64) -> Result<Waveform> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(param(format!("stretch rate {rate} must be positive")));
    }
    if seg.is_empty() {
        return Err(Error::InputTooShort { needed: 1, got: 0 });
    }
    let rate = rate.clamp(MIN_RATE, MAX_RATE);
    seg.map_channels(|c| stretch_channel(c, rate))
}

/// Shifts pitch by `semitones` keeping length: stretch by 2^(s/12), then
/// resample back to the input length.
pub fn pitch_shift(seg: &Waveform, semitones: f64) -> Result<Waveform> {
    if !(semitones.abs() <= 12.0) {
        return Err(param(format!("pitch shift {semitones} outside [-12, 12] semitones")));
    }
    if seg.is_empty() {
        return Err(Error::InputTooShort { needed: 1, got: 0 });
    }
    let factor = 2f64.powf(semitones / 12.0);
    seg.map_channels(|c| {
        let stretched = stretch_channel(c, 1.0 / factor)?;
        Ok(resample_to_len(&stretched, c.len()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::stft::stft;

    fn sine(freq: f64, sr: u32, n: usize) -> Waveform {
        Waveform::mono(
            (0..n)
                .map(|i| (0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin()) as f32)
                .collect(),
            sr,
        )
    }

    fn peak_bin(w: &Waveform) -> usize {
        let s = stft(w, 2048, 512).unwrap();
        let mut acc = vec![0.0; s.n_bins()];
        for f in s.frames() {
            for (a, m) in acc.iter_mut().zip(f) {
                *a += m;
            }
        }
        (0..acc.len()).max_by(|&a, &b| acc[a].total_cmp(&acc[b])).unwrap()
    }

    fn correlation(a: &[f32], b: &[f32]) -> f64 {
        let n = a.len().min(b.len());
        let dot: f64 = (0..n).map(|i| a[i] as f64 * b[i] as f64).sum();
        let ea: f64 = a[..n].iter().map(|&v| (v as f64).powi(2)).sum();
        let eb: f64 = b[..n].iter().map(|&v| (v as f64).powi(2)).sum();
        dot / (ea * eb).sqrt()
    }

    #[test]
    fn identity_rate_preserves_signal() {
        let x = sine(440.0, 22050, 30000);
        let y = time_stretch(&x, 1.0).unwrap();
        assert!((y.frames() as i64 - x.frames() as i64).abs() <= 512);
        assert!(correlation(x.samples(), y.samples()) >= 0.99);
    }

    #[test]
    fn length_and_pitch_laws() {
        let n = 44100;
        let x = sine(440.0, 22050, n);
        let want_bin = peak_bin(&x);
        for rate in [0.5, 0.8, 1.25, 2.0] {
            let y = time_stretch(&x, rate).unwrap();
            let expected = n as f64 / rate;
            assert!((y.frames() as f64 - expected).abs() <= 512.0, "rate {rate}");
            assert!((peak_bin(&y) as i64 - want_bin as i64).abs() <= 1, "rate {rate}");
        }
    }

    #[test]
    fn pitch_shift_octave_and_minor_third() {
        let sr = 22050;
        let x = sine(220.0, sr, 44100);
        let y = pitch_shift(&x, 12.0).unwrap();
        assert_eq!(y.frames(), x.frames());
        let want = (440.0 * 2048.0 / sr as f64).round() as i64;
        assert!((peak_bin(&y) as i64 - want).abs() <= 1);

        let y = pitch_shift(&x, 3.0).unwrap();
        let want = 220.0 * 2f64.powf(0.25) * 2048.0 / sr as f64;
        assert!((peak_bin(&y) as f64 - want).abs() <= 1.0);
    }

    #[test]
    fn zero_shift_is_identity_like() {
        let x = sine(330.0, 22050, 30000);
        let y = pitch_shift(&x, 0.0).unwrap();
        assert!(correlation(x.samples(), y.samples()) >= 0.99);
    }

    #[test]
    fn parameter_errors() {
        let x = sine(330.0, 22050, 4096);
        assert!(time_stretch(&x, 0.0).is_err());
        assert!(time_stretch(&x, -1.0).is_err());
        assert!(pitch_shift(&x, 12.5).is_err());
        // Out-of-band rates are clamped, not rejected.
        assert_eq!(time_stretch(&x, 4.0).unwrap().frames(), 2048);
    }
}
