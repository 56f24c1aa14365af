//! Harmonic/percussive separation by median filtering.

use rustfft::num_complex::Complex64;

use super::stft::{istft_padded, stft_padded, ComplexStft};
use super::{FRAME_LENGTH, HOP_LENGTH};
use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::exec;

/// Median kernel length along time (frames) and frequency (bins).
pub const HPSS_KERNEL: usize = 17;
/// Exponent of the soft (Wiener-style) masks.
pub const HPSS_POWER: i32 = 2;

fn median(buf: &mut [f64]) -> f64 {
    let mid = buf.len() / 2;
    let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Returns `(harmonic_mask, percussive_mask)` row-major like the input.
fn masks(mag: &[f64], n_frames: usize, n_bins: usize) -> (Vec<f64>, Vec<f64>) {
    let half = HPSS_KERNEL / 2;
    let rows = exec::map_range(n_frames, |t| {
        let mut scratch = Vec::with_capacity(HPSS_KERNEL);
        let mut hm = Vec::with_capacity(n_bins);
        let mut pm = Vec::with_capacity(n_bins);
        let (t0, t1) = (t.saturating_sub(half), (t + half + 1).min(n_frames));
        for k in 0..n_bins {
            scratch.clear();
            scratch.extend((t0..t1).map(|u| mag[u * n_bins + k]));
            let h = median(&mut scratch);
            scratch.clear();
            let (k0, k1) = (k.saturating_sub(half), (k + half + 1).min(n_bins));
            scratch.extend_from_slice(&mag[t * n_bins + k0..t * n_bins + k1]);
            let p = median(&mut scratch);
            let (hp, pp) = (h.powi(HPSS_POWER), p.powi(HPSS_POWER));
            let total = hp + pp;
            if total > 0.0 {
                hm.push(hp / total);
                pm.push(pp / total);
            } else {
                hm.push(0.0);
                pm.push(0.0);
            }
        }
        (hm, pm)
    });
    let (h, p): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    (h.concat(), p.concat())
}

fn apply_mask(spec: &ComplexStft, mask: &[f64]) -> ComplexStft {
    ComplexStft {
        bins: spec.bins.iter().zip(mask).map(|(c, m)| c * *m).collect::<Vec<Complex64>>(),
        ..spec.clone()
    }
}

fn separate_channel(x: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
    let spec = stft_padded(x, FRAME_LENGTH, HOP_LENGTH)?;
    let mag: Vec<f64> = spec.bins.iter().map(|c| c.norm()).collect();
    let (hm, pm) = masks(&mag, spec.n_frames, spec.n_bins);
    let h = istft_padded(&apply_mask(&spec, &hm), x.len());
    let p = istft_padded(&apply_mask(&spec, &pm), x.len());
    Ok((h, p))
}

/// Splits `w` into sustained (harmonic) and transient (percussive) parts.
pub fn hpss(w: &Waveform) -> Result<(Waveform, Waveform)> {
    if w.frames() < FRAME_LENGTH {
        return Err(Error::InputTooShort { needed: FRAME_LENGTH, got: w.frames() });
    }
    let parts = w
        .split_channels()
        .iter()
        .map(|c| separate_channel(c))
        .collect::<Result<Vec<_>>>()?;
    let (h, p): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    Ok((
        Waveform::from_channels(&h, w.sample_rate())?,
        Waveform::from_channels(&p, w.sample_rate())?,
    ))
}
