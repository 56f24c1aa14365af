//! Choice of a short, steady, tonal excerpt to insert verbatim as an alert.

use crate::audio::Waveform;
use crate::dsp::{amplitude_envelope, mfcc, spectral_flatness, stft, taper_window, FeatureMatrix, FRAME_LENGTH, HOP_LENGTH, N_MELS, N_MFCC};
use crate::error::{Error, Result};

/// Fade applied to each end of the alert excerpt.
pub const ALERT_TAPER: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct AlertSelection {
    pub waveform: Waveform,
    pub start: usize,
}

/// Frame-level inputs to alert scoring.
pub struct AlertFeatures<'a> {
    pub mfcc: &'a FeatureMatrix,
    pub flatness: &'a [f64],
    pub rms: &'a [f64],
}

fn zscores(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd <= 1e-9 * (1.0 + mean.abs()) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - mean) / sd).collect()
}

/// Scores candidate windows and returns the start of the winner.
pub fn best_alert_start(f: &AlertFeatures, track_len: usize, bounds: &[usize], alert_len: usize) -> Result<usize> {
    if alert_len == 0 || track_len < 2 * alert_len {
        return Err(Error::InputTooShort { needed: 2 * alert_len.max(1), got: track_len });
    }
    let sr = f.mfcc.sample_rate() as usize;
    let mut starts: Vec<usize> = bounds.iter().copied().chain((0..).map(|k| k * sr).take_while(|&s| s < track_len)).collect();
    starts.retain(|&s| s + alert_len <= track_len);
    starts.sort_unstable();
    starts.dedup();

    let mut median_rms = f.rms.to_vec();
    median_rms.sort_by(f64::total_cmp);
    let median_rms = median_rms.get(median_rms.len() / 2).copied().unwrap_or(0.0);

    let n_frames = f.mfcc.n_rows();
    let mut homog = vec![];
    let mut mono = vec![];
    let mut energy = vec![];
    for &s in &starts {
        let a = f.mfcc.frame_at(s).min(n_frames.saturating_sub(1));
        let z = f.mfcc.frame_at(s + alert_len).max(a + 1).min(n_frames);
        let steps: Vec<f64> = (a + 1..z)
            .map(|t| f.mfcc.row(t).iter().zip(f.mfcc.row(t - 1)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
            .collect();
        homog.push(-(steps.iter().sum::<f64>() / steps.len().max(1) as f64));
        let fl = &f.flatness[a.min(f.flatness.len())..z.min(f.flatness.len())];
        mono.push(-(fl.iter().sum::<f64>() / fl.len().max(1) as f64));
        let r = &f.rms[a.min(f.rms.len())..z.min(f.rms.len())];
        let mean_r = r.iter().sum::<f64>() / r.len().max(1) as f64;
        energy.push(if median_rms > 0.0 { (mean_r / median_rms).min(1.0) } else { 0.0 });
    }
    let (h, m, e) = (zscores(&homog), zscores(&mono), zscores(&energy));
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..starts.len() {
        let score = h[i] + m[i] + e[i];
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    Ok(starts[best])
}

/// Cuts the best-scoring window of exactly `alert_len` samples from `w`
/// (analysis-rate audio) and tapers its ends.
pub fn select_alert_segment(w: &Waveform, bounds: &[usize], alert_len: usize) -> Result<AlertSelection> {
    let mono = w.to_mono();
    if alert_len == 0 || mono.frames() < 2 * alert_len {
        return Err(Error::InputTooShort { needed: 2 * alert_len.max(1), got: mono.frames() });
    }
    let spec = stft(&mono, FRAME_LENGTH, HOP_LENGTH)?;
    let m = mfcc(&spec, N_MELS, N_MFCC)?;
    let flat = spectral_flatness(&spec);
    let rms = amplitude_envelope(&mono, FRAME_LENGTH, HOP_LENGTH)?;
    let f = AlertFeatures { mfcc: &m, flatness: &flat, rms: &rms.values };
    let start = best_alert_start(&f, mono.frames(), bounds, alert_len)?;
    Ok(AlertSelection { waveform: taper_window(&mono.slice(start, start + alert_len), ALERT_TAPER)?, start })
}
