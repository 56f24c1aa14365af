use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Comparison window.
    pub window_s: f64,
    /// Relative RMS difference below which a window counts as unchanged.
    pub tolerance: f64,
    /// Length of the excerpt used to find where the rendered audio has
    /// rejoined the original.
    pub realign_s: f64,
    /// Decimation of the coarse cross-correlation.
    pub decimation: usize,
    /// Deviations closer than this are one event.
    pub merge_gap_s: f64,
    /// How long after a deviation ends the simulated listener clicks.
    pub click_delay_s: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { window_s: 0.1, tolerance: 1e-3, realign_s: 0.5, decimation: 8, merge_gap_s: 3.0, click_delay_s: 1.0 }
    }
}

/// A stretch of rendered audio that does not match the original.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub start_s: f64,
    pub end_s: f64,
    /// Sum of squared differences (mono) against the original as it would
    /// have continued from just before the deviation, over `frames`
    /// frames (at least one window).
    pub energy: f64,
    pub frames: usize,
}

impl Deviation {
    /// RMS difference from the original over the deviation.
    pub fn rms(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            (self.energy / self.frames as f64).sqrt()
        }
    }
}

struct Realigner {
    orig: Vec<f64>,
    coarse: Vec<f64>,
    /// Prefix sums of squared coarse samples.
    energy: Vec<f64>,
    spectrum: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    query: usize,
    dec: usize,
}

impl Realigner {
    fn new(orig: Vec<f64>, query_native: usize, dec: usize) -> Self {
        let coarse: Vec<f64> = orig.chunks(dec).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let query = (query_native / dec).max(8);
        let n = (coarse.len() + query).next_power_of_two();
        let mut planner = FftPlanner::new();
        let (forward, inverse) = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
        let mut spectrum: Vec<Complex<f64>> = coarse.iter().map(|&v| Complex::new(v, 0.0)).collect();
        spectrum.resize(n, Complex::new(0.0, 0.0));
        forward.process(&mut spectrum);
        let mut energy = vec![0.0; coarse.len() + 1];
        for (i, v) in coarse.iter().enumerate() {
            energy[i + 1] = energy[i] + v * v;
        }
        Self { orig, coarse, energy, spectrum, forward, inverse, query, dec }
    }

    /// Best original position for the rendered excerpt starting at `r`,
    /// by normalised cross-correlation on the coarse signals. Near ties
    /// (repeated material) go to the position closest to `expected`.
    fn coarse_match(&self, rendered: &[f64], r: usize, expected: usize) -> Option<usize> {
        let q: Vec<f64> = rendered[r.min(rendered.len())..]
            .chunks(self.dec)
            .take(self.query)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let m = q.len();
        let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if m < 8 || m > self.coarse.len() || qn < 1e-9 {
            return None;
        }
        let n = self.spectrum.len();
        let mut buf: Vec<Complex<f64>> = q.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(n, Complex::new(0.0, 0.0));
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b = s * b.conj();
        }
        self.inverse.process(&mut buf);
        let ncc: Vec<(usize, f64)> = (0..=self.coarse.len() - m)
            .filter_map(|k| {
                let e = (self.energy[k + m] - self.energy[k]).sqrt();
                (e >= 1e-9).then(|| (k, buf[k].re / n as f64 / (qn * e)))
            })
            .collect();
        let best = ncc.iter().map(|c| c.1).fold(f64::MIN, f64::max);
        ncc.iter()
            .filter(|c| c.1 >= best - 1e-3)
            .map(|c| c.0 * self.dec)
            .min_by_key(|&p| p.abs_diff(expected))
    }
}

fn to_mono_f64(w: &Waveform) -> Vec<f64> {
    w.to_mono().samples().iter().map(|&v| v as f64).collect()
}

fn sq_diff(x: &[f64], y: &[f64], q: isize) -> Option<(f64, f64)> {
    if q < 0 || q as usize + x.len() > y.len() {
        return None;
    }
    let y = &y[q as usize..q as usize + x.len()];
    Some(x.iter().zip(y).fold((0.0, 0.0), |(d, e), (a, b)| (d + (a - b) * (a - b), e + b * b)))
}

/// Finds the stretches where `rendered` departs from `original`.
///
/// The two are compared window by window at a running offset. A window
/// that does not match starts (or extends) a deviation; each mismatching
/// window also tries to find where in the original the rendered audio has
/// resumed, so inserts, cuts and jumps are followed. Any change of offset
/// is itself a deviation.
pub fn detect(original: &Waveform, rendered: &Waveform, cfg: &DetectorConfig) -> Result<Vec<Deviation>> {
    if original.sample_rate() != rendered.sample_rate() {
        return Err(Error::Parameter("original and rendered audio have different sample rates".into()));
    }
    let sr = original.sample_rate() as f64;
    let (y, x) = (to_mono_f64(original), to_mono_f64(rendered));
    let w = ((cfg.window_s * sr).round() as usize).max(1);
    let realign = Realigner::new(y, (cfg.realign_s * sr).round() as usize, cfg.decimation.max(1));
    let y = &realign.orig;
    let tol2 = cfg.tolerance * cfg.tolerance;
    let matches = |r: usize, off: isize| -> Option<f64> {
        let end = (r + w).min(x.len());
        let (d, e) = sq_diff(&x[r..end], y, r as isize - off)?;
        let n = (end - r) as f64;
        let floor = 1e-8 * n;
        (d <= tol2 * e.max(floor)).then_some(d)
    };

    // (start, end) in rendered frames, and the offset in force before each.
    let mut runs: Vec<(usize, usize, isize)> = Vec::new();
    let mut open: Option<(usize, isize)> = None;
    let mut off: isize = 0;
    let mut r = 0;
    while r < x.len() {
        if matches(r, off).is_some() {
            if let Some((s, o)) = open.take() {
                runs.push((s, r, o));
            }
        } else {
            let start = *open.get_or_insert((r, off));
            let expected = (r as isize - off).max(0) as usize;
            let found = realign.coarse_match(&x, r, expected).and_then(|p| {
                let span = 2 * realign.dec as isize;
                (p as isize - span..=p as isize + span)
                    .filter_map(|q| matches(r, r as isize - q).map(|d| (d, r as isize - q)))
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|(_, o)| o)
            });
            if let Some(o) = found {
                off = o;
                runs.push((start.0, r, start.1));
                open = None;
            }
        }
        r += w;
    }
    if let Some((s, o)) = open {
        runs.push((s, x.len(), o));
    }

    let gap = (cfg.merge_gap_s * sr) as usize;
    let mut merged: Vec<(usize, usize, isize)> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            Some(last) if run.0 <= last.1 + gap => last.1 = last.1.max(run.1),
            _ => merged.push(run),
        }
    }
    Ok(merged
        .into_iter()
        .map(|(s, e, o)| {
            let stop = e.max(s + w).min(x.len());
            let energy = (s..stop)
                .map(|n| {
                    let q = n as isize - o;
                    let yv = if q >= 0 && (q as usize) < y.len() { y[q as usize] } else { 0.0 };
                    (x[n] - yv) * (x[n] - yv)
                })
                .sum();
            Deviation { start_s: s as f64 / sr, end_s: e as f64 / sr, energy, frames: stop - s }
        })
        .collect())
}

/// One click per deviation, `click_delay_s` after it ends.
pub fn clicks(deviations: &[Deviation], cfg: &DetectorConfig) -> Vec<f64> {
    deviations.iter().map(|d| d.end_s + cfg.click_delay_s).collect()
}
