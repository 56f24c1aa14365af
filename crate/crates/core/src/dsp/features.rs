//! Frame-level features derived from a magnitude spectrogram.

use std::f64::consts::PI;

use super::stft::Spectrogram;
use crate::error::{param, Result};
use crate::exec;

/// Row-major time × feature matrix sharing the spectrogram's frame clock.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    hop_length: usize,
    frame_length: usize,
    sample_rate: u32,
}

impl FeatureMatrix {
    pub fn new(
        rows: Vec<Vec<f64>>,
        hop_length: usize,
        frame_length: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(param("ragged feature rows"));
        }
        Ok(Self {
            n_rows: rows.len(),
            data: rows.concat(),
            n_cols,
            hop_length,
            frame_length,
            sample_rate,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
    pub fn hop_length(&self) -> usize {
        self.hop_length
    }
    pub fn frame_length(&self) -> usize {
        self.frame_length
    }
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_cols..(t + 1) * self.n_cols]
    }
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1)).take(self.n_rows)
    }
    /// Sample index at the centre of frame `t`.
    pub fn frame_center(&self, t: usize) -> usize {
        t * self.hop_length + self.frame_length / 2
    }
    /// Frame whose centre is closest to sample `s`, clamped to the matrix.
    pub fn frame_at(&self, s: usize) -> usize {
        let half = self.frame_length / 2;
        let t = ((s as f64 - half as f64) / self.hop_length as f64).round().max(0.0) as usize;
        t.min(self.n_rows.saturating_sub(1))
    }
    /// Column-wise mean over frames `[a, b)`; zeros when empty.
    pub fn mean_rows(&self, a: usize, b: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.n_cols];
        let b = b.min(self.n_rows);
        if a >= b {
            return m;
        }
        for t in a..b {
            for (acc, v) in m.iter_mut().zip(self.row(t)) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= (b - a) as f64);
        m
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters spanning 0 Hz to Nyquist, each normalised to unit
/// sum over the discrete bins.
pub fn mel_filterbank(n_mels: usize, frame_length: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let n_bins = frame_length / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * sample_rate as f64 / frame_length as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut w: Vec<f64> = (0..n_bins)
                .map(|k| {
                    let f = bin_hz(k);
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect();
            let sum: f64 = w.iter().sum();
            if sum > 0.0 {
                w.iter_mut().for_each(|v| *v /= sum);
            } else {
                let k = ((mid / bin_hz(1)).round() as usize).min(n_bins - 1);
                w[k] = 1.0;
            }
            w
        })
        .collect()
}

/// Orthonormal type-II DCT, first `n_out` coefficients.
pub(crate) fn dct2(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                .sum();
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * scale
        })
        .collect()
}

/// Mel-frequency cepstral coefficients: log mel power followed by a DCT-II,
/// coefficient 0 kept.
pub fn mfcc(s: &Spectrogram, n_mels: usize, n_coeffs: usize) -> Result<FeatureMatrix> {
    if n_coeffs < 2 || n_mels < n_coeffs {
        return Err(param(format!(
            "need n_mels >= n_coeffs >= 2, got n_mels={n_mels} n_coeffs={n_coeffs}"
        )));
    }
    let bank = mel_filterbank(n_mels, s.frame_length(), s.sample_rate());
    let rows = exec::map_range(s.n_frames(), |t| {
        let frame = s.frame(t);
        let log_mel: Vec<f64> = bank
            .iter()
            .map(|w| {
                let e: f64 = w.iter().zip(frame).map(|(a, m)| a * m * m).sum();
                e.max(1e-10).ln()
            })
            .collect();
        dct2(&log_mel, n_coeffs)
    });
    FeatureMatrix::new(rows, s.hop_length(), s.frame_length(), s.sample_rate())
}

/// Twelve-bin pitch-class profile per frame (power folded onto semitone
/// classes between 55 Hz and 5 kHz), each row scaled to unit maximum.
pub fn chroma(s: &Spectrogram) -> FeatureMatrix {
    let classes: Vec<Option<usize>> = (0..s.n_bins())
        .map(|k| {
            let f = s.bin_hz(k);
            (55.0..=5000.0).contains(&f).then(|| {
                let semis = (12.0 * (f / 440.0).log2()).round() as i64;
                (semis + 9).rem_euclid(12) as usize
            })
        })
        .collect();
    let rows = exec::map_range(s.n_frames(), |t| {
        let mut c = vec![0.0; 12];
        for (m, pc) in s.frame(t).iter().zip(&classes) {
            if let Some(pc) = pc {
                c[*pc] += m * m;
            }
        }
        let max = c.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            c.iter_mut().for_each(|v| *v /= max);
        }
        c
    });
    FeatureMatrix::new(rows, s.hop_length(), s.frame_length(), s.sample_rate())
        .expect("chroma rows are uniform")
}

/// Spectral flatness (geometric / arithmetic mean of power) per frame.
/// Silent frames report 1.0.
pub fn spectral_flatness(s: &Spectrogram) -> Vec<f64> {
    exec::map_range(s.n_frames(), |t| {
        let frame = s.frame(t);
        let eps = 1e-12;
        let n = frame.len() as f64;
        let log_mean = frame.iter().map(|m| (m * m + eps).ln()).sum::<f64>() / n;
        let mean = frame.iter().map(|m| m * m + eps).sum::<f64>() / n;
        (log_mean.exp() / mean).min(1.0)
    })
}
