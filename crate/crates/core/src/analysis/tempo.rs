use serde::{Deserialize, Serialize};

use crate::dsp::{lowpass_smooth, Envelope};
use crate::error::Result;

/// Settings for the windowed autocorrelation tempo estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempoSettings {
    pub window_s: f64,
    pub hop_s: f64,
    pub min_bpm: f64,
    pub max_bpm: f64,
    pub smoothing_hz: f64,
}

impl Default for TempoSettings {
    fn default() -> Self {
        Self { window_s: 8.0, hop_s: 1.0, min_bpm: 40.0, max_bpm: 200.0, smoothing_hz: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TempoCurve {
    /// Smoothed BPM on the onset envelope's timeline.
    pub bpm: Envelope,
    /// 5th percentile of the smoothed curve.
    pub min: f64,
    /// 95th percentile of the smoothed curve.
    pub max: f64,
    /// No window carried usable periodicity; the curve is the floor.
    pub low_confidence: bool,
}

impl TempoCurve {
    pub fn median(&self) -> f64 {
        percentile(&self.bpm.values, 50.0)
    }
}

/// Linear-interpolated percentile of unsorted data; 0 for empty input.
pub fn percentile(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

/// Log-normal preference around 120 BPM, one octave wide.
fn tempo_prior(bpm: f64) -> f64 {
    let o = (bpm / 120.0).log2();
    (-0.5 * o * o).exp()
}

/// Tempo of one window of onset values, or `None` when it has no
/// periodicity to speak of.
fn window_tempo(x: &[f64], fps: f64, s: &TempoSettings) -> Option<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let acf = |lag: usize| -> f64 {
        if lag >= n {
            return 0.0;
        }
        c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
    };
    let energy = acf(0);
    if energy <= 1e-12 {
        return None;
    }
    let lag_lo = (60.0 * fps / s.max_bpm).floor().max(1.0) as usize;
    let lag_hi = (60.0 * fps / s.min_bpm).ceil() as usize;
    let score = |lag: usize| acf(lag) * tempo_prior(60.0 * fps / lag as f64);
    let scores: Vec<f64> = (lag_lo - 1..=lag_hi + 1).map(score).collect();
    let mut best: Option<(usize, f64)> = None;
    for i in 1..scores.len() - 1 {
        let lag = lag_lo - 1 + i;
        if lag < lag_lo || lag > lag_hi {
            continue;
        }
        let v = scores[i];
        if v > 0.0 && v >= scores[i - 1] && v >= scores[i + 1] && best.map_or(true, |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    let (i, _) = best?;
    let (a, b, c) = (scores[i - 1], scores[i], scores[i + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-15 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let lag = (lag_lo - 1 + i) as f64 + shift;
    Some((60.0 * fps / lag).clamp(s.min_bpm, s.max_bpm))
}

/// Windowed autocorrelation tempo, interpolated onto the envelope timeline
/// and low-pass smoothed. A track with no periodic onsets gets a flat curve
/// at the minimum tempo.
pub fn dynamic_tempo(onset: &Envelope, s: &TempoSettings) -> Result<TempoCurve> {
    let n = onset.len();
    let floor_curve = || TempoCurve {
        bpm: onset.with_values(vec![s.min_bpm; n]),
        min: s.min_bpm,
        max: s.min_bpm,
        low_confidence: true,
    };
    if n == 0 {
        return Ok(floor_curve());
    }
    let fps = onset.rate();
    let win = ((s.window_s * fps).round() as usize).max(2);
    let hop = ((s.hop_s * fps).round() as usize).max(1);
    let mut starts: Vec<usize> = if n <= win { vec![0] } else { (0..=n - win).step_by(hop).collect() };
    if n > win && starts.last().map_or(false, |&l| l + win < n) {
        starts.push(n - win);
    }
    let estimates: Vec<(f64, Option<f64>)> = starts
        .iter()
        .map(|&a| {
            let b = (a + win).min(n);
            ((a + b) as f64 / 2.0, window_tempo(&onset.values[a..b], fps, s))
        })
        .collect();
    if estimates.iter().all(|(_, t)| t.is_none()) {
        return Ok(floor_curve());
    }
    // Silent windows borrow the nearest estimate.
    let filled: Vec<(f64, f64)> = estimates
        .iter()
        .enumerate()
        .map(|(i, &(c, t))| {
            let t = t.unwrap_or_else(|| {
                (1..estimates.len())
                    .flat_map(|d| [i.checked_sub(d), Some(i + d)])
                    .flatten()
                    .find_map(|j| estimates.get(j).and_then(|e| e.1))
                    .expect("at least one estimate")
            });
            (c, t)
        })
        .collect();
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64;
            if filled.len() == 1 {
                return filled[0].1;
            }
            // Beyond the outermost window centres the end segments are
            // extended as lines; a flat hold would make the smoother ring.
            let k = filled.iter().position(|&(c, _)| c >= x).unwrap_or(filled.len() - 1).max(1);
            let (c0, t0) = filled[k - 1];
            let (c1, t1) = filled[k];
            (t0 + (t1 - t0) * (x - c0) / (c1 - c0)).clamp(s.min_bpm, s.max_bpm)
        })
        .collect();
    let raw = onset.with_values(raw);
    let smoothed = if n >= 2 && s.smoothing_hz < fps / 2.0 { lowpass_smooth(&raw, s.smoothing_hz)? } else { raw };
    Ok(TempoCurve {
        min: percentile(&smoothed.values, 5.0),
        max: percentile(&smoothed.values, 95.0),
        bpm: smoothed,
        low_confidence: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Waveform;
    use crate::dsp::{onset_strength, stft};

    fn click_track(times: &[f64], dur_s: f64) -> Waveform {
        let sr = 22050.0;
        let mut x = vec![0.0f32; (dur_s * sr) as usize];
        for &t in times {
            let i = (t * sr) as usize;
            for k in 0..64 {
                if i + k < x.len() {
                    x[i + k] += (0.9 * (-(k as f64) / 12.0).exp()) as f32 * if k % 2 == 0 { 1.0 } else { -1.0 };
                }
            }
        }
        Waveform::mono(x, 22050)
    }

    fn onset(w: &Waveform) -> Envelope {
        onset_strength(&stft(w, 2048, 512).unwrap())
    }

    #[test]
    fn steady_click_track() {
        let times: Vec<f64> = (0..60).map(|k| 0.25 + k as f64 * 0.5).collect();
        let curve = dynamic_tempo(&onset(&click_track(&times, 30.0)), &TempoSettings::default()).unwrap();
        assert!(!curve.low_confidence);
        for &v in &curve.bpm.values {
            assert!((v - 120.0).abs() <= 3.0, "{v}");
        }
    }

    #[test]
    fn accelerating_click_track() {
        // Tempo ramps linearly 100 -> 140 BPM over 60 s; clicks at integer
        // beat phase.
        let mut times = vec![];
        let (mut t, dt) = (0.1, 1e-3);
        let mut phase = 0.0;
        while t < 60.0 {
            let bpm = 100.0 + 40.0 * t / 60.0;
            phase += bpm / 60.0 * dt;
            if phase >= 1.0 {
                phase -= 1.0;
                times.push(t);
            }
            t += dt;
        }
        let curve = dynamic_tempo(&onset(&click_track(&times, 60.0)), &TempoSettings::default()).unwrap();
        let v = &curve.bpm.values;
        assert!(v.windows(2).all(|w| w[1] >= w[0] - 1e-9), "curve not monotone");
        assert!((v[0] - 100.0).abs() <= 5.0, "start {}", v[0]);
        assert!((v[v.len() - 1] - 140.0).abs() <= 5.0, "end {}", v[v.len() - 1]);
    }

    #[test]
    fn silence_is_low_confidence_floor() {
        let curve = dynamic_tempo(&onset(&Waveform::mono(vec![0.0; 22050 * 10], 22050)), &TempoSettings::default()).unwrap();
        assert!(curve.low_confidence);
        assert!(curve.bpm.values.iter().all(|&v| v == 40.0));
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0), 2.0);
        assert_eq!(percentile(&[0.0, 10.0], 25.0), 2.5);
    }
}
