//! Dynamic-programming beat tracking over an onset envelope.

use crate::dsp::Envelope;

/// Weight of the log-interval penalty, in normalised envelope units.
pub const TIGHTNESS: f64 = 100.0;

/// Inter-beat intervals considered for a target `period` (frames).
pub fn interval_range(period: f64) -> (usize, usize) {
    let lo = ((period / 2.0).round() as usize).max(1);
    let hi = ((2.0 * period).round() as usize).max(lo);
    (lo, hi)
}

fn transition_cost(interval: usize, period: f64, tightness: f64) -> f64 {
    let l = (interval as f64 / period).ln();
    tightness * l * l
}

/// Objective of a beat sequence: summed onset values minus interval
/// penalties. `None` when an interval falls outside [`interval_range`].
pub fn sequence_score(values: &[f64], beats: &[usize], period: f64, tightness: f64) -> Option<f64> {
    let (lo, hi) = interval_range(period);
    let mut total = 0.0;
    for (k, &b) in beats.iter().enumerate() {
        total += values[b];
        if k > 0 {
            let d = b.checked_sub(beats[k - 1])?;
            if d < lo || d > hi {
                return None;
            }
            total -= transition_cost(d, period, tightness);
        }
    }
    Some(total)
}

/// Best-scoring beat frames and their score.
///
/// `C[t] = v[t] + max(0, max_τ C[τ] - λ·ln²((t-τ)/p))`; the sequence ends at
/// the best `C`. Ties resolve to the lowest index.
pub fn best_sequence(values: &[f64], period: f64, tightness: f64) -> (Vec<usize>, f64) {
    let n = values.len();
    if n == 0 {
        return (vec![], 0.0);
    }
    let (lo, hi) = interval_range(period);
    let mut score = vec![0.0; n];
    let mut back: Vec<Option<usize>> = vec![None; n];
    for t in 0..n {
        let mut best = 0.0;
        let mut arg = None;
        if t >= lo {
            for tau in t.saturating_sub(hi)..=t - lo {
                let s = score[tau] - transition_cost(t - tau, period, tightness);
                if s > best {
                    best = s;
                    arg = Some(tau);
                }
            }
        }
        score[t] = values[t] + best;
        back[t] = arg;
    }
    let mut end = 0;
    for t in 1..n {
        if score[t] > score[end] {
            end = t;
        }
    }
    let mut beats = vec![end];
    while let Some(p) = back[*beats.last().unwrap()] {
        beats.push(p);
    }
    beats.reverse();
    (beats, score[end])
}

/// Beat positions in samples for an onset envelope and a tempo hint.
/// Silent envelopes yield no beats.
pub fn track_beats(onset: &Envelope, tempo_bpm: f64) -> Vec<usize> {
    let n = onset.len();
    if n < 2 || !(tempo_bpm > 0.0) {
        return vec![];
    }
    let mean = onset.values.iter().sum::<f64>() / n as f64;
    let var = onset.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 1e-12) || onset.values.iter().all(|&v| v <= 0.0) {
        return vec![];
    }
    let values: Vec<f64> = onset.values.iter().map(|v| v / sd).collect();
    let period = 60.0 * onset.rate() / tempo_bpm;
    let (frames, _) = best_sequence(&values, period, TIGHTNESS);
    frames.into_iter().map(|f| onset.time_of(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Waveform;
    use crate::dsp::{onset_strength, stft};
    use proptest::prelude::*;

    /// Best score over every non-empty subset of frames.
    fn exhaustive(values: &[f64], period: f64, tightness: f64) -> f64 {
        let n = values.len();
        let mut best = f64::NEG_INFINITY;
        for mask in 1u32..(1 << n) {
            let beats: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            if let Some(s) = sequence_score(values, &beats, period, tightness) {
                best = best.max(s);
            }
        }
        best
    }

    #[test]
    fn ten_frame_envelope_matches_exhaustive() {
        let v = [0.2, 3.0, 0.1, 0.4, 2.5, 0.0, 0.3, 2.8, 0.2, 1.0];
        let (beats, s) = best_sequence(&v, 3.0, TIGHTNESS);
        assert!((s - exhaustive(&v, 3.0, TIGHTNESS)).abs() < 1e-9);
        assert_eq!(sequence_score(&v, &beats, 3.0, TIGHTNESS).unwrap(), s);
        assert_eq!(beats, vec![1, 4, 7]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn dp_is_optimal(values in proptest::collection::vec(0.0f64..5.0, 1..=12), period in 1.0f64..5.0, tight in prop_oneof![Just(TIGHTNESS), 0.0f64..10.0]) {
            let (beats, s) = best_sequence(&values, period, tight);
            let oracle = exhaustive(&values, period, tight);
            prop_assert!((s - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()), "dp {} oracle {}", s, oracle);
            let recomputed = sequence_score(&values, &beats, period, tight).unwrap();
            prop_assert!((recomputed - s).abs() <= 1e-9 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn click_track_at_120() {
        let sr = 22050;
        let mut x = vec![0.0f32; sr * 20];
        let clicks: Vec<usize> = (0..40).map(|k| sr / 4 + k * sr / 2).collect();
        for &c in &clicks {
            for k in 0..32 {
                x[c + k] = if k % 2 == 0 { 0.8 } else { -0.8 };
            }
        }
        let env = onset_strength(&stft(&Waveform::mono(x, sr as u32), 2048, 512).unwrap());
        let beats = track_beats(&env, 120.0);
        assert!(beats.len() >= 38, "{}", beats.len());
        for w in beats.windows(2) {
            let d = w[1] as i64 - w[0] as i64;
            assert!((d - sr as i64 / 2).abs() <= 512, "interval {d}");
        }
        for b in &beats {
            let nearest = clicks.iter().map(|&c| (*b as i64 - c as i64).abs()).min().unwrap();
            assert!(nearest <= 512, "beat {b} off by {nearest}");
        }
    }

    #[test]
    fn silence_has_no_beats() {
        let env = onset_strength(&stft(&Waveform::mono(vec![0.0; 22050 * 5], 22050), 2048, 512).unwrap());
        assert!(track_beats(&env, 120.0).is_empty());
    }
}
