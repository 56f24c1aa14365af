use crate::audio::Waveform;
use crate::dsp::{onset_strength, stft, Envelope, FRAME_LENGTH, HOP_LENGTH};
use crate::error::{Error, Result};

pub const MIN_OVERLAY_BEATS: usize = 4;

/// A beat-aligned excerpt of the percussive component.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlaySelection {
    pub waveform: Waveform,
    /// Sample span `[start, end)` in the source.
    pub start: usize,
    pub end: usize,
    /// Beat indices bounding the span.
    pub first_beat: usize,
    pub last_beat: usize,
}

/// Envelope peak within one frame of `sample`.
pub(crate) fn peak_near(env: &Envelope, sample: usize) -> f64 {
    if env.is_empty() {
        return 0.0;
    }
    let i = env.index_at(sample);
    let lo = i.saturating_sub(1);
    let hi = (i + 1).min(env.len() - 1);
    env.values[lo..=hi].iter().cloned().fold(0.0, f64::max)
}

/// Picks the run of beats, about `target_s` long, with the most percussive
/// onset energy.
pub fn select_overlay(percussive: &Waveform, beats: &[usize], target_s: f64) -> Result<OverlaySelection> {
    if beats.len() < MIN_OVERLAY_BEATS {
        return Err(Error::InsufficientRhythm(format!(
            "{} beats, overlay needs {MIN_OVERLAY_BEATS}",
            beats.len()
        )));
    }
    let mono = percussive.to_mono();
    let env = onset_strength(&stft(&mono, FRAME_LENGTH, HOP_LENGTH)?);
    let strength: Vec<f64> = beats.iter().map(|&b| peak_near(&env, b)).collect();
    let target = target_s * mono.sample_rate() as f64;

    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..beats.len() - 1 {
        let mut j_best = i + 1;
        for j in i + 1..beats.len() {
            let d = ((beats[j] - beats[i]) as f64 - target).abs();
            if d < ((beats[j_best] - beats[i]) as f64 - target).abs() {
                j_best = j;
            }
        }
        let score: f64 = strength[i..j_best].iter().sum();
        if best.map_or(true, |(s, _, _)| score > s) {
            best = Some((score, i, j_best));
        }
    }
    let (_, i, j) = best.expect("at least two beats");
    let (start, end) = (beats[i], beats[j].min(mono.frames()));
    Ok(OverlaySelection {
        waveform: mono.slice(start, end),
        start,
        end,
        first_beat: i,
        last_beat: j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SR: usize = 22050;

    fn clicks(beats: &[usize], amps: &[f32], len: usize) -> Waveform {
        let mut x = vec![0.0f32; len];
        for (&b, &a) in beats.iter().zip(amps) {
            for k in 0..32 {
                if b + k < len {
                    x[b + k] = if k % 2 == 0 { a } else { -a };
                }
            }
        }
        Waveform::mono(x, SR as u32)
    }

    #[test]
    fn loud_bar_is_selected() {
        let beats: Vec<usize> = (0..32).map(|k| SR / 4 + k * SR / 2).collect();
        // Beats 12..16 form the loud bar.
        let amps: Vec<f32> = (0..32).map(|k| if (12..16).contains(&k) { 0.9 } else { 0.05 }).collect();
        let w = clicks(&beats, &amps, SR * 17);
        let o = select_overlay(&w, &beats, 1.5).unwrap();
        let (bar_start, bar_end) = (beats[12], beats[15] + SR / 2);
        assert!(o.start < bar_end && o.end > bar_start, "{}..{}", o.start, o.end);
    }

    #[test]
    fn uniform_track_span_in_range() {
        let beats: Vec<usize> = (0..20).map(|k| SR / 4 + k * SR / 2).collect();
        let w = clicks(&beats, &[0.5; 20], SR * 11);
        let o = select_overlay(&w, &beats, 1.5).unwrap();
        let secs = (o.end - o.start) as f64 / SR as f64;
        assert!((1.0..=2.0).contains(&secs), "{secs}");
        assert_eq!(o.waveform.frames(), o.end - o.start);
    }

    #[test]
    fn three_beats_is_an_error() {
        let w = Waveform::mono(vec![0.0; SR * 3], SR as u32);
        assert!(matches!(select_overlay(&w, &[100, 11000, 22000], 1.5), Err(Error::InsufficientRhythm(_))));
    }
}
