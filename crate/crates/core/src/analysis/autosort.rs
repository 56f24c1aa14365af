//! Rhythm- and repetition-based category fallback for unlabelled tracks.

use serde::{Deserialize, Serialize};

use super::beats::track_beats;
use super::genre::GenreCategory;
use super::jumps::{build_jump_graph, JumpThreshold};
use super::overlay::peak_near;
use super::tempo::{dynamic_tempo, TempoSettings};
use crate::audio::Waveform;
use crate::dsp::{chroma, hpss, mfcc, onset_strength, stft, Envelope, FRAME_LENGTH, HOP_LENGTH, N_MELS, N_MFCC};
use crate::error::{param, Result};

/// Decision thresholds. Onset thresholds are in units of the track's mean
/// percussive onset strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoSortThresholds {
    pub r1: f64,
    pub r2: f64,
    pub s1: f64,
    pub s2: f64,
    pub p1: usize,
}

impl Default for AutoSortThresholds {
    fn default() -> Self {
        Self { r1: 2.0, r2: 6.0, s1: 0.5, s2: 0.25, p1: 12 }
    }
}

impl AutoSortThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.r1 > 0.0 && self.r2 > self.r1) {
            return Err(param(format!("need 0 < r1 < r2, got r1={} r2={}", self.r1, self.r2)));
        }
        if !(self.s2 > 0.0 && self.s2 <= self.s1 && self.s1 < 1.0) {
            return Err(param(format!("need 0 < s2 <= s1 < 1, got s1={} s2={}", self.s1, self.s2)));
        }
        Ok(())
    }
}

/// Measurements the decision tree runs on.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RhythmStats {
    pub beats: usize,
    /// Share of beats with normalised percussive onset `>= r1`.
    pub strong_frac: f64,
    /// Share of beats with normalised percussive onset `>= r2`.
    pub extreme_frac: f64,
    pub unique_candidates: usize,
}

/// The category tree. Total over every input.
pub fn decide(stats: &RhythmStats, t: &AutoSortThresholds) -> GenreCategory {
    let rhythmic = stats.strong_frac >= t.s1;
    let strongly = rhythmic && stats.extreme_frac >= t.s2;
    let repetitive = stats.unique_candidates >= t.p1;
    match (rhythmic, strongly, repetitive) {
        (true, true, _) => GenreCategory::Blues,
        (true, false, true) => GenreCategory::Pop,
        (true, false, false) => GenreCategory::Jazz,
        (false, _, _) => GenreCategory::Classical,
    }
}

/// Beat-wise strong/extreme fractions of a percussive onset envelope.
pub fn onset_fractions(percussive_onset: &Envelope, beats: &[usize], t: &AutoSortThresholds) -> (f64, f64) {
    if beats.is_empty() {
        return (0.0, 0.0);
    }
    let mean = percussive_onset.values.iter().sum::<f64>() / percussive_onset.len().max(1) as f64;
    if !(mean > 0.0) {
        return (0.0, 0.0);
    }
    let norm: Vec<f64> = beats.iter().map(|&b| peak_near(percussive_onset, b) / mean).collect();
    let frac = |th: f64| norm.iter().filter(|&&v| v >= th).count() as f64 / norm.len() as f64;
    (frac(t.r1), frac(t.r2))
}

/// Classifies a track from its audio alone.
pub fn auto_sort(w: &Waveform, t: &AutoSortThresholds) -> Result<(GenreCategory, RhythmStats)> {
    let mono = w.to_mono().resampled(crate::dsp::ANALYSIS_RATE);
    let spec = stft(&mono, FRAME_LENGTH, HOP_LENGTH)?;
    let onset = onset_strength(&spec);
    let tempo = dynamic_tempo(&onset, &TempoSettings::default())?;
    let beats = if tempo.low_confidence { vec![] } else { track_beats(&onset, tempo.median()) };
    let (_, perc) = hpss(&mono)?;
    let p_onset = onset_strength(&stft(&perc, FRAME_LENGTH, HOP_LENGTH)?);
    let graph = build_jump_graph(&mfcc(&spec, N_MELS, N_MFCC)?, &chroma(&spec), &beats, mono.frames(), JumpThreshold::default());
    let (strong_frac, extreme_frac) = onset_fractions(&p_onset, &beats, t);
    let stats = RhythmStats { beats: beats.len(), strong_frac, extreme_frac, unique_candidates: graph.unique_candidates() };
    Ok((decide(&stats, t), stats))
}
