//! The persisted per-track analysis and the pipeline that builds it.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::alert::{best_alert_start, AlertFeatures, ALERT_TAPER};
use super::autosort::{decide, onset_fractions, AutoSortThresholds, RhythmStats};
use super::beats::{track_beats, TIGHTNESS};
use super::curves::{CurveBounds, CurveSet};
use super::genre::{classify_keyword, GenreCategory};
use super::jumps::{build_jump_graph, JumpGraph, JumpThreshold};
use super::overlay::select_overlay;
use super::segment::segment_bounds;
use super::tempo::{dynamic_tempo, percentile, TempoSettings};
use crate::audio::Waveform;
use crate::dsp::{
    amplitude_envelope, chroma, hpss, lowpass_smooth, mfcc, onset_strength, spectral_flatness, stft, taper_window,
    ANALYSIS_RATE, FRAME_LENGTH, HOP_LENGTH, N_MELS, N_MFCC,
};
use crate::error::{param, Error, Result};

/// Bumped whenever the profile layout or the analysis changes meaning.
pub const PROFILE_VERSION: u32 = 1;

/// Percussion whose 90th-percentile frame RMS is below this fraction of the
/// track's median frame RMS (-40 dB) counts as absent.
pub const PERCUSSION_FLOOR: f64 = 0.01;

/// Fade on each end of the stored overlay excerpt.
pub const OVERLAY_TAPER: f64 = 0.05;

/// Every knob that influences a profile. Stored alongside it so a change
/// invalidates cached results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub analysis_rate: u32,
    pub frame_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub tempo: TempoSettings,
    pub beat_tightness: f64,
    pub min_segment_s: f64,
    pub overlay_duration_s: f64,
    pub alert_length_s: f64,
    pub jump_threshold: JumpThreshold,
    pub curve_bounds: CurveBounds,
    pub autosort: AutoSortThresholds,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            analysis_rate: ANALYSIS_RATE,
            frame_length: FRAME_LENGTH,
            hop_length: HOP_LENGTH,
            n_mels: N_MELS,
            n_mfcc: N_MFCC,
            tempo: TempoSettings::default(),
            beat_tightness: TIGHTNESS,
            min_segment_s: 5.0,
            overlay_duration_s: 1.5,
            alert_length_s: 1.0,
            jump_threshold: JumpThreshold::default(),
            curve_bounds: CurveBounds::default(),
            autosort: AutoSortThresholds::default(),
        }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<()> {
        if self.analysis_rate != ANALYSIS_RATE
            || self.frame_length != FRAME_LENGTH
            || self.hop_length != HOP_LENGTH
            || self.n_mels != N_MELS
            || self.n_mfcc != N_MFCC
        {
            return Err(param("frame, hop, rate and feature sizes are fixed"));
        }
        if self.beat_tightness != TIGHTNESS {
            return Err(param("beat tightness is fixed"));
        }
        if !(self.alert_length_s > 0.0 && self.overlay_duration_s > 0.0 && self.min_segment_s >= 0.0) {
            return Err(param("durations must be positive"));
        }
        let b = &self.curve_bounds;
        if b.delay_max_s < b.delay_min_s || b.echo_max < b.echo_min || b.rate_max < b.rate_min {
            return Err(param("curve bound max below min"));
        }
        self.autosort.validate()
    }
}

/// Audio stored inline as base64 little-endian `f32`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedAudio {
    pub sample_rate: u32,
    pub channels: u16,
    pub frames: usize,
    pub data: String,
}

impl EmbeddedAudio {
    pub fn encode(w: &Waveform) -> Self {
        let bytes: Vec<u8> = w.samples().iter().flat_map(|s| s.to_le_bytes()).collect();
        Self { sample_rate: w.sample_rate(), channels: w.channels(), frames: w.frames(), data: B64.encode(bytes) }
    }

    pub fn decode(&self) -> Result<Waveform> {
        let bytes = B64.decode(&self.data).map_err(|e| Error::Store(format!("bad embedded audio: {e}")))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Store("embedded audio length not a multiple of 4".into()));
        }
        let samples: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let w = Waveform::new(samples, self.sample_rate, self.channels)?;
        if w.frames() != self.frames {
            return Err(Error::Store("embedded audio frame count mismatch".into()));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRecord {
    /// Span in analysis-rate samples.
    pub start: usize,
    pub end: usize,
    pub first_beat: usize,
    pub last_beat: usize,
    /// Percussive excerpt at the track's native rate and channel count.
    pub audio: EmbeddedAudio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    /// Start in analysis-rate samples.
    pub start: usize,
    /// Tapered excerpt at the track's native rate and channel count.
    pub audio: EmbeddedAudio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategorySource {
    Keyword,
    Auto,
}

/// Everything the modification engine needs to know about one track.
///
/// Sample indices (`segment_bounds`, `beats`, spans) are at
/// `analysis_rate`; use [`AnalysisProfile::to_native`] to map them onto the
/// track's own timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisProfile {
    pub version: u32,
    pub track_id: String,
    pub track_hash: String,
    pub native_rate: u32,
    pub native_channels: u16,
    pub native_frames: usize,
    pub analysis_rate: u32,
    pub analysis_frames: usize,
    pub keyword: Option<String>,
    pub category: GenreCategory,
    pub category_source: CategorySource,
    pub rhythm: Option<RhythmStats>,
    pub segment_bounds: Vec<usize>,
    pub beats: Vec<usize>,
    pub curves: CurveSet,
    /// Unsmoothed RMS of the percussive component on the curve timeline.
    pub percussive_rms: Vec<f64>,
    pub overlay: Option<OverlayRecord>,
    pub jump_graph: JumpGraph,
    pub alert: Option<AlertRecord>,
    /// Extractors that fell back to a degraded result.
    pub flags: Vec<String>,
    pub params: AnalysisParams,
}

impl AnalysisProfile {
    /// Analysis-rate sample index to native-rate sample index.
    pub fn to_native(&self, s: usize) -> usize {
        (s as f64 * self.native_rate as f64 / self.analysis_rate as f64).round() as usize
    }

    /// Native-rate sample index to analysis-rate sample index.
    pub fn to_analysis(&self, s: usize) -> usize {
        (s as f64 * self.analysis_rate as f64 / self.native_rate as f64).round() as usize
    }

    pub fn native_bounds(&self) -> Vec<usize> {
        self.segment_bounds.iter().map(|&s| self.to_native(s)).collect()
    }

    pub fn native_beats(&self) -> Vec<usize> {
        self.beats.iter().map(|&s| self.to_native(s)).collect()
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    /// Local percussive RMS at a native-rate position.
    pub fn percussive_rms_at(&self, native: usize) -> f64 {
        let s = self.to_analysis(native);
        let c = &self.curves;
        if self.percussive_rms.is_empty() {
            return 0.0;
        }
        let i = ((s as f64 - c.offset as f64) / c.hop_length as f64).round().max(0.0) as usize;
        self.percussive_rms[i.min(self.percussive_rms.len() - 1)]
    }
}

/// Content hash of decoded audio: rate, channel count and samples.
pub fn track_hash(w: &Waveform) -> String {
    let mut h = Sha256::new();
    h.update(w.sample_rate().to_le_bytes());
    h.update(w.channels().to_le_bytes());
    for s in w.samples() {
        h.update(s.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// A decoded track awaiting analysis.
#[derive(Debug, Clone)]
pub struct AudioTrack {
    pub id: String,
    pub waveform: Waveform,
}

/// Runs the full analysis of one track. `keyword` picks the category when
/// it is recognised; otherwise the rhythm tree decides.
pub fn preprocess(track: &AudioTrack, keyword: Option<&str>, params: &AnalysisParams) -> Result<AnalysisProfile> {
    params.validate()?;
    let w = &track.waveform;
    if w.frames() < FRAME_LENGTH {
        return Err(Error::InputTooShort { needed: FRAME_LENGTH, got: w.frames() });
    }
    let mut flags = vec![];
    let mono = w.to_mono().resampled(params.analysis_rate);
    let len = mono.frames();
    let spec = stft(&mono, FRAME_LENGTH, HOP_LENGTH)?;
    let onset = onset_strength(&spec);
    let mf = mfcc(&spec, N_MELS, N_MFCC)?;
    let chr = chroma(&spec);
    let flat = spectral_flatness(&spec);
    let rms = amplitude_envelope(&mono, FRAME_LENGTH, HOP_LENGTH)?;

    let tempo = dynamic_tempo(&onset, &params.tempo)?;
    if tempo.low_confidence {
        flags.push("tempo_low_confidence".to_string());
    }
    let beats = if tempo.low_confidence { vec![] } else { track_beats(&onset, tempo.median()) };
    if beats.is_empty() {
        flags.push("no_beats".to_string());
    }
    let bounds = segment_bounds(&mf, len, params.min_segment_s)?;

    let (_, perc) = hpss(&mono)?;
    let perc_rms = amplitude_envelope(&perc, FRAME_LENGTH, HOP_LENGTH)?;
    let graph = build_jump_graph(&mf, &chr, &beats, len, params.jump_threshold);
    if graph.is_empty() {
        flags.push("empty_jump_graph".to_string());
    }

    let keyword = keyword.map(str::trim).filter(|k| !k.is_empty());
    let (category, source, rhythm) = match keyword.and_then(classify_keyword) {
        Some(c) => (c, CategorySource::Keyword, None),
        None => {
            let p_onset = onset_strength(&stft(&perc, FRAME_LENGTH, HOP_LENGTH)?);
            let (strong_frac, extreme_frac) = onset_fractions(&p_onset, &beats, &params.autosort);
            let stats = RhythmStats {
                beats: beats.len(),
                strong_frac,
                extreme_frac,
                unique_candidates: graph.unique_candidates(),
            };
            (decide(&stats, &params.autosort), CategorySource::Auto, Some(stats))
        }
    };

    // Curves live on the RMS frame-centre timeline.
    let amp = if rms.len() >= 2 { lowpass_smooth(&rms, params.tempo.smoothing_hz)? } else { rms.clone() };
    let tempo_on_grid: Vec<f64> = (0..amp.len()).map(|i| tempo.bpm.value_at(amp.time_of(i))).collect();
    let curves = CurveSet::build(
        tempo_on_grid,
        tempo.min,
        tempo.max,
        amp.values.clone(),
        params.curve_bounds,
        amp.hop_length,
        amp.sample_rate,
        amp.offset,
    )?;

    let ratio = w.sample_rate() as f64 / params.analysis_rate as f64;
    let native = |s: usize| ((s as f64 * ratio).round() as usize).min(w.frames());

    // Sparse hits still count; a lone transient at the track edge does not.
    let audible_percussion = percentile(&perc_rms.values, 90.0) >= PERCUSSION_FLOOR * percentile(&rms.values, 50.0);
    if !audible_percussion {
        flags.push("no_percussion".to_string());
    }
    let overlay = match select_overlay(&perc, &beats, params.overlay_duration_s).and_then(|sel| {
        if audible_percussion {
            Ok(sel)
        } else {
            Err(Error::InsufficientRhythm("percussive component is inaudible".into()))
        }
    }) {
        Ok(sel) => {
            let (a, b) = (native(sel.start), native(sel.end));
            let ctx = w.sample_rate() as usize / 2;
            let (ca, cb) = (a.saturating_sub(ctx), (b + ctx).min(w.frames()));
            let region = w.slice(ca, cb);
            let region = if region.frames() >= FRAME_LENGTH { hpss(&region)?.1 } else { region };
            let excerpt = region.slice(a - ca, b - ca);
            Some(OverlayRecord {
                start: sel.start,
                end: sel.end,
                first_beat: sel.first_beat,
                last_beat: sel.last_beat,
                audio: EmbeddedAudio::encode(&taper_window(&excerpt, OVERLAY_TAPER)?),
            })
        }
        Err(Error::InsufficientRhythm(_)) => {
            flags.push("no_overlay".to_string());
            None
        }
        Err(e) => return Err(e),
    };

    let alert_len = (params.alert_length_s * params.analysis_rate as f64).round() as usize;
    let features = AlertFeatures { mfcc: &mf, flatness: &flat, rms: &rms.values };
    let alert = match best_alert_start(&features, len, &bounds, alert_len) {
        Ok(start) => {
            let a = native(start);
            let n = (params.alert_length_s * w.sample_rate() as f64).round() as usize;
            if a + n <= w.frames() {
                Some(AlertRecord { start, audio: EmbeddedAudio::encode(&taper_window(&w.slice(a, a + n), ALERT_TAPER)?) })
            } else {
                flags.push("no_alert".to_string());
                None
            }
        }
        Err(Error::InputTooShort { .. }) => {
            flags.push("no_alert".to_string());
            None
        }
        Err(e) => return Err(e),
    };

    Ok(AnalysisProfile {
        version: PROFILE_VERSION,
        track_id: track.id.clone(),
        track_hash: track_hash(w),
        native_rate: w.sample_rate(),
        native_channels: w.channels(),
        native_frames: w.frames(),
        analysis_rate: params.analysis_rate,
        analysis_frames: len,
        keyword: keyword.map(str::to_string),
        category,
        category_source: source,
        rhythm,
        segment_bounds: bounds,
        beats,
        curves,
        percussive_rms: perc_rms.values,
        overlay,
        jump_graph: graph,
        alert,
        flags,
        params: params.clone(),
    })
}
