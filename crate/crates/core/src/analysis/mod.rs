//! Per-track preprocessing into an [`AnalysisProfile`].

mod alert;
mod autosort;
mod beats;
mod curves;
mod genre;
mod jumps;
mod overlay;
mod profile;
mod segment;
mod store;
mod tempo;

pub use alert::{best_alert_start, select_alert_segment, AlertFeatures, AlertSelection, ALERT_TAPER};
pub use autosort::{auto_sort, decide, onset_fractions, AutoSortThresholds, RhythmStats};
pub use beats::{best_sequence, interval_range, sequence_score, track_beats, TIGHTNESS};
pub use curves::{rescale_curve, CurveBounds, CurveSet, Rescaled};
pub use genre::{classify_keyword, GenreCategory, KEYWORD_MAP};
pub use jumps::{beat_features, build_jump_graph, JumpGraph, JumpThreshold, MIN_GRAPH_BEATS, MIN_JUMP_DISTANCE};
pub use overlay::{select_overlay, OverlaySelection, MIN_OVERLAY_BEATS};
pub use segment::{segment_bounds, target_segments};
pub use tempo::{dynamic_tempo, percentile, TempoCurve, TempoSettings};
pub use profile::{
    preprocess, track_hash, AlertRecord, AnalysisParams, AnalysisProfile, AudioTrack, CategorySource, EmbeddedAudio,
    OverlayRecord, OVERLAY_TAPER, PERCUSSION_FLOOR, PROFILE_VERSION,
};
pub use store::{load_track, CacheStatus, ProfileStore, Staleness, StoreLock};
