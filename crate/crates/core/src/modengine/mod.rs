//! Turning a notification request into a concrete edit of the audio
//! stream, and applying it.
//!
//! Planners work in *track* coordinates: native-rate frame indices into the
//! unmodified track. The stream buffer works in *buffer* coordinates, which
//! drift from track coordinates as inserts and replacements change the
//! timeline; [`TimelineMap`] converts between the two.

mod buffer;
mod plan;
mod timeline;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use buffer::{apply_edit, apply_edit_undoable, soft_limit, EditReceipt, StreamBuffer, Tick, Undo};
pub use plan::{plan, plan_blues, plan_classical, plan_jazz, plan_pop, PlanContext, PopState};
pub use timeline::TimelineMap;

use crate::analysis::GenreCategory;
use crate::audio::Waveform;
use crate::error::{param, Error, Result};

/// How obvious a modification is meant to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SubtletyLevel {
    L1 = 1,
    L2 = 2,
    L3 = 3,
}

impl SubtletyLevel {
    pub const ALL: [SubtletyLevel; 3] = [SubtletyLevel::L1, SubtletyLevel::L2, SubtletyLevel::L3];

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for SubtletyLevel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(SubtletyLevel::L1),
            2 => Ok(SubtletyLevel::L2),
            3 => Ok(SubtletyLevel::L3),
            _ => Err(param(format!("level {v} out of range 1..=3"))),
        }
    }
}

impl TryFrom<i64> for SubtletyLevel {
    type Error = Error;
    fn try_from(v: i64) -> Result<Self> {
        u8::try_from(v).map_err(|_| param(format!("level {v} out of range 1..=3")))?.try_into()
    }
}

impl From<SubtletyLevel> for u8 {
    fn from(l: SubtletyLevel) -> u8 {
        l.as_u8()
    }
}

impl fmt::Display for SubtletyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    /// Mix the payload over the existing audio.
    Superimpose,
    /// Swap `span` samples for the payload, crossfading at the edges.
    Replace,
    /// Splice the payload in, delaying everything after it.
    Insert,
    /// Redirect the stream pointer from the anchor to the target.
    Jump,
}

impl EditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EditKind::Superimpose => "superimpose",
            EditKind::Replace => "replace",
            EditKind::Insert => "insert",
            EditKind::Jump => "jump",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub category: GenreCategory,
    pub level: SubtletyLevel,
    pub request_id: u64,
}

/// A concrete edit. Positions are in whichever coordinates the producer
/// used; planners emit track coordinates, [`TimelineMap::to_buffer_plan`]
/// converts them for [`apply_edit`].
#[derive(Debug, Clone, PartialEq)]
pub struct EditPlan {
    pub kind: EditKind,
    pub anchor: usize,
    /// Already tapered. `None` only for jumps.
    pub payload: Option<Waveform>,
    pub gain: f64,
    /// Samples of existing audio replaced (Replace only).
    pub span: usize,
    /// Edge fraction used when tapering the payload; Replace crossfades the
    /// original over the same ramps.
    pub taper: f64,
    pub jump_target: Option<usize>,
    pub provenance: Provenance,
    /// Why the preferred placement was not used, if it was not.
    pub degraded: Option<String>,
}

impl EditPlan {
    pub fn payload_len(&self) -> usize {
        self.payload.as_ref().map_or(0, Waveform::frames)
    }

    /// Last sample (exclusive, same coordinates as `anchor`) the edit
    /// audibly touches, before any timeline shift it causes.
    pub fn end(&self) -> usize {
        match self.kind {
            EditKind::Jump => self.anchor,
            _ => self.anchor + self.payload_len(),
        }
    }
}

/// Tunable constants of the planners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub lead_margin_s: f64,
    pub echo_duration_s: f64,
    pub echo_taper: f64,
    pub passage_duration_s: f64,
    pub crossfade_taper: f64,
    pub blues_gain: [f64; 2],
    pub blues_offset_ms: [f64; 2],
    pub jazz_segment_s: f64,
    pub jazz_semitones: [f64; 2],
    pub jazz_gain: [f64; 2],
    pub pop_search_beats: usize,
    pub limiter_knee: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            lead_margin_s: 3.0,
            echo_duration_s: 1.5,
            echo_taper: 0.25,
            passage_duration_s: 4.0,
            crossfade_taper: 0.1,
            blues_gain: [1.0, 1.8],
            blues_offset_ms: [0.0, 120.0],
            jazz_segment_s: 1.5,
            jazz_semitones: [3.0, 6.0],
            jazz_gain: [1.0, 1.5],
            pop_search_beats: 8,
            limiter_knee: 0.8,
        }
    }
}

impl EngineConfig {
    pub fn lead_margin(&self, sample_rate: u32) -> usize {
        (self.lead_margin_s * sample_rate as f64).round() as usize
    }
}
