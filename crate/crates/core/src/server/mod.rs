//! Playback: the stream buffer is filled from preprocessed tracks, emitted
//! to a sink, and edited ahead of the pointer as requests arrive.
//!
//! [`Session`] holds all of the state and is driven step by step, which
//! keeps simulated sessions deterministic. [`Runtime`] drives one with
//! producer, reader and modifier threads for live playback.

mod clock;
mod log;
mod runtime;
mod session;
mod sim;
mod sink;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use self::log::{EventKind, LogLine, SessionLog};
pub use clock::{Clock, SimClock, SystemClock};
pub use runtime::{Runtime, RuntimeOptions, SessionHandle};
pub use session::{CommitOutcome, EditRecord, Job, Session};
pub use sim::{simulate, ScheduledRequest, Simulation};
pub use sink::{MemorySink, NullSink, Sink, SinkSpec, WavSink, AVAILABLE_SINKS};

use crate::analysis::{AnalysisParams, AnalysisProfile, ProfileStore, Staleness};
use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::modengine::{EngineConfig, SubtletyLevel};

/// A notification to be turned into an edit.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRequest {
    pub received_at: DateTime<Utc>,
    /// `None` means the session default at the time of receipt.
    pub level: Option<SubtletyLevel>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub engine: EngineConfig,
    /// Requests closer than this to a pending or just-applied one are merged.
    pub min_spacing_s: f64,
    pub queue_capacity: usize,
    /// The producer appends the next track once the pointer is this close to
    /// the end of the buffered audio.
    pub preload_s: f64,
    /// Frames per block handed to the sink.
    pub frame_size: usize,
    pub default_level: SubtletyLevel,
    /// Seeds the jump chooser.
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            min_spacing_s: 10.0,
            queue_capacity: 64,
            preload_s: 10.0,
            frame_size: 1024,
            default_level: SubtletyLevel::L1,
            seed: 0,
        }
    }
}

/// One decoded track with its current profile.
#[derive(Debug, Clone)]
pub struct PlaylistEntry {
    pub id: String,
    pub path: Option<PathBuf>,
    pub track: Arc<Waveform>,
    pub profile: Arc<AnalysisProfile>,
}

impl PlaylistEntry {
    pub fn new(id: impl Into<String>, track: Waveform, profile: AnalysisProfile) -> Self {
        Self { id: id.into(), path: None, track: Arc::new(track), profile: Arc::new(profile) }
    }
}

/// Decodes every file and pairs it with its stored profile. Refused when
/// any profile is missing or out of date.
pub fn load_playlist(paths: &[PathBuf], store: &ProfileStore, params: &AnalysisParams) -> Result<Vec<PlaylistEntry>> {
    if paths.is_empty() {
        return Err(Error::Refused("empty playlist".into()));
    }
    paths.iter().map(|p| load_entry(p, store, params)).collect()
}

fn load_entry(path: &Path, store: &ProfileStore, params: &AnalysisParams) -> Result<PlaylistEntry> {
    match store.current_for_file(path, params)? {
        Ok((track, profile)) => {
            Ok(PlaylistEntry { id: track.id, path: Some(path.to_path_buf()), track: Arc::new(track.waveform), profile: Arc::new(profile) })
        }
        Err(why) => {
            let why = match why {
                Staleness::Missing => "no profile".to_string(),
                Staleness::Version(v) => format!("profile version {v} is out of date"),
                Staleness::Params => "profile was made with different analysis parameters".to_string(),
                Staleness::Keyword => "profile genre keyword differs".to_string(),
            };
            Err(Error::Refused(format!("track {}: {why}; run preprocess", path.display())))
        }
    }
}
