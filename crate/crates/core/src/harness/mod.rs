//! Offline evaluation: render a track with notifications at random times,
//! find them again by comparing against the original, and score clicks.

mod detect;
mod inject;
mod manifest;
mod score;

pub use detect::{clicks, detect, DetectorConfig, Deviation};
pub use inject::{control_tone, inject, InjectOptions, Injection, CONTROL_DBFS, CONTROL_HZ, CONTROL_S};
pub use manifest::{EventLevel, InjectedEvent, InjectionManifest};
pub use score::{parse_clicks, score, LevelScore, ScoreReport};
