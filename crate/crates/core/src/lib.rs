//! Real-time, genre-aware music modification for ambient notifications.
//!
//! A track is analysed once ([`analysis::preprocess`]) into an
//! [`analysis::AnalysisProfile`]. While it plays, the stream server turns
//! notification requests into small musical edits (echoes, tempo warps,
//! rhythmic overlays, pitch-shifted phrases, beat-aligned jumps, or an
//! inserted alert excerpt) applied a few seconds ahead of the playback
//! pointer.
//!
//! ```text
//! wav -> preprocess -> profile store
//!                         |
//! client --(ndjson)--> stream server --plan--> modengine --apply--> buffer -> sink
//! ```

pub mod analysis;
pub mod audio;
pub mod dsp;
pub mod error;
pub mod exec;
pub mod harness;
pub mod modengine;
pub mod protocol;
pub mod server;

pub use audio::{read_wav, write_wav, WavFormat, Waveform};
pub use error::{Error, RejectReason, Result};
