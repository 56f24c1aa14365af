use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: need at least {needed} samples, got {got}")]
    InputTooShort { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient rhythm: {0}")]
    InsufficientRhythm(String),

    #[error("ingest error for {path}: {reason}")]
    Ingest { path: PathBuf, reason: String },

    #[error("profile store: {0}")]
    Store(String),

    #[error("edit rejected: {0}")]
    EditRejected(#[from] RejectReason),

    #[error("no room for the edit before the end of the track (earliest {earliest}, length {len})")]
    NoRoom { earliest: usize, len: usize },

    #[error("session refused: {0}")]
    Refused(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Why `apply_edit` refused a plan.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RejectReason {
    #[error("too late: anchor {anchor} behind edit frontier {frontier}")]
    TooLate { anchor: usize, frontier: usize },
    #[error("sample rate mismatch: payload {payload} Hz, buffer {buffer} Hz")]
    RateMismatch { payload: u32, buffer: u32 },
    #[error("channel mismatch: payload {payload}, buffer {buffer}")]
    ChannelMismatch { payload: usize, buffer: usize },
    #[error("edit extends past end of buffer")]
    OutOfRange,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
