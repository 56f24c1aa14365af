//! The client API: newline-delimited JSON over a local socket.
//!
//! ```text
//! -> {"type":"signal","level":2,"source":"inbox","client_ts":"2018-12-01T10:00:00Z"}
//! <- {"ok":true}
//! -> {"type":"ping"}
//! <- {"ok":true,"pong":true}
//! ```

mod net;
mod watch;
mod wire;

pub use net::{respond, serve, Client, Endpoint, Handler, Listener, DEFAULT_PORT};
pub use watch::{run_watch, Watcher};
pub use wire::{MessageType, Reply, WireMessage, MAX_LINE, MAX_SOURCE};
