use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Longest accepted line, newline excluded.
pub const MAX_LINE: usize = 4096;
pub const MAX_SOURCE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    Signal,
    SetLevel,
    Ping,
}

impl MessageType {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageType::Signal => "signal",
            MessageType::SetLevel => "set_level",
            MessageType::Ping => "ping",
        }
    }
}

impl FromStr for MessageType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signal" => Ok(MessageType::Signal),
            "set_level" => Ok(MessageType::SetLevel),
            "ping" => Ok(MessageType::Ping),
            _ => Err(Error::Protocol(format!("unknown type {s:?}"))),
        }
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One client message. Absent fields stay absent through a round trip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub kind: MessageType,
    pub level: Option<u8>,
    pub source: Option<String>,
    pub client_ts: Option<String>,
}

#[derive(Serialize)]
struct Out<'a> {
    #[serde(rename = "type")]
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    client_ts: Option<&'a str>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

impl WireMessage {
    pub fn signal(level: Option<u8>, source: impl Into<String>) -> Self {
        Self { kind: MessageType::Signal, level, source: Some(source.into()), client_ts: None }
    }

    pub fn set_level(level: u8) -> Self {
        Self { kind: MessageType::SetLevel, level: Some(level), source: None, client_ts: None }
    }

    pub fn ping() -> Self {
        Self { kind: MessageType::Ping, level: None, source: None, client_ts: None }
    }

    /// Stamps the message with the current time.
    pub fn now(mut self) -> Self {
        self.client_ts = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.level {
            if !(1..=3).contains(&l) {
                return Err(bad("level out of range"));
            }
        }
        if self.kind == MessageType::SetLevel && self.level.is_none() {
            return Err(bad("set_level needs a level"));
        }
        if let Some(s) = &self.source {
            if s.chars().count() > MAX_SOURCE {
                return Err(bad(format!("source longer than {MAX_SOURCE} characters")));
            }
        }
        if let Some(t) = &self.client_ts {
            chrono::DateTime::parse_from_rfc3339(t).map_err(|_| bad("client_ts is not an ISO-8601 timestamp"))?;
        }
        Ok(())
    }

    /// One JSON object plus a newline.
    pub fn encode(&self) -> Result<String> {
        self.validate()?;
        let out = Out { kind: self.kind.as_str(), level: self.level, source: self.source.as_deref(), client_ts: self.client_ts.as_deref() };
        let mut line = serde_json::to_string(&out)?;
        line.push('\n');
        Ok(line)
    }

    /// Parses one line (trailing newline optional). Unknown fields are
    /// ignored.
    pub fn decode(line: &str) -> Result<WireMessage> {
        let line = line.strip_suffix('\n').unwrap_or(line);
        let line = line.strip_suffix('\r').unwrap_or(line);
        let v: Value = serde_json::from_str(line).map_err(|_| bad("malformed JSON"))?;
        let Value::Object(obj) = v else { return Err(bad("expected a JSON object")) };
        let kind: MessageType = match obj.get("type") {
            Some(Value::String(t)) => t.parse()?,
            Some(_) => return Err(bad("type must be a string")),
            None => return Err(bad("missing type")),
        };
        let level = match obj.get("level") {
            None | Some(Value::Null) => None,
            Some(Value::Number(n)) => match n.as_i64() {
                Some(l) if (1..=3).contains(&l) => Some(l as u8),
                Some(_) => return Err(bad("level out of range")),
                None if n.as_f64().is_some_and(|f| !(1.0..=3.0).contains(&f)) => return Err(bad("level out of range")),
                None => return Err(bad("level must be an integer")),
            },
            Some(_) => return Err(bad("level must be an integer")),
        };
        let msg = WireMessage { kind, level, source: text(&obj, "source")?, client_ts: text(&obj, "client_ts")? };
        msg.validate()?;
        Ok(msg)
    }
}

fn text(obj: &Map<String, Value>, key: &str) -> Result<Option<String>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(bad(format!("{key} must be a string"))),
    }
}

/// Server answer to one line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Ok,
    Pong,
    Error(String),
}

impl Reply {
    pub fn encode(&self) -> String {
        let v = match self {
            Reply::Ok => serde_json::json!({"ok": true}),
            Reply::Pong => serde_json::json!({"ok": true, "pong": true}),
            Reply::Error(e) => serde_json::json!({"ok": false, "error": e}),
        };
        format!("{v}\n")
    }

    pub fn decode(line: &str) -> Result<Reply> {
        let v: Value = serde_json::from_str(line.trim_end()).map_err(|_| bad(format!("bad reply {line:?}")))?;
        match (v.get("ok"), v.get("pong"), v.get("error")) {
            (Some(Value::Bool(true)), Some(Value::Bool(true)), _) => Ok(Reply::Pong),
            (Some(Value::Bool(true)), _, _) => Ok(Reply::Ok),
            (Some(Value::Bool(false)), _, e) => Ok(Reply::Error(e.and_then(Value::as_str).unwrap_or("").to_string())),
            _ => Err(bad(format!("bad reply {line:?}"))),
        }
    }
}
