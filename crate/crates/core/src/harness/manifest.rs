use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::modengine::SubtletyLevel;

/// What was injected: a genre modification at some level, or the stock
/// control tone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventLevel {
    Level(SubtletyLevel),
    Control,
}

impl fmt::Display for EventLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventLevel::Level(l) => write!(f, "{l}"),
            EventLevel::Control => f.write_str("control"),
        }
    }
}

impl Serialize for EventLevel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EventLevel::Level(l) => s.serialize_u8(l.as_u8()),
            EventLevel::Control => s.serialize_str("control"),
        }
    }
}

impl<'de> Deserialize<'de> for EventLevel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u8),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => SubtletyLevel::try_from(n).map(EventLevel::Level).map_err(serde::de::Error::custom),
            Raw::Text(t) if t == "control" => Ok(EventLevel::Control),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unknown level {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedEvent {
    /// When the request was made, seconds into the rendered audio.
    pub ts_s: f64,
    /// When the modification had finished playing; absent if it never did.
    pub end_s: Option<f64>,
    pub level: EventLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionManifest {
    pub track: String,
    pub seed: u64,
    pub window_s: f64,
    pub events: Vec<InjectedEvent>,
}

impl InjectionManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: InjectionManifest = serde_json::from_str(s).map_err(|e| Error::Parameter(format!("bad manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_s.is_finite() && self.window_s > 0.0) {
            return Err(Error::Parameter(format!("bad manifest: window_s {} must be positive", self.window_s)));
        }
        for (i, e) in self.events.iter().enumerate() {
            if !(e.ts_s.is_finite() && e.ts_s >= 0.0) || e.end_s.is_some_and(|t| !t.is_finite() || t < 0.0) {
                return Err(Error::Parameter(format!("bad manifest: event {i} has an invalid time")));
            }
        }
        if self.events.windows(2).any(|w| w[1].ts_s <= w[0].ts_s) {
            return Err(Error::Parameter("bad manifest: timestamps must be strictly increasing".into()));
        }
        Ok(())
    }
}
