//! Line-oriented session log: `<timestamp> <EVENT> key=value ...`.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    SessionStart,
    SessionStop,
    Level,
    Notify,
    Edit,
    Degraded,
    Unserved,
    Drop,
    Underrun,
    Task,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::SessionStart,
        EventKind::SessionStop,
        EventKind::Level,
        EventKind::Notify,
        EventKind::Edit,
        EventKind::Degraded,
        EventKind::Unserved,
        EventKind::Drop,
        EventKind::Underrun,
        EventKind::Task,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SessionStart => "SESSION_START",
            EventKind::SessionStop => "SESSION_STOP",
            EventKind::Level => "LEVEL",
            EventKind::Notify => "NOTIFY",
            EventKind::Edit => "EDIT",
            EventKind::Degraded => "DEGRADED",
            EventKind::Unserved => "UNSERVED",
            EventKind::Drop => "DROP",
            EventKind::Underrun => "UNDERRUN",
            EventKind::Task => "TASK",
        }
    }

    /// Events that close out a request.
    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::Edit | EventKind::Degraded | EventKind::Unserved | EventKind::Drop)
    }
}

impl FromStr for EventKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Protocol(format!("unknown log event {s:?}")))
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLine {
    pub ts: DateTime<Utc>,
    pub event: EventKind,
    pub fields: Vec<(String, String)>,
}

impl LogLine {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Request ids this line refers to (`id=` plus any `merged=` list).
    pub fn request_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.get("id").and_then(|v| v.parse().ok()).into_iter().collect();
        if let Some(m) = self.get("merged") {
            ids.extend(m.split(',').filter_map(|v| v.parse::<u64>().ok()));
        }
        ids
    }

    pub fn parse(line: &str) -> Result<LogLine> {
        let bad = |why: &str| Error::Protocol(format!("bad log line ({why}): {line:?}"));
        let (ts, rest) = line.split_once(' ').ok_or_else(|| bad("no event"))?;
        let ts = DateTime::parse_from_rfc3339(ts).map_err(|_| bad("timestamp"))?.with_timezone(&Utc);
        let (event, mut rest) = rest.split_once(' ').unwrap_or((rest, ""));
        let event = event.parse()?;
        let mut fields = Vec::new();
        while !rest.is_empty() {
            let (key, after) = rest.split_once('=').ok_or_else(|| bad("field without '='"))?;
            let (value, tail) = if after.starts_with('"') {
                let mut de = serde_json::Deserializer::from_str(after).into_iter::<String>();
                let v = de.next().ok_or_else(|| bad("quoted value"))?.map_err(|_| bad("quoted value"))?;
                (v, &after[de.byte_offset()..])
            } else {
                let end = after.find(' ').unwrap_or(after.len());
                (after[..end].to_string(), &after[end..])
            };
            fields.push((key.to_string(), value));
            rest = tail.strip_prefix(' ').unwrap_or(tail);
        }
        Ok(LogLine { ts, event, fields })
    }
}

fn needs_quotes(v: &str) -> bool {
    v.is_empty() || v.chars().any(|c| c.is_whitespace() || c.is_control() || c == '"' || c == '=' || c == '\\')
}

impl fmt::Display for LogLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.ts.to_rfc3339_opts(SecondsFormat::Millis, true), self.event)?;
        for (k, v) in &self.fields {
            if needs_quotes(v) {
                write!(f, " {k}={}", serde_json::to_string(v).map_err(|_| fmt::Error)?)?;
            } else {
                write!(f, " {k}={v}")?;
            }
        }
        Ok(())
    }
}

/// Append-only event log, mirrored to a file when one is attached.
#[derive(Debug, Default)]
pub struct SessionLog {
    lines: Vec<LogLine>,
    file: Option<BufWriter<File>>,
}

impl SessionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        let f = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        Ok(Self { lines: Vec::new(), file: Some(BufWriter::new(f)) })
    }

    /// Appends an event. Timestamps never go backwards: an earlier `ts` is
    /// raised to the previous line's.
    pub fn push(&mut self, ts: DateTime<Utc>, event: EventKind, fields: Vec<(String, String)>) -> &LogLine {
        let ts = self.lines.last().map_or(ts, |l| ts.max(l.ts));
        let line = LogLine { ts, event, fields };
        if let Some(f) = self.file.as_mut() {
            // A failing log file must not stop playback.
            let _ = writeln!(f, "{line}").and_then(|_| f.flush());
        }
        self.lines.push(line);
        self.lines.last().unwrap()
    }

    pub fn lines(&self) -> &[LogLine] {
        &self.lines
    }

    pub fn events(&self, kind: EventKind) -> impl Iterator<Item = &LogLine> {
        self.lines.iter().filter(move |l| l.event == kind)
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some(f) = self.file.as_mut() {
            f.flush()?;
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        self.lines.iter().map(|l| format!("{l}\n")).collect()
    }
}

/// Builds a field list from `key => value` pairs.
#[macro_export]
#[doc(hidden)]
macro_rules! fields {
    ($($k:expr => $v:expr),* $(,)?) => {
        vec![$(($k.to_string(), $v.to_string())),*]
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(s: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000 + s, 0).unwrap()
    }

    #[test]
    fn format_is_timestamp_event_fields() {
        let mut log = SessionLog::new();
        log.push(ts(0), EventKind::Notify, fields!["id" => 1, "source" => "watch:a b.txt", "level" => 2]);
        assert_eq!(log.render(), "2023-11-14T22:13:20.000Z NOTIFY id=1 source=\"watch:a b.txt\" level=2\n");
    }

    #[test]
    fn timestamps_never_decrease() {
        let mut log = SessionLog::new();
        log.push(ts(5), EventKind::SessionStart, vec![]);
        log.push(ts(1), EventKind::SessionStop, vec![]);
        assert_eq!(log.lines()[1].ts, ts(5));
    }

    #[test]
    fn request_ids_include_merged() {
        let l = LogLine::parse("2023-11-14T22:13:20.000Z EDIT id=4 merged=5,6 kind=insert").unwrap();
        assert_eq!(l.request_ids(), vec![4, 5, 6]);
        assert_eq!(l.get("kind"), Some("insert"));
    }

    proptest! {
        #[test]
        fn parse_inverts_display(values in proptest::collection::vec("\\PC{0,12}", 0..5), secs in 0i64..1_000_000) {
            let fields: Vec<(String, String)> = values.into_iter().enumerate().map(|(i, v)| (format!("k{i}"), v)).collect();
            let line = LogLine { ts: ts(secs), event: EventKind::Task, fields };
            prop_assert_eq!(LogLine::parse(&line.to_string()).unwrap(), line);
        }
    }
}
