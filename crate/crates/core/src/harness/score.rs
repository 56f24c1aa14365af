use std::collections::BTreeMap;

use serde::Serialize;

use super::manifest::{EventLevel, InjectionManifest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelScore {
    pub level: EventLevel,
    pub events: usize,
    pub hits: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub events: usize,
    pub hits: usize,
    pub accuracy: f64,
    pub false_positives: usize,
    pub levels: Vec<LevelScore>,
    /// For each event, the click credited to it.
    pub matched: Vec<Option<f64>>,
}

fn ratio(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// A click hits an event if it lands in `[end, end + window]`. Events are
/// taken in order of their end, each crediting the earliest unused click;
/// clicks left over are false positives. Events that never finished
/// playing cannot be hit.
pub fn score(manifest: &InjectionManifest, clicks: &[f64]) -> ScoreReport {
    let mut clicks: Vec<f64> = clicks.to_vec();
    clicks.sort_by(f64::total_cmp);
    let mut used = vec![false; clicks.len()];
    let mut order: Vec<usize> = (0..manifest.events.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |i: usize| manifest.events[i].end_s.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b))
    });
    let mut matched = vec![None; manifest.events.len()];
    for i in order {
        let Some(end) = manifest.events[i].end_s else { continue };
        let hit = (0..clicks.len()).find(|&c| !used[c] && clicks[c] >= end && clicks[c] <= end + manifest.window_s);
        if let Some(c) = hit {
            used[c] = true;
            matched[i] = Some(clicks[c]);
        }
    }
    let mut per: BTreeMap<EventLevel, (usize, usize)> = BTreeMap::new();
    for (e, m) in manifest.events.iter().zip(&matched) {
        let s = per.entry(e.level).or_default();
        s.0 += 1;
        s.1 += m.is_some() as usize;
    }
    let hits = matched.iter().filter(|m| m.is_some()).count();
    ScoreReport {
        events: manifest.events.len(),
        hits,
        accuracy: ratio(hits, manifest.events.len()),
        false_positives: used.iter().filter(|u| !**u).count(),
        levels: per.into_iter().map(|(level, (events, hits))| LevelScore { level, events, hits, accuracy: ratio(hits, events) }).collect(),
        matched,
    }
}

/// Click times in seconds: a JSON array, or one number per line with `#`
/// comments and blank lines allowed.
pub fn parse_clicks(text: &str) -> Result<Vec<f64>> {
    let t = text.trim_start();
    let clicks: Vec<f64> = if t.starts_with('[') {
        serde_json::from_str(t).map_err(|e| Error::Parameter(format!("bad click list: {e}")))?
    } else {
        let mut out = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            out.push(line.parse().map_err(|_| Error::Parameter(format!("bad click on line {}: {line:?}", n + 1)))?);
        }
        out
    };
    if let Some(c) = clicks.iter().find(|c| !c.is_finite() || **c < 0.0) {
        return Err(Error::Parameter(format!("bad click time {c}")));
    }
    Ok(clicks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::manifest::InjectedEvent;
    use crate::modengine::SubtletyLevel;

    fn manifest() -> InjectionManifest {
        let ev = |ts: f64, l: u8| InjectedEvent {
            ts_s: ts,
            end_s: Some(ts + 2.0),
            level: EventLevel::Level(SubtletyLevel::try_from(l).unwrap()),
            kind: None,
        };
        InjectionManifest { track: "t".into(), seed: 0, window_s: 5.0, events: vec![ev(10.0, 1), ev(30.0, 2), ev(50.0, 3)] }
    }

    #[test]
    fn perfect_clicks() {
        let m = manifest();
        let clicks: Vec<f64> = m.events.iter().map(|e| e.end_s.unwrap() + 1.0).collect();
        let r = score(&m, &clicks);
        assert_eq!((r.accuracy, r.false_positives), (1.0, 0));
        assert!(r.levels.iter().all(|l| l.accuracy == 1.0));
    }

    #[test]
    fn no_clicks() {
        let r = score(&manifest(), &[]);
        assert_eq!((r.accuracy, r.false_positives, r.hits), (0.0, 0, 0));
    }

    #[test]
    fn late_click_is_a_miss_and_a_false_positive() {
        let m = manifest();
        let r = score(&m, &[12.0 + 6.0, 33.0, 53.0]);
        assert_eq!(r.matched[0], None);
        assert_eq!((r.hits, r.false_positives), (2, 1));
        assert_eq!(r.levels[0].accuracy, 0.0);
        // Window edges are inclusive; a click before the end is not a hit.
        let r = score(&m, &[12.0, 17.0, 31.9]);
        assert_eq!((r.hits, r.false_positives), (1, 2));
    }

    #[test]
    fn one_click_credits_one_event() {
        let mut m = manifest();
        m.events[1].ts_s = 11.0;
        m.events[1].end_s = Some(13.0);
        let r = score(&m, &[13.5]);
        assert_eq!((r.hits, r.false_positives), (1, 0));
        assert_eq!(r.matched[0], Some(13.5));
    }

    #[test]
    fn click_files() {
        assert_eq!(parse_clicks("# t\n1.5\n\n 2 # late\n").unwrap(), vec![1.5, 2.0]);
        assert_eq!(parse_clicks("[3, 4.25]").unwrap(), vec![3.0, 4.25]);
        assert!(parse_clicks("abc").is_err());
        assert!(parse_clicks("-1").is_err());
    }
}
