use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::Duration;

use super::net::{Client, Endpoint};
use super::wire::{Reply, WireMessage};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Seen {
    /// File names present in a directory.
    Dir(BTreeSet<String>),
    /// Complete lines in a file.
    File(usize),
}

/// Edge-triggered poller over a directory (new files) or a file (new
/// lines). What exists when it starts does not count.
#[derive(Debug, Clone)]
pub struct Watcher {
    path: PathBuf,
    seen: Seen,
}

fn scan(path: &Path) -> Result<Seen> {
    let meta = fs::metadata(path)?;
    if meta.is_dir() {
        let mut names = BTreeSet::new();
        for e in fs::read_dir(path)? {
            names.insert(e?.file_name().to_string_lossy().into_owned());
        }
        Ok(Seen::Dir(names))
    } else {
        let bytes = fs::read(path)?;
        Ok(Seen::File(bytes.iter().filter(|&&b| b == b'\n').count()))
    }
}

fn basename(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

impl Watcher {
    pub fn new(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let seen = scan(&path)?;
        Ok(Self { path, seen })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Sources for everything new since the last poll, one per new file or
    /// line, named `watch:<basename>`.
    pub fn poll(&mut self) -> Result<Vec<String>> {
        let now = scan(&self.path)?;
        let out = match (&self.seen, &now) {
            (Seen::Dir(old), Seen::Dir(new)) => new.difference(old).map(|n| format!("watch:{n}")).collect(),
            (Seen::File(old), Seen::File(new)) => {
                // A truncated file starts counting again.
                let added = if new >= old { new - old } else { *new };
                vec![format!("watch:{}", basename(&self.path)); added]
            }
            _ => Vec::new(),
        };
        self.seen = now;
        Ok(out)
    }
}

/// Polls `path` every `interval` and sends one signal per event until
/// `stop` is set. A vanished path or an unreachable server is retried with
/// backoff.
pub fn run_watch(path: &Path, interval: Duration, endpoint: &Endpoint, level: Option<u8>, stop: &AtomicBool) -> Result<usize> {
    let mut backoff = interval;
    let max_backoff = (interval * 16).max(Duration::from_secs(5));
    let mut watcher = loop {
        match Watcher::new(path) {
            Ok(w) => break w,
            Err(e) => {
                log::warn!("cannot watch {}: {e}; retrying in {backoff:?}", path.display());
                if sleep_or_stop(backoff, stop) {
                    return Ok(0);
                }
                backoff = (backoff * 2).min(max_backoff);
            }
        }
    };
    let mut client: Option<Client> = None;
    let mut pending: Vec<String> = Vec::new();
    let mut sent = 0;
    backoff = interval;
    loop {
        if sleep_or_stop(if pending.is_empty() { interval } else { backoff }, stop) {
            return Ok(sent);
        }
        match watcher.poll() {
            Ok(mut fresh) => pending.append(&mut fresh),
            Err(e) => {
                log::warn!("{} vanished ({e}); retrying in {backoff:?}", path.display());
                backoff = (backoff * 2).min(max_backoff);
                if let Ok(w) = Watcher::new(path) {
                    watcher = w;
                }
                continue;
            }
        }
        while let Some(source) = pending.first() {
            let c = match client.as_mut() {
                Some(c) => c,
                None => match Client::connect(endpoint) {
                    Ok(c) => client.insert(c),
                    Err(e) => {
                        log::warn!("cannot reach {endpoint}: {e}");
                        backoff = (backoff * 2).min(max_backoff);
                        break;
                    }
                },
            };
            match c.send(&WireMessage::signal(level, source.clone()).now()) {
                Ok(Reply::Ok) => {
                    log::info!("sent signal from {source}");
                    pending.remove(0);
                    sent += 1;
                    backoff = interval;
                }
                Ok(r) => {
                    log::warn!("server refused signal from {source}: {r:?}");
                    pending.remove(0);
                }
                Err(e) => {
                    log::warn!("send failed: {e}");
                    client = None;
                    backoff = (backoff * 2).min(max_backoff);
                    break;
                }
            }
        }
    }
}

fn sleep_or_stop(d: Duration, stop: &AtomicBool) -> bool {
    let step = Duration::from_millis(20);
    let mut left = d;
    while !left.is_zero() {
        if stop.load(Ordering::SeqCst) {
            return true;
        }
        let s = left.min(step);
        thread::sleep(s);
        left -= s;
    }
    stop.load(Ordering::SeqCst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_events() {
        let d = tempfile::tempdir().unwrap();
        fs::write(d.path().join("old.txt"), "x").unwrap();
        let mut w = Watcher::new(d.path()).unwrap();
        assert!(w.poll().unwrap().is_empty());
        fs::write(d.path().join("a.eml"), "x").unwrap();
        assert_eq!(w.poll().unwrap(), vec!["watch:a.eml"]);
        assert!(w.poll().unwrap().is_empty());
        fs::write(d.path().join("b.eml"), "x").unwrap();
        fs::write(d.path().join("c.eml"), "x").unwrap();
        assert_eq!(w.poll().unwrap(), vec!["watch:b.eml", "watch:c.eml"]);
    }

    #[test]
    fn file_lines() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("inbox.log");
        fs::write(&p, "one\n").unwrap();
        let mut w = Watcher::new(&p).unwrap();
        fs::write(&p, "one\ntwo\nthree\npartial").unwrap();
        assert_eq!(w.poll().unwrap(), vec!["watch:inbox.log"; 2]);
        fs::remove_file(&p).unwrap();
        assert!(w.poll().is_err());
    }
}
