//! On-disk profile cache: one JSON document per track, named by content
//! hash.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use super::profile::{preprocess, track_hash, AnalysisParams, AnalysisProfile, AudioTrack, PROFILE_VERSION};
use crate::audio::read_wav;
use crate::error::{Error, Result};

const LOCK_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Cached,
    Analyzed,
}

impl CacheStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CacheStatus::Cached => "cached",
            CacheStatus::Analyzed => "analyzed",
        }
    }
}

/// Why a stored profile cannot be used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Staleness {
    Missing,
    Version(u32),
    Params,
    Keyword,
}

#[derive(Debug, Clone)]
pub struct ProfileStore {
    dir: PathBuf,
}

/// Exclusive claim on one track's profile; released on drop.
pub struct StoreLock {
    path: PathBuf,
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

impl ProfileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::Store(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.profile.json"))
    }

    /// Blocks until no other worker is analysing `hash`.
    pub fn lock(&self, hash: &str) -> Result<StoreLock> {
        let path = self.dir.join(format!("{hash}.lock"));
        let started = Instant::now();
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(StoreLock { path });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    if started.elapsed() > LOCK_TIMEOUT {
                        return Err(Error::Store(format!("timed out waiting for {}", path.display())));
                    }
                    thread::sleep(Duration::from_millis(50));
                }
                Err(e) => return Err(Error::Store(format!("{}: {e}", path.display()))),
            }
        }
    }

    /// Reads whatever profile is stored for `hash`.
    pub fn read(&self, hash: &str) -> Result<Option<AnalysisProfile>> {
        let path = self.path_for(hash);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| Error::Store(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::Store(format!("{}: {e}", path.display()))),
        }
    }

    /// The stored profile if it is current for these params and keyword.
    pub fn load(&self, hash: &str, params: &AnalysisParams, keyword: Option<&str>) -> Result<std::result::Result<AnalysisProfile, Staleness>> {
        let Some(p) = self.read(hash)? else { return Ok(Err(Staleness::Missing)) };
        let keyword = keyword.map(str::trim).filter(|k| !k.is_empty());
        Ok(if p.version != PROFILE_VERSION {
            Err(Staleness::Version(p.version))
        } else if &p.params != params {
            Err(Staleness::Params)
        } else if p.keyword.as_deref() != keyword {
            Err(Staleness::Keyword)
        } else {
            Ok(p)
        })
    }

    /// Writes atomically: temp file in the same directory, then rename.
    pub fn save(&self, profile: &AnalysisProfile) -> Result<PathBuf> {
        let path = self.path_for(&profile.track_hash);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer_pretty(&mut tmp, profile)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| Error::Store(format!("{}: {}", path.display(), e.error)))?;
        Ok(path)
    }

    /// Returns the current profile for `track`, analysing it if needed.
    pub fn ensure(&self, track: &AudioTrack, keyword: Option<&str>, params: &AnalysisParams) -> Result<(AnalysisProfile, CacheStatus)> {
        let hash = track_hash(&track.waveform);
        let _lock = self.lock(&hash)?;
        if let Ok(p) = self.load(&hash, params, keyword)? {
            return Ok((p, CacheStatus::Cached));
        }
        let p = preprocess(track, keyword, params)?;
        self.save(&p)?;
        Ok((p, CacheStatus::Analyzed))
    }

    /// [`ensure`](Self::ensure) for a wave file; the track id is the file
    /// stem.
    pub fn ensure_file(&self, path: &Path, keyword: Option<&str>, params: &AnalysisParams) -> Result<(AnalysisProfile, CacheStatus)> {
        let track = load_track(path)?;
        self.ensure(&track, keyword, params)
    }

    /// Profile for a wave file only if one is current; never analyses.
    pub fn current_for_file(&self, path: &Path, params: &AnalysisParams) -> Result<std::result::Result<(AudioTrack, AnalysisProfile), Staleness>> {
        let track = load_track(path)?;
        let hash = track_hash(&track.waveform);
        let Some(p) = self.read(&hash)? else { return Ok(Err(Staleness::Missing)) };
        let kw = p.keyword.clone();
        Ok(self.load(&hash, params, kw.as_deref())?.map(|p| (track, p)))
    }
}

/// Decodes a wave file into an [`AudioTrack`].
pub fn load_track(path: &Path) -> Result<AudioTrack> {
    let (waveform, _) = read_wav(path)?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "track".into());
    Ok(AudioTrack { id, waveform })
}
