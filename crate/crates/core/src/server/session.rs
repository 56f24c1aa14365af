use std::collections::VecDeque;
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, Utc};

use super::log::{EventKind, SessionLog};
use super::{Clock, PlaylistEntry, SessionConfig, SignalRequest};
use crate::error::{Error, RejectReason, Result};
use crate::fields;
use crate::modengine::{apply_edit_undoable, plan, EditKind, EditPlan, EngineConfig, PlanContext, PopState, StreamBuffer, SubtletyLevel, Tick, TimelineMap, Undo};

/// A queued request, possibly standing for several merged ones.
#[derive(Debug, Clone)]
struct Pending {
    id: u64,
    /// Receipt time of the first request of the group; the coalescing window
    /// is measured from here.
    group_at: DateTime<Utc>,
    level: SubtletyLevel,
    merged: Vec<u64>,
    source: String,
    supersedes: Option<u64>,
    /// Track to plan into when the one at the frontier had no room left.
    hop_track: Option<usize>,
    note: Option<String>,
    generation: u64,
    in_flight: bool,
}

impl Pending {
    fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        std::iter::once(self.id).chain(self.merged.iter().copied())
    }
}

/// Everything needed to take back the most recent edit.
#[derive(Debug)]
struct Applied {
    id: u64,
    group_at: DateTime<Utc>,
    level: SubtletyLevel,
    merged: Vec<u64>,
    record: usize,
    undo: Undo,
    maps: Vec<TimelineMap>,
    reserved_until: usize,
    pop: PopState,
    pop_track: usize,
}

/// Planning work handed to the modifier. [`Job::plan`] touches no session
/// state, so it can run without holding any lock.
#[derive(Debug, Clone)]
pub struct Job {
    pub id: u64,
    pub level: SubtletyLevel,
    /// Playlist index planned into.
    pub track: usize,
    /// Earliest track position, native frames.
    pub earliest: usize,
    generation: u64,
    entry: PlaylistEntry,
    config: Arc<EngineConfig>,
    pop: PopState,
    avoid: Vec<(usize, usize)>,
}

impl Job {
    pub fn plan(mut self) -> (Job, Result<EditPlan>) {
        let ctx = PlanContext {
            profile: &self.entry.profile,
            track: &self.entry.track,
            earliest: self.earliest,
            config: &self.config,
            request_id: self.id,
            avoid: &self.avoid,
        };
        let r = plan(&ctx, self.level, &mut self.pop);
        (self, r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitOutcome {
    Applied,
    /// Planned too late or against stale state; the request stays queued.
    Retry,
    /// Logged as DEGRADED and dropped.
    Skipped,
    /// The request left the queue while it was being planned.
    Gone,
}

/// An applied edit, for audits and for locating it in the output.
#[derive(Debug, Clone, PartialEq)]
pub struct EditRecord {
    pub id: u64,
    pub merged: Vec<u64>,
    pub track: usize,
    /// Plan in track coordinates, payload dropped.
    pub plan: EditPlan,
    pub requested: SubtletyLevel,
    pub buffer_anchor: usize,
    pub buffer_end: usize,
    pub buffer_target: Option<usize>,
    pub length_delta: isize,
    /// Pointer and frontier at the moment it was applied.
    pub pointer: usize,
    pub frontier: usize,
    pub applied_at: DateTime<Utc>,
    /// Output frame at which the edit had fully played (or the jump was
    /// taken).
    pub realised_frame: Option<usize>,
    pub undone: bool,
}

#[derive(Debug, Clone, Copy)]
struct Watch {
    record: usize,
    pos: usize,
    jump: bool,
}

/// A playback session: buffer, request queue, edit history and log.
pub struct Session {
    cfg: SessionConfig,
    engine: Arc<EngineConfig>,
    clock: Arc<dyn Clock>,
    log: SessionLog,
    tracks: Vec<PlaylistEntry>,
    maps: Vec<TimelineMap>,
    buf: StreamBuffer,
    pop: PopState,
    pop_track: usize,
    queue: VecDeque<Pending>,
    last: Option<Applied>,
    next_id: u64,
    default_level: SubtletyLevel,
    reserved_until: usize,
    records: Vec<EditRecord>,
    watches: Vec<Watch>,
    emitted: usize,
    in_underrun: bool,
    ended: bool,
    stopped: bool,
}

fn iso(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn id_list(ids: &[u64]) -> String {
    ids.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

impl Session {
    /// Checks the playlist, buffers the first track and logs SESSION_START.
    pub fn start(tracks: Vec<PlaylistEntry>, cfg: SessionConfig, clock: Arc<dyn Clock>, log: SessionLog) -> Result<Session> {
        let Some(first) = tracks.first() else { return Err(Error::Refused("empty playlist".into())) };
        let (sr, nc) = (first.track.sample_rate(), first.track.channels());
        for e in &tracks {
            if e.track.sample_rate() != sr || e.track.channels() != nc {
                return Err(Error::Refused(format!(
                    "track {}: {} Hz / {} ch differs from {} Hz / {} ch of the first track",
                    e.id,
                    e.track.sample_rate(),
                    e.track.channels(),
                    sr,
                    nc
                )));
            }
            if e.profile.track_hash != crate::analysis::track_hash(&e.track) {
                return Err(Error::Refused(format!("track {}: profile does not match the audio; run preprocess", e.id)));
            }
        }
        if cfg.frame_size == 0 || cfg.queue_capacity == 0 {
            return Err(Error::Parameter("frame size and queue capacity must be positive".into()));
        }
        let lead = cfg.engine.lead_margin(sr);
        let mut s = Session {
            engine: Arc::new(cfg.engine.clone()),
            pop: PopState::new(cfg.seed),
            default_level: cfg.default_level,
            cfg,
            clock,
            log,
            tracks,
            maps: Vec::new(),
            buf: StreamBuffer::new(sr, nc, lead),
            pop_track: 0,
            queue: VecDeque::new(),
            last: None,
            next_id: 1,
            reserved_until: 0,
            records: Vec::new(),
            watches: Vec::new(),
            emitted: 0,
            in_underrun: false,
            ended: false,
            stopped: false,
        };
        let ids: Vec<&str> = s.tracks.iter().map(|e| e.id.as_str()).collect();
        let f = fields![
            "tracks" => ids.join(","),
            "rate" => sr,
            "channels" => nc,
            "level" => s.default_level,
            "lead_s" => s.cfg.engine.lead_margin_s,
        ];
        s.push(EventKind::SessionStart, f);
        s.load_next()?;
        s.fill();
        Ok(s)
    }

    fn push(&mut self, event: EventKind, fields: Vec<(String, String)>) {
        let now = self.clock.now();
        self.log.push(now, event, fields);
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    pub fn records(&self) -> &[EditRecord] {
        &self.records
    }

    pub fn buffer(&self) -> &StreamBuffer {
        &self.buf
    }

    pub fn sample_rate(&self) -> u32 {
        self.buf.sample_rate()
    }

    pub fn channels(&self) -> u16 {
        self.buf.channels()
    }

    pub fn default_level(&self) -> SubtletyLevel {
        self.default_level
    }

    /// Frames handed to the sink so far, silence included.
    pub fn emitted_frames(&self) -> usize {
        self.emitted
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn is_ended(&self) -> bool {
        self.ended
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// Buffer range occupied by each loaded track.
    pub fn track_spans(&self) -> Vec<(usize, usize)> {
        self.maps.iter().map(|m| (m.buffer_start(), m.buffer_end())).collect()
    }

    fn alive(&self) -> Result<()> {
        if self.stopped {
            Err(Error::Refused("session stopped".into()))
        } else {
            Ok(())
        }
    }

    pub fn set_level(&mut self, level: SubtletyLevel) -> Result<()> {
        self.alive()?;
        self.default_level = level;
        self.push(EventKind::Level, fields!["level" => level]);
        Ok(())
    }

    /// Records the listener's description of what they were doing.
    pub fn task(&mut self, text: &str) -> Result<()> {
        self.alive()?;
        self.push(EventKind::Task, fields!["text" => text]);
        Ok(())
    }

    /// Accepts a request. It is never refused for load: when the queue is
    /// full the request (or an older one from the same source) is dropped
    /// and logged.
    pub fn notify(&mut self, req: SignalRequest) -> Result<u64> {
        self.alive()?;
        let id = self.next_id;
        self.next_id += 1;
        let level = req.level.unwrap_or(self.default_level);
        let f = fields![
            "id" => id,
            "source" => req.source,
            "level" => level,
            "explicit" => req.level.is_some(),
            "received_at" => iso(req.received_at),
        ];
        self.push(EventKind::Notify, f);
        let t = req.received_at;
        let spacing = chrono::Duration::milliseconds((self.cfg.min_spacing_s * 1000.0).round() as i64);
        let near = |at: DateTime<Utc>| t >= at && t - at < spacing;

        if let Some(p) = self.queue.iter_mut().find(|p| near(p.group_at)) {
            p.merged.push(id);
            if level > p.level {
                p.level = level;
                p.generation += 1;
            }
            return Ok(id);
        }
        if let Some(a) = self.last.as_ref().filter(|a| near(a.group_at)) {
            if level <= a.level {
                let head = a.id;
                let r = &self.records[a.record];
                let f = fields![
                    "id" => id,
                    "coalesced_with" => head,
                    "kind" => r.plan.kind.as_str(),
                    "level" => r.plan.provenance.level,
                ];
                self.last.as_mut().unwrap().merged.push(id);
                self.push(EventKind::Edit, f);
                return Ok(id);
            }
            if a.undo.anchor() >= self.buf.edit_frontier() {
                let a = self.last.take().unwrap();
                let group_at = a.group_at;
                let head = a.id;
                self.revert(a)?;
                self.enqueue(Pending {
                        id,
                        group_at,
                        level,
                        merged: Vec::new(),
                        source: req.source.clone(),
                        supersedes: Some(head),
                        hop_track: None,
                        note: None,
                        generation: 0,
                        in_flight: false,
                });
                return Ok(id);
            }
        }
        let p = Pending {
            id,
            group_at: t,
            level,
            merged: Vec::new(),
            source: req.source.clone(),
            supersedes: None,
            hop_track: None,
            note: None,
            generation: 0,
            in_flight: false,
        };
        self.enqueue(p);
        Ok(id)
    }

    fn enqueue(&mut self, p: Pending) {
        if self.queue.len() >= self.cfg.queue_capacity {
            let same = self.queue.iter().position(|q| !q.in_flight && q.source == p.source);
            match same {
                Some(i) => {
                    let old = self.queue.remove(i).unwrap();
                    for oid in old.ids().collect::<Vec<_>>() {
                        self.push(EventKind::Drop, fields!["id" => oid, "reason" => "queue_full", "replaced_by" => p.id]);
                    }
                }
                None => {
                    for oid in p.ids().collect::<Vec<_>>() {
                        self.push(EventKind::Drop, fields!["id" => oid, "reason" => "queue_full"]);
                    }
                    return;
                }
            }
        }
        self.queue.push_back(p);
    }

    fn revert(&mut self, a: Applied) -> Result<()> {
        self.buf.undo(a.undo)?;
        self.maps = a.maps;
        self.reserved_until = a.reserved_until;
        self.pop = a.pop;
        self.pop_track = a.pop_track;
        self.records[a.record].undone = true;
        self.watches.retain(|w| w.record != a.record);
        Ok(())
    }

    /// Appends the next playlist track. Returns false when none is left.
    fn load_next(&mut self) -> Result<bool> {
        let k = self.maps.len();
        let Some(e) = self.tracks.get(k) else { return Ok(false) };
        let track = Arc::clone(&e.track);
        let at = self.buf.append(&track)?;
        self.maps.push(TimelineMap::new(at, track.frames()));
        if self.maps.len() == self.tracks.len() {
            self.buf.finish();
        }
        Ok(true)
    }

    /// Producer step: buffers further tracks when playback nears the end of
    /// what is buffered, and releases audio behind the current track.
    pub fn fill(&mut self) {
        let preload = (self.cfg.preload_s * self.sample_rate() as f64).round() as usize;
        while self.buf.len() <= self.buf.pointer() + preload {
            match self.load_next() {
                Ok(true) => {}
                _ => break,
            }
        }
        if let Some(k) = self.track_at(self.buf.pointer()) {
            self.buf.drop_before(self.maps[k].buffer_start());
        }
    }

    fn track_at(&self, b: usize) -> Option<usize> {
        self.maps.iter().position(|m| b >= m.buffer_start() && b < m.buffer_end())
    }

    /// First track position in track `k` whose buffer position is at or
    /// after `b`.
    fn track_pos(&self, k: usize, b: usize) -> usize {
        let m = &self.maps[k];
        let b = b.max(m.buffer_start());
        if b >= m.buffer_end() {
            return m.track_len();
        }
        let mut p = m.to_track(b);
        while p < m.track_len() && m.to_buffer(p) < b {
            p += 1;
        }
        p
    }

    fn degrade(&mut self, p: &Pending, reason: &str) {
        let ids: Vec<u64> = p.ids().collect();
        let f = fields!["id" => p.id, "merged" => id_list(&ids[1..]), "level" => p.level, "reason" => reason];
        let f = f.into_iter().filter(|(k, v)| k != "merged" || !v.is_empty()).collect();
        self.push(EventKind::Degraded, f);
    }

    /// Next request to plan, marked in flight. Requests that cannot be
    /// placed anywhere are logged as DEGRADED here.
    pub fn next_job(&mut self) -> Option<Job> {
        if self.stopped {
            return None;
        }
        loop {
            let i = self.queue.iter().position(|p| !p.in_flight)?;
            let floor = self.buf.edit_frontier().max(self.reserved_until);
            let track = match self.queue[i].hop_track {
                Some(k) => {
                    while self.maps.len() <= k {
                        if !matches!(self.load_next(), Ok(true)) {
                            break;
                        }
                    }
                    (k < self.maps.len()).then_some(k)
                }
                None => {
                    while self.track_at(floor).is_none() {
                        if !matches!(self.load_next(), Ok(true)) {
                            break;
                        }
                    }
                    self.track_at(floor)
                }
            };
            let Some(k) = track else {
                let p = self.queue.remove(i).unwrap();
                self.degrade(&p, "no audio left ahead of the edit frontier");
                continue;
            };
            let playing = self.track_at(self.buf.pointer());
            if self.queue[i].hop_track.is_none() && playing.is_some_and(|t| t != k) {
                self.queue[i].note = Some(format!("arrived at the end of track {}; placed in the next track", playing.unwrap()));
            }
            let earliest = self.track_pos(k, floor);
            let mut pop = self.pop.clone();
            if k != self.pop_track {
                pop.reset_track();
            }
            let avoid = self
                .records
                .iter()
                .filter(|r| r.track == k && !r.undone && r.plan.kind != EditKind::Jump)
                .map(|r| (r.plan.anchor, r.plan.anchor + (r.buffer_end - r.buffer_anchor).max(r.plan.span).max(1)))
                .collect();
            let p = &mut self.queue[i];
            p.in_flight = true;
            return Some(Job {
                id: p.id,
                level: p.level,
                track: k,
                earliest,
                generation: p.generation,
                entry: self.tracks[k].clone(),
                config: Arc::clone(&self.engine),
                pop,
                avoid,
            });
        }
    }

    /// Applies a planned job, or decides what happens to the request if the
    /// plan failed.
    pub fn commit(&mut self, job: Job, result: Result<EditPlan>) -> CommitOutcome {
        let Some(i) = self.queue.iter().position(|p| p.id == job.id) else { return CommitOutcome::Gone };
        if self.stopped {
            return CommitOutcome::Gone;
        }
        if self.queue[i].generation != job.generation {
            self.queue[i].in_flight = false;
            return CommitOutcome::Retry;
        }
        let plan = match result {
            Ok(p) => p,
            Err(Error::NoRoom { .. }) if job.track + 1 < self.tracks.len() => {
                let p = &mut self.queue[i];
                p.hop_track = Some(job.track + 1);
                p.note = Some(format!("no room left in track {}; placed in the next track", job.track));
                p.in_flight = false;
                return CommitOutcome::Retry;
            }
            Err(e) => {
                let p = self.queue.remove(i).unwrap();
                let reason = match e {
                    Error::NoRoom { .. } => "request too close to the end of the final track".to_string(),
                    e => e.to_string(),
                };
                self.degrade(&p, &reason);
                return CommitOutcome::Skipped;
            }
        };
        let bp = self.maps[job.track].to_buffer_plan(&plan);
        let pointer = self.buf.pointer();
        let frontier = self.buf.edit_frontier();
        if bp.anchor < frontier.max(self.reserved_until) {
            self.queue[i].in_flight = false;
            return CommitOutcome::Retry;
        }
        let snapshot = (self.maps.clone(), self.reserved_until, self.pop.clone(), self.pop_track);
        let (receipt, undo) = match apply_edit_undoable(&mut self.buf, &bp, self.engine.limiter_knee) {
            Ok(r) => r,
            Err(Error::EditRejected(RejectReason::TooLate { .. })) => {
                self.queue[i].in_flight = false;
                return CommitOutcome::Retry;
            }
            Err(e) => {
                let p = self.queue.remove(i).unwrap();
                self.degrade(&p, &e.to_string());
                return CommitOutcome::Skipped;
            }
        };
        let p = self.queue.remove(i).unwrap();
        let delta = receipt.length_delta;
        self.maps[job.track].record(&plan);
        for m in &mut self.maps[job.track + 1..] {
            m.shift(delta);
        }
        if delta != 0 {
            for w in &mut self.watches {
                if w.pos > bp.anchor {
                    w.pos = (w.pos as isize + delta) as usize;
                }
            }
        }
        self.pop = job.pop;
        self.pop_track = job.track;
        let end = bp.anchor + receipt.span;
        self.reserved_until = match bp.kind {
            EditKind::Jump => bp.anchor.max(bp.jump_target.unwrap_or(0)),
            _ => end,
        };
        let record = self.records.len();
        self.watches.push(Watch { record, pos: if bp.kind == EditKind::Jump { bp.anchor } else { end }, jump: bp.kind == EditKind::Jump });
        let now = self.clock.now();
        let degraded = [p.note.clone(), plan.degraded.clone()].into_iter().flatten().collect::<Vec<_>>().join("; ");
        let sr = self.sample_rate() as f64;
        let mut f = fields![
            "id" => p.id,
            "merged" => id_list(&p.merged),
            "kind" => plan.kind.as_str(),
            "level" => plan.provenance.level,
            "requested" => p.level,
            "category" => plan.provenance.category.as_str(),
            "track" => self.tracks[job.track].id,
            "at_s" => format!("{:.3}", plan.anchor as f64 / sr),
            "anchor" => bp.anchor,
            "pointer" => pointer,
            "frontier" => frontier,
            "length_delta" => delta,
        ];
        if let Some(t) = plan.jump_target {
            f.push(("target_s".into(), format!("{:.3}", t as f64 / sr)));
        }
        if let Some(s) = p.supersedes {
            f.push(("supersedes".into(), s.to_string()));
        }
        if !degraded.is_empty() {
            f.push(("degraded".into(), degraded));
        }
        f.retain(|(k, v)| k != "merged" || !v.is_empty());
        self.records.push(EditRecord {
            id: p.id,
            merged: p.merged.clone(),
            track: job.track,
            plan: EditPlan { payload: None, ..plan.clone() },
            requested: p.level,
            buffer_anchor: bp.anchor,
            buffer_end: end,
            buffer_target: bp.jump_target,
            length_delta: delta,
            pointer,
            frontier,
            applied_at: now,
            realised_frame: None,
            undone: false,
        });
        self.log.push(now, EventKind::Edit, f);
        self.last = Some(Applied {
            id: p.id,
            group_at: p.group_at,
            level: p.level,
            merged: p.merged,
            record,
            undo,
            maps: snapshot.0,
            reserved_until: snapshot.1,
            pop: snapshot.2,
            pop_track: snapshot.3,
        });
        CommitOutcome::Applied
    }

    /// Plans and applies everything queued, inline.
    pub fn process_pending(&mut self) {
        while let Some(job) = self.next_job() {
            let (job, r) = job.plan();
            self.commit(job, r);
        }
    }

    /// Reader step: emits one block. Once the stream has ended the block is
    /// cut to the audio actually played.
    pub fn tick(&mut self) -> Tick {
        let mut t = self.buf.tick(self.cfg.frame_size);
        let played: usize = t.runs.iter().map(|r| r.1 - r.0).sum();
        if t.ended {
            t.samples.truncate(played * self.buf.channels() as usize);
            self.ended = true;
        }
        for &(from, to) in &t.jumps {
            if self.reserved_until == from.max(to) {
                self.reserved_until = 0;
            }
        }
        self.realise(&t);
        if t.underrun > 0 && !self.in_underrun {
            let f = fields!["pointer" => self.buf.pointer(), "frames" => t.underrun, "output_frame" => self.emitted + played];
            self.push(EventKind::Underrun, f);
        }
        self.in_underrun = t.underrun > 0;
        self.emitted += t.samples.len() / self.buf.channels() as usize;
        t
    }

    fn realise(&mut self, t: &Tick) {
        let mut offsets = Vec::with_capacity(t.runs.len());
        let mut o = self.emitted;
        for &(s, e) in &t.runs {
            offsets.push(o);
            o += e - s;
        }
        let records = &mut self.records;
        self.watches.retain(|w| {
            let frame = if w.jump {
                t.jumps
                    .iter()
                    .find(|j| j.0 == w.pos)
                    .and_then(|j| t.runs.iter().position(|r| r.0 == j.1))
                    .map(|i| offsets[i])
                    .or_else(|| t.jumps.iter().any(|j| j.0 == w.pos).then_some(o))
            } else {
                t.runs.iter().zip(&offsets).find(|(r, _)| r.0 < w.pos && w.pos <= r.1).map(|(r, off)| off + (w.pos - r.0))
            };
            match frame {
                Some(f) => {
                    records[w.record].realised_frame = Some(f);
                    false
                }
                None => true,
            }
        });
    }

    /// Stops the session: anything still queued is logged UNSERVED, then
    /// SESSION_STOP. Further calls do nothing.
    pub fn stop(&mut self) -> &SessionLog {
        if !self.stopped {
            self.stopped = true;
            for p in std::mem::take(&mut self.queue) {
                for id in p.ids() {
                    self.push(EventKind::Unserved, fields!["id" => id]);
                }
            }
            let f = fields!["emitted_frames" => self.emitted, "edits" => self.records.iter().filter(|r| !r.undone).count()];
            self.push(EventKind::SessionStop, f);
            let _ = self.log.flush();
        }
        &self.log
    }
}
