use std::f64::consts::PI;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{EventLevel, InjectedEvent, InjectionManifest};
use crate::analysis::AnalysisProfile;
use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::modengine::SubtletyLevel;
use crate::server::{Clock, MemorySink, PlaylistEntry, ScheduledRequest, Session, SessionConfig, SessionLog, SignalRequest, SimClock, Sink};

pub const CONTROL_HZ: f64 = 880.0;
pub const CONTROL_S: f64 = 0.5;
pub const CONTROL_DBFS: f64 = -12.0;

#[derive(Debug, Clone)]
pub struct InjectOptions {
    pub per_level: usize,
    pub seed: u64,
    /// Insert the control tone instead of genre modifications.
    pub control: bool,
    /// Click latency allowed when scoring.
    pub window_s: f64,
    /// Minimum distance between requests.
    pub spacing_s: f64,
    /// No request earlier than this.
    pub head_s: f64,
    /// No request later than this before the end of the track.
    pub tail_s: f64,
    pub session: SessionConfig,
}

impl Default for InjectOptions {
    fn default() -> Self {
        Self { per_level: 2, seed: 0, control: false, window_s: 5.0, spacing_s: 15.0, head_s: 5.0, tail_s: 12.0, session: SessionConfig::default() }
    }
}

#[derive(Debug)]
pub struct Injection {
    pub audio: Waveform,
    pub manifest: InjectionManifest,
    /// Session log of the render; empty for the control condition.
    pub log: SessionLog,
}

/// The stock notification: a raised-cosine 880 Hz blip.
pub fn control_tone(sample_rate: u32, channels: u16) -> Waveform {
    let n = (CONTROL_S * sample_rate as f64).round() as usize;
    let amp = 10f64.powf(CONTROL_DBFS / 20.0);
    let mono: Vec<f32> = (0..n)
        .map(|i| {
            let env = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
            (amp * env * (2.0 * PI * CONTROL_HZ * i as f64 / sample_rate as f64).sin()) as f32
        })
        .collect();
    Waveform::mono(mono, sample_rate).with_channels(channels)
}

/// Request times: `n` points in `[head, duration - tail]` at least
/// `spacing` apart, uniformly placed.
fn schedule(rng: &mut ChaCha8Rng, n: usize, duration_s: f64, opts: &InjectOptions) -> Result<Vec<f64>> {
    let room = duration_s - opts.tail_s - opts.head_s;
    let fits = if room < 0.0 { 0 } else { (room / opts.spacing_s).floor() as usize + 1 };
    if n > fits {
        return Err(Error::Refused(format!(
            "track is too short for {n} events {} s apart; at most {} per level fit",
            opts.spacing_s,
            fits / 3
        )));
    }
    let slack = room - (n.saturating_sub(1)) as f64 * opts.spacing_s;
    let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=slack)).collect();
    u.sort_by(f64::total_cmp);
    Ok(u.iter().enumerate().map(|(i, v)| opts.head_s + v + i as f64 * opts.spacing_s).collect())
}

/// Renders `track` with `per_level` requests at each level (or as many
/// control tones times three) at seeded random times, and records where
/// each one ended up. A request waits until the previous modification has
/// played and a scoring window has passed, so no two overlap.
pub fn inject(id: &str, track: &Waveform, profile: Option<&AnalysisProfile>, opts: &InjectOptions) -> Result<Injection> {
    if opts.per_level == 0 {
        return Err(Error::Parameter("per-level count must be at least 1".into()));
    }
    if !(opts.window_s > 0.0 && opts.spacing_s > 0.0) {
        return Err(Error::Parameter("window and spacing must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = 3 * opts.per_level;
    let times = schedule(&mut rng, n, track.duration_s(), opts)?;
    let manifest = |events| InjectionManifest { track: id.to_string(), seed: opts.seed, window_s: opts.window_s, events };
    if opts.control {
        let (audio, events) = insert_tones(track, &times);
        return Ok(Injection { audio, manifest: manifest(events), log: SessionLog::new() });
    }
    let Some(profile) = profile else {
        return Err(Error::Refused(format!("track {id}: no profile; run preprocess")));
    };
    let mut levels: Vec<SubtletyLevel> = SubtletyLevel::ALL.iter().flat_map(|&l| std::iter::repeat(l).take(opts.per_level)).collect();
    levels.shuffle(&mut rng);
    let requests: Vec<ScheduledRequest> =
        times.iter().zip(&levels).map(|(&at_s, &l)| ScheduledRequest { at_s, level: Some(l), source: "inject".into() }).collect();

    let cfg = SessionConfig { seed: opts.seed, ..opts.session.clone() };
    let clock = SimClock::epoch();
    let entry = PlaylistEntry::new(id, track.clone(), profile.clone());
    let mut session = Session::start(vec![entry], cfg, Arc::new(clock.clone()), SessionLog::new())?;
    let sr = track.sample_rate() as f64;
    let settle = (opts.window_s * sr).round() as usize;
    let mut sink = MemorySink::new();
    // (request id, output frame delivered at)
    let mut delivered: Vec<(u64, usize)> = Vec::new();
    while !session.is_ended() {
        session.fill();
        let now = session.emitted_frames();
        let due = delivered.len() < requests.len() && requests[delivered.len()].at_s * sr <= now as f64;
        if due && delivered.last().map_or(true, |&(prev, _)| settled(&session, prev, now, settle)) {
            let r = &requests[delivered.len()];
            let rid = session.notify(SignalRequest { received_at: clock.now(), level: r.level, source: r.source.clone() })?;
            delivered.push((rid, now));
        }
        session.process_pending();
        let t = session.tick();
        sink.write(&t.samples)?;
        clock.advance_secs((t.samples.len() / track.channels() as usize) as f64 / sr);
    }
    session.stop();
    if delivered.len() < n {
        return Err(Error::Refused(format!(
            "track {id} is too short: only {} of {n} events could be played without overlapping",
            delivered.len()
        )));
    }
    let events = requests
        .iter()
        .zip(&delivered)
        .map(|(r, &(rid, at))| {
            let rec = session.records().iter().find(|e| !e.undone && (e.id == rid || e.merged.contains(&rid)));
            InjectedEvent {
                ts_s: at as f64 / sr,
                end_s: rec.and_then(|e| e.realised_frame).map(|f| f as f64 / sr),
                level: EventLevel::Level(r.level.expect("explicit")),
                kind: rec.map(|e| e.plan.kind.as_str().to_string()),
            }
        })
        .collect::<Vec<_>>();
    let played = events.iter().filter(|e| e.end_s.is_some()).count();
    if played < n {
        return Err(Error::Refused(format!("track {id} is too short: only {played} of {n} events could be played before it ended")));
    }
    let audio = sink.waveform(track.sample_rate(), track.channels());
    Ok(Injection { audio, manifest: manifest(events), log: session.into_log() })
}

/// True once request `id` has played out and `settle` more frames have
/// gone by, or it ended without an edit.
fn settled(session: &Session, id: u64, now: usize, settle: usize) -> bool {
    if let Some(r) = session.records().iter().find(|r| r.id == id || r.merged.contains(&id)) {
        return r.undone || r.realised_frame.is_some_and(|f| now >= f + settle);
    }
    session.log().lines().iter().any(|l| l.event.is_terminal() && l.request_ids().contains(&id))
}

/// Splices the control tone in at each output time.
fn insert_tones(track: &Waveform, times: &[f64]) -> (Waveform, Vec<InjectedEvent>) {
    let (sr, nc) = (track.sample_rate(), track.channels() as usize);
    let tone = control_tone(sr, nc as u16);
    let len = tone.frames();
    let src = track.samples();
    let mut out = Vec::with_capacity(src.len() + times.len() * tone.samples().len());
    let mut events = Vec::new();
    let mut taken = 0;
    for (k, &t) in times.iter().enumerate() {
        let at = (t * sr as f64).round() as usize;
        let from = (at - k * len).min(track.frames());
        out.extend_from_slice(&src[taken * nc..from * nc]);
        out.extend_from_slice(tone.samples());
        taken = from;
        events.push(InjectedEvent {
            ts_s: at as f64 / sr as f64,
            end_s: Some((at + len) as f64 / sr as f64),
            level: EventLevel::Control,
            kind: Some("control".into()),
        });
    }
    out.extend_from_slice(&src[taken * nc..]);
    (Waveform::new(out, sr, nc as u16).expect("whole frames"), events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_tone_shape() {
        let t = control_tone(8000, 2);
        assert_eq!((t.frames(), t.channels()), (4000, 2));
        let peak = t.samples().iter().fold(0f32, |m, v| m.max(v.abs())) as f64;
        assert!((20.0 * peak.log10() - CONTROL_DBFS).abs() < 0.05, "{peak}");
        assert_eq!(t.samples()[0], 0.0);
    }

    #[test]
    fn schedule_respects_spacing_and_bounds() {
        let opts = InjectOptions::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = schedule(&mut rng, 6, 120.0, &opts).unwrap();
            assert!(t[0] >= 5.0 && t[5] <= 108.0);
            assert!(t.windows(2).all(|w| w[1] - w[0] >= 15.0 - 1e-9));
        }
        let e = schedule(&mut ChaCha8Rng::seed_from_u64(0), 6, 60.0, &opts).unwrap_err();
        assert!(e.to_string().contains("at most 1 per level"), "{e}");
    }

    #[test]
    fn control_injection_is_deterministic_and_exact() {
        let sr = 8000;
        let x: Vec<f32> = (0..sr as usize * 120).map(|i| ((i as f32) * 0.01).sin() * 0.3).collect();
        let w = Waveform::mono(x, sr);
        let opts = InjectOptions { control: true, seed: 5, ..Default::default() };
        let a = inject("t", &w, None, &opts).unwrap();
        let b = inject("t", &w, None, &opts).unwrap();
        assert_eq!(a.audio, b.audio);
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.manifest.events.len(), 6);
        assert_eq!(a.audio.frames(), w.frames() + 6 * 4000);
        let e = &a.manifest.events[2];
        let at = (e.ts_s * sr as f64).round() as usize;
        assert_eq!(&a.audio.samples()[at..at + 4000], control_tone(sr, 1).samples());
        // The audio right after the tone is the original, shifted by three tones.
        assert_eq!(a.audio.samples()[at + 4000], w.samples()[at - 2 * 4000]);
    }
}
