use super::{Clock, Session, SignalRequest, SimClock, Sink};
use crate::error::Result;
use crate::modengine::SubtletyLevel;

/// A request delivered once playback reaches `at_s` seconds of output.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledRequest {
    pub at_s: f64,
    pub level: Option<SubtletyLevel>,
    pub source: String,
}

/// Result of [`simulate`].
#[derive(Debug, Clone, Default)]
pub struct Simulation {
    /// Request ids in schedule order.
    pub ids: Vec<u64>,
    /// Output frame at which each request was delivered.
    pub delivered_at: Vec<usize>,
    pub frames: usize,
}

/// Plays `session` on a simulated clock, one block per step, planning each
/// request as soon as it arrives. Stops when playback ends or after
/// `max_s` seconds of output; the session is not stopped.
pub fn simulate(session: &mut Session, clock: &SimClock, requests: &[ScheduledRequest], max_s: Option<f64>, sink: &mut dyn Sink) -> Result<Simulation> {
    let sr = session.sample_rate() as f64;
    let limit = max_s.map_or(usize::MAX, |s| (s * sr).round() as usize);
    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by(|&a, &b| requests[a].at_s.total_cmp(&requests[b].at_s));
    let mut sim = Simulation { ids: vec![0; requests.len()], delivered_at: vec![0; requests.len()], frames: 0 };
    let mut next = 0;
    while !session.is_ended() && session.emitted_frames() < limit {
        session.fill();
        while next < order.len() && requests[order[next]].at_s * sr <= session.emitted_frames() as f64 {
            let r = &requests[order[next]];
            let id = session.notify(SignalRequest { received_at: clock.now(), level: r.level, source: r.source.clone() })?;
            sim.ids[order[next]] = id;
            sim.delivered_at[order[next]] = session.emitted_frames();
            next += 1;
        }
        session.process_pending();
        let t = session.tick();
        sink.write(&t.samples)?;
        clock.advance_secs((t.samples.len() / session.channels() as usize) as f64 / sr);
    }
    sim.frames = session.emitted_frames();
    Ok(sim)
}
