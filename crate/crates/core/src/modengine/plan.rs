use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EditKind, EditPlan, EngineConfig, Provenance, SubtletyLevel};
use crate::analysis::{AnalysisProfile, GenreCategory, ALERT_TAPER, OVERLAY_TAPER};
use crate::audio::Waveform;
use crate::dsp::{pitch_shift, taper_window, time_stretch};
use crate::error::{Error, Result};

/// Everything a planner may look at. Positions are native-rate frames of
/// the unmodified track.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub profile: &'a AnalysisProfile,
    /// The decoded track the profile describes.
    pub track: &'a Waveform,
    /// Earliest track position an edit may start at.
    pub earliest: usize,
    pub config: &'a EngineConfig,
    pub request_id: u64,
    /// Track ranges already modified. A jump back across one would play
    /// that modification a second time, so such targets are skipped.
    pub avoid: &'a [(usize, usize)],
}

impl PlanContext<'_> {
    fn sr(&self) -> f64 {
        self.track.sample_rate() as f64
    }

    fn secs(&self, s: f64) -> usize {
        (s * self.sr()).round() as usize
    }

    fn len(&self) -> usize {
        self.track.frames()
    }

    fn provenance(&self, level: SubtletyLevel) -> Provenance {
        Provenance { category: self.profile.category, level, request_id: self.request_id }
    }

    fn replays(&self, anchor: usize, target: usize) -> bool {
        target < anchor && self.avoid.iter().any(|&(s, e)| e > target && s < anchor)
    }

    fn ahead(&self, v: Vec<usize>) -> Vec<usize> {
        v.into_iter().filter(|&p| p >= self.earliest && p < self.len()).collect()
    }
}

/// Seeded jump chooser plus the beats already jumped to in the current
/// track.
#[derive(Debug, Clone)]
pub struct PopState {
    seed: u64,
    rng: ChaCha8Rng,
    visited: BTreeSet<usize>,
}

impl PopState {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed), visited: BTreeSet::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Beat indices visited so far.
    pub fn visited(&self) -> &BTreeSet<usize> {
        &self.visited
    }

    /// Forgets visits; called when a new track starts.
    pub fn reset_track(&mut self) {
        self.visited.clear();
    }
}

/// Level 3 in every genre: splice the alert excerpt in at `anchor`.
fn alert_plan(ctx: &PlanContext, level: SubtletyLevel, anchor: usize, degraded: Option<String>) -> Result<EditPlan> {
    if anchor > ctx.len() {
        return Err(no_room(ctx));
    }
    let alert = ctx.profile.alert.as_ref().ok_or_else(|| Error::InsufficientRhythm("profile has no alert segment".into()))?;
    Ok(EditPlan {
        kind: EditKind::Insert,
        anchor,
        payload: Some(alert.audio.decode()?),
        gain: 1.0,
        span: 0,
        taper: ALERT_TAPER,
        jump_target: None,
        provenance: ctx.provenance(level),
        degraded,
    })
}

/// Level 3 anchored at the next beat when there is one.
fn alert_at_beat(ctx: &PlanContext, level: SubtletyLevel, degraded: Option<String>) -> Result<EditPlan> {
    match ctx.ahead(ctx.profile.native_beats()).first() {
        Some(&b) => alert_plan(ctx, level, b, degraded),
        None => alert_plan(ctx, level, ctx.earliest, Some(join(degraded, "no beat ahead; anchored at lead margin"))),
    }
}

fn join(a: Option<String>, b: &str) -> String {
    match a {
        Some(a) => format!("{a}; {b}"),
        None => b.to_string(),
    }
}

/// Placement ladder for section-anchored edits: the next segment bound
/// where `need` frames fit, else the next beat, else the earliest position.
fn section_anchor(ctx: &PlanContext, need: usize) -> Option<(usize, Option<String>)> {
    let fits = |p: &usize| p + need <= ctx.len();
    if let Some(b) = ctx.ahead(ctx.profile.native_bounds()).into_iter().find(fits) {
        return Some((b, None));
    }
    if let Some(b) = ctx.ahead(ctx.profile.native_beats()).into_iter().find(fits) {
        return Some((b, Some("no segment bound ahead; anchored at next beat".into())));
    }
    fits(&ctx.earliest).then(|| (ctx.earliest, Some("no segment bound or beat ahead; anchored at lead margin".into())))
}

fn no_room(ctx: &PlanContext) -> Error {
    Error::NoRoom { earliest: ctx.earliest, len: ctx.len() }
}

/// Classical: echo, tempo-warped passage, or alert at the next section.
pub fn plan_classical(ctx: &PlanContext, level: SubtletyLevel) -> Result<EditPlan> {
    let c = ctx.config;
    let p = ctx.profile;
    match level {
        SubtletyLevel::L1 => {
            let n = ctx.secs(c.echo_duration_s);
            // Room for the copy plus the longest possible delay.
            let need = n + ctx.secs(p.curves.bounds.delay_max_s);
            let (b, degraded) = section_anchor(ctx, need).ok_or_else(|| no_room(ctx))?;
            let at = p.to_analysis(b);
            let anchor = b + ctx.secs(p.curves.delay_at(at));
            let src = ctx.track.slice(b, b + n);
            let local = ctx.track.slice(anchor, anchor + n).rms();
            let src_rms = src.rms();
            let gain = if src_rms > 1e-9 { p.curves.echo_at(at) * local / src_rms } else { 0.0 };
            Ok(EditPlan {
                kind: EditKind::Superimpose,
                anchor,
                payload: Some(taper_window(&src, c.echo_taper)?),
                gain,
                span: 0,
                taper: c.echo_taper,
                jump_target: None,
                provenance: ctx.provenance(level),
                degraded,
            })
        }
        SubtletyLevel::L2 => {
            let n = ctx.secs(c.passage_duration_s);
            let (b, degraded) = section_anchor(ctx, n).ok_or_else(|| no_room(ctx))?;
            let rate = p.curves.rate_at(p.to_analysis(b));
            let stretched = time_stretch(&ctx.track.slice(b, b + n), rate)?;
            Ok(EditPlan {
                kind: EditKind::Replace,
                anchor: b,
                payload: Some(taper_window(&stretched, c.crossfade_taper)?),
                gain: 1.0,
                span: n,
                taper: c.crossfade_taper,
                jump_target: None,
                provenance: ctx.provenance(level),
                degraded,
            })
        }
        SubtletyLevel::L3 => {
            let (b, degraded) = section_anchor(ctx, 0).ok_or_else(|| no_room(ctx))?;
            alert_plan(ctx, level, b, degraded)
        }
    }
}

/// RMS of the percussive component over `[start, start + len)`.
fn local_percussive_rms(p: &AnalysisProfile, start: usize, len: usize) -> f64 {
    let c = &p.curves;
    if p.percussive_rms.is_empty() {
        return 0.0;
    }
    let frame_of = |native: usize| {
        let s = p.to_analysis(native) as f64;
        (((s - c.offset as f64) / c.hop_length as f64).round().max(0.0) as usize).min(p.percussive_rms.len() - 1)
    };
    let (i, j) = (frame_of(start), frame_of(start + len));
    let v = &p.percussive_rms[i..=j];
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Blues: the stored percussive overlay laid over the next beat.
pub fn plan_blues(ctx: &PlanContext, level: SubtletyLevel) -> Result<EditPlan> {
    let c = ctx.config;
    let p = ctx.profile;
    let beats = ctx.ahead(p.native_beats());
    let Some(overlay) = p.overlay.as_ref().filter(|_| !p.beats.is_empty()) else {
        let why = if p.beats.is_empty() { "no beats" } else { "no percussive overlay" };
        return alert_plan(ctx, SubtletyLevel::L3.max(level), ctx.earliest, Some(format!("{why}; level 3 at lead margin")));
    };
    let (ratio, offset_ms) = match level {
        SubtletyLevel::L1 => (c.blues_gain[0], c.blues_offset_ms[0]),
        SubtletyLevel::L2 => (c.blues_gain[1], c.blues_offset_ms[1]),
        SubtletyLevel::L3 => return alert_at_beat(ctx, level, None),
    };
    let audio = overlay.audio.decode()?;
    let n = audio.frames();
    let offset = ctx.secs(offset_ms / 1000.0);
    let Some(anchor) = beats.iter().map(|&b| b + offset).find(|&a| a + n <= ctx.len()) else {
        return alert_at_beat(ctx, level, Some("no beat ahead with room for the overlay; level 3".into()));
    };
    let local = local_percussive_rms(p, anchor, n);
    let own = audio.rms();
    if local <= 1e-9 || own <= 1e-9 {
        return alert_at_beat(ctx, level, Some("silent percussion; level 3".into()));
    }
    Ok(EditPlan {
        kind: EditKind::Superimpose,
        anchor,
        payload: Some(audio),
        gain: ratio * local / own,
        span: 0,
        taper: OVERLAY_TAPER,
        jump_target: None,
        provenance: ctx.provenance(level),
        degraded: None,
    })
}

/// Jazz: a short phrase swapped for a pitch-shifted copy of itself.
pub fn plan_jazz(ctx: &PlanContext, level: SubtletyLevel) -> Result<EditPlan> {
    let c = ctx.config;
    let (semitones, gain) = match level {
        SubtletyLevel::L1 => (c.jazz_semitones[0], c.jazz_gain[0]),
        SubtletyLevel::L2 => (c.jazz_semitones[1], c.jazz_gain[1]),
        SubtletyLevel::L3 => {
            let (b, degraded) = section_anchor(ctx, 0).ok_or_else(|| no_room(ctx))?;
            return alert_plan(ctx, level, b, degraded);
        }
    };
    let n = ctx.secs(c.jazz_segment_s);
    let (b, degraded) = section_anchor(ctx, n).ok_or_else(|| no_room(ctx))?;
    let seg = ctx.track.slice(b, b + n);
    let shifted = pitch_shift(&seg, semitones)?;
    let (a, s) = (seg.rms(), shifted.rms());
    let norm = if s > 1e-9 { (a / s) as f32 } else { 0.0 };
    let shifted = Waveform::new(shifted.samples().iter().map(|x| x * norm).collect(), shifted.sample_rate(), shifted.channels())?;
    Ok(EditPlan {
        kind: EditKind::Replace,
        anchor: b,
        span: shifted.frames(),
        payload: Some(taper_window(&shifted, c.crossfade_taper)?),
        gain,
        taper: c.crossfade_taper,
        jump_target: None,
        provenance: ctx.provenance(level),
        degraded,
    })
}

/// Pop: redirect playback from the next beat to a similar one.
pub fn plan_pop(ctx: &PlanContext, level: SubtletyLevel, state: &mut PopState) -> Result<EditPlan> {
    let p = ctx.profile;
    if level == SubtletyLevel::L3 {
        return alert_at_beat(ctx, level, None);
    }
    if p.jump_graph.is_empty() {
        return alert_at_beat(ctx, SubtletyLevel::L3, Some("empty jump graph; level 3".into()));
    }
    let beats = p.native_beats();
    let Some(first) = beats.iter().position(|&b| b >= ctx.earliest && b < ctx.len()) else {
        return alert_at_beat(ctx, SubtletyLevel::L3, Some("no beat ahead; level 3".into()));
    };
    let last = (first + ctx.config.pop_search_beats).min(beats.len() - 1);
    let mut note = None;
    for i in first..=last {
        let cands = p.jump_graph.candidates(i);
        if cands.is_empty() {
            continue;
        }
        let cands: Vec<usize> = cands.iter().copied().filter(|&j| !ctx.replays(beats[i], beats[j])).collect();
        let pool: Vec<usize> = match level {
            SubtletyLevel::L1 => cands.iter().copied().filter(|j| !state.visited.contains(j)).collect(),
            _ if state.visited.is_empty() => {
                note = Some("no visited candidates yet; chose from all".to_string());
                cands
            }
            _ => cands.iter().copied().filter(|j| state.visited.contains(j)).collect(),
        };
        if pool.is_empty() {
            continue;
        }
        let j = pool[state.rng.gen_range(0..pool.len())];
        state.visited.insert(j);
        return Ok(EditPlan {
            kind: EditKind::Jump,
            anchor: beats[i],
            payload: None,
            gain: 1.0,
            span: 0,
            taper: 0.0,
            jump_target: Some(beats[j]),
            provenance: ctx.provenance(level),
            degraded: note,
        });
    }
    alert_at_beat(ctx, SubtletyLevel::L3, Some(format!("no usable jump within {} beats; level 3", ctx.config.pop_search_beats)))
}

/// Dispatches on the profile's genre category.
pub fn plan(ctx: &PlanContext, level: SubtletyLevel, pop: &mut PopState) -> Result<EditPlan> {
    match ctx.profile.category {
        GenreCategory::Classical => plan_classical(ctx, level),
        GenreCategory::Blues => plan_blues(ctx, level),
        GenreCategory::Jazz => plan_jazz(ctx, level),
        GenreCategory::Pop => plan_pop(ctx, level, pop),
    }
}
