use std::collections::BTreeMap;

use super::{EditKind, EditPlan};
use crate::audio::Waveform;
use crate::dsp::taper_gain;
use crate::error::{RejectReason, Result};

/// Interleaved sample store the playback pointer walks through.
///
/// Positions are absolute frame indices since the start of the session;
/// frames before `base` have been discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBuffer {
    sample_rate: u32,
    channels: usize,
    data: Vec<f32>,
    base: usize,
    pointer: usize,
    lead: usize,
    pending_jumps: BTreeMap<usize, usize>,
    finished: bool,
}

/// One block handed to the output sink.
#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    /// Pointer position before the block.
    pub start: usize,
    /// Interleaved samples, always `frames * channels` long.
    pub samples: Vec<f32>,
    /// `(from, to)` of every redirect taken during the block.
    pub jumps: Vec<(usize, usize)>,
    /// Buffer ranges emitted, in playback order.
    pub runs: Vec<(usize, usize)>,
    /// Frames of silence emitted because data had not arrived yet. The
    /// pointer waits where the data ran out.
    pub underrun: usize,
    /// The pointer is past the end of a finished stream.
    pub ended: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditReceipt {
    pub kind: EditKind,
    pub anchor: usize,
    /// Buffer samples written (payload length; 0 for a jump).
    pub span: usize,
    /// Original samples consumed (Replace), else 0.
    pub replaced: usize,
    /// Change in buffer length.
    pub length_delta: isize,
    pub jump_target: Option<usize>,
    pub limited: bool,
}

impl StreamBuffer {
    pub fn new(sample_rate: u32, channels: u16, lead: usize) -> Self {
        Self {
            sample_rate,
            channels: channels.max(1) as usize,
            data: Vec::new(),
            base: 0,
            pointer: 0,
            lead,
            pending_jumps: BTreeMap::new(),
            finished: false,
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        self.channels as u16
    }

    /// One past the last frame written.
    pub fn len(&self) -> usize {
        self.base + self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pointer(&self) -> usize {
        self.pointer
    }

    pub fn lead(&self) -> usize {
        self.lead
    }

    /// Earliest position an edit may touch.
    pub fn edit_frontier(&self) -> usize {
        self.pointer + self.lead
    }

    pub fn pending_jumps(&self) -> &BTreeMap<usize, usize> {
        &self.pending_jumps
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// No more data will be appended.
    pub fn finish(&mut self) {
        self.finished = true;
    }

    /// Appends `w` and returns the position of its first frame.
    pub fn append(&mut self, w: &Waveform) -> Result<usize> {
        self.check_format(w)?;
        let at = self.len();
        self.data.extend_from_slice(w.samples());
        Ok(at)
    }

    /// Frames `[start, end)` as a waveform; positions outside the stored
    /// range read as silence.
    pub fn read(&self, start: usize, end: usize) -> Waveform {
        let nc = self.channels;
        let mut out = vec![0.0f32; end.saturating_sub(start) * nc];
        let lo = start.max(self.base);
        let hi = end.min(self.len());
        if lo < hi {
            let src = &self.data[(lo - self.base) * nc..(hi - self.base) * nc];
            out[(lo - start) * nc..(hi - start) * nc].copy_from_slice(src);
        }
        Waveform::new(out, self.sample_rate, nc as u16).expect("well-formed buffer")
    }

    /// Releases frames no longer reachable: behind the pointer and behind
    /// every pending jump target.
    pub fn drop_before(&mut self, pos: usize) {
        let keep = self.pending_jumps.values().fold(pos.min(self.pointer), |m, &t| m.min(t));
        let keep = keep.min(self.len());
        if keep > self.base {
            self.data.drain(..(keep - self.base) * self.channels);
            self.base = keep;
        }
    }

    /// Advances the pointer by `frames`, honouring pending jumps.
    pub fn tick(&mut self, frames: usize) -> Tick {
        let nc = self.channels;
        let mut tick = Tick {
            start: self.pointer,
            samples: Vec::with_capacity(frames * nc),
            jumps: Vec::new(),
            runs: Vec::new(),
            underrun: 0,
            ended: false,
        };
        let mut left = frames;
        while left > 0 {
            if let Some(target) = self.pending_jumps.remove(&self.pointer) {
                tick.jumps.push((self.pointer, target));
                self.pointer = target;
            }
            let next_jump = self.pending_jumps.range(self.pointer + 1..).next().map(|(&a, _)| a);
            let run_end = next_jump.unwrap_or(usize::MAX).min(self.pointer + left);
            let avail = self.len().saturating_sub(self.pointer).min(run_end - self.pointer);
            if avail == 0 {
                tick.samples.resize(frames * nc, 0.0);
                if self.finished {
                    tick.ended = true;
                } else {
                    tick.underrun = left;
                }
                break;
            }
            if self.pointer >= self.base {
                let i = (self.pointer - self.base) * nc;
                tick.samples.extend_from_slice(&self.data[i..i + avail * nc]);
            } else {
                tick.samples.resize(tick.samples.len() + avail * nc, 0.0);
            }
            tick.runs.push((self.pointer, self.pointer + avail));
            self.pointer += avail;
            left -= avail;
        }
        tick
    }

    fn check_format(&self, w: &Waveform) -> std::result::Result<(), RejectReason> {
        if w.sample_rate() != self.sample_rate {
            return Err(RejectReason::RateMismatch { payload: w.sample_rate(), buffer: self.sample_rate });
        }
        if w.channels() as usize != self.channels {
            return Err(RejectReason::ChannelMismatch { payload: w.channels() as usize, buffer: self.channels });
        }
        Ok(())
    }

    fn idx(&self, pos: usize) -> usize {
        (pos - self.base) * self.channels
    }

    /// Moves pending jump anchors and targets after a timeline change at
    /// `[a, a + old)` that now spans `new` frames.
    fn remap_jumps(&mut self, a: usize, old: usize, new: usize) {
        let f = |p: usize| -> usize {
            if p < a {
                p
            } else if p >= a + old {
                p + new - old
            } else {
                a + ((p - a) as f64 * new as f64 / old as f64).round() as usize
            }
        };
        self.pending_jumps = std::mem::take(&mut self.pending_jumps).into_iter().map(|(k, v)| (f(k), f(v))).collect();
    }
}

/// Compresses everything above `knee` smoothly towards full scale. Below the
/// knee the signal is untouched; the curve never exceeds 1.
pub fn soft_limit(x: f32, knee: f32) -> f32 {
    let a = x.abs();
    if a <= knee {
        return x;
    }
    let room = 1.0 - knee;
    x.signum() * (knee + room * ((a - knee) / room).tanh())
}

/// What it takes to take an edit back while it is still ahead of the
/// frontier.
#[derive(Debug, Clone, PartialEq)]
pub struct Undo {
    anchor: usize,
    removed: Vec<f32>,
    inserted: usize,
    jumps: BTreeMap<usize, usize>,
}

impl Undo {
    pub fn anchor(&self) -> usize {
        self.anchor
    }
}

impl StreamBuffer {
    /// Reverts the most recent edit. Refused once any part of it is behind
    /// the frontier.
    pub fn undo(&mut self, u: Undo) -> Result<()> {
        let frontier = self.edit_frontier();
        if u.anchor < frontier {
            return Err(RejectReason::TooLate { anchor: u.anchor, frontier }.into());
        }
        let i = self.idx(u.anchor);
        self.data.splice(i..i + u.inserted * self.channels, u.removed);
        self.pending_jumps = u.jumps;
        Ok(())
    }
}

/// Applies a buffer-coordinate plan.
pub fn apply_edit(buf: &mut StreamBuffer, plan: &EditPlan, limiter_knee: f64) -> Result<EditReceipt> {
    apply_edit_undoable(buf, plan, limiter_knee).map(|(r, _)| r)
}

/// [`apply_edit`], also returning how to revert it.
pub fn apply_edit_undoable(buf: &mut StreamBuffer, plan: &EditPlan, limiter_knee: f64) -> Result<(EditReceipt, Undo)> {
    let jumps = buf.pending_jumps.clone();
    let a = plan.anchor;
    let old = match plan.kind {
        EditKind::Superimpose => plan.payload_len(),
        EditKind::Replace => plan.span,
        EditKind::Insert | EditKind::Jump => 0,
    };
    let removed = if a >= buf.base && a + old <= buf.len() {
        let i = buf.idx(a);
        buf.data[i..i + old * buf.channels].to_vec()
    } else {
        Vec::new()
    };
    let r = apply_inner(buf, plan, limiter_knee)?;
    let inserted = if r.kind == EditKind::Jump { 0 } else { r.span };
    Ok((r, Undo { anchor: a, removed, inserted, jumps }))
}

fn apply_inner(buf: &mut StreamBuffer, plan: &EditPlan, limiter_knee: f64) -> Result<EditReceipt> {
    let frontier = buf.edit_frontier();
    if plan.anchor < frontier {
        return Err(RejectReason::TooLate { anchor: plan.anchor, frontier }.into());
    }
    let a = plan.anchor;
    let len = buf.len();
    let nc = buf.channels;
    let mut receipt = EditReceipt { kind: plan.kind, anchor: a, span: 0, replaced: 0, length_delta: 0, jump_target: None, limited: false };

    if plan.kind == EditKind::Jump {
        let target = plan.jump_target.ok_or(RejectReason::OutOfRange)?;
        if a > len || target >= len || target < buf.base {
            return Err(RejectReason::OutOfRange.into());
        }
        buf.pending_jumps.insert(a, target);
        receipt.jump_target = Some(target);
        return Ok(receipt);
    }

    let payload = plan.payload.as_ref().ok_or(RejectReason::OutOfRange)?;
    buf.check_format(payload)?;
    let lp = payload.frames();
    let g = plan.gain as f32;
    receipt.span = lp;

    match plan.kind {
        EditKind::Superimpose => {
            if a + lp > len {
                return Err(RejectReason::OutOfRange.into());
            }
            let i = buf.idx(a);
            let region = &mut buf.data[i..i + lp * nc];
            for (o, &p) in region.iter_mut().zip(payload.samples()) {
                *o += g * p;
            }
            if region.iter().any(|s| s.abs() > 1.0) {
                let knee = limiter_knee as f32;
                for o in region.iter_mut() {
                    *o = soft_limit(*o, knee);
                }
                receipt.limited = true;
            }
        }
        EditKind::Replace => {
            let s = plan.span;
            if a + s > len || s == 0 {
                return Err(RejectReason::OutOfRange.into());
            }
            let i = buf.idx(a);
            let orig = &buf.data[i..i + s * nc];
            let p = payload.samples();
            let mut out = Vec::with_capacity(lp * nc);
            for k in 0..lp {
                let w = taper_gain(k, lp, plan.taper) as f32;
                // Fade the original out under the payload's head ramp and
                // back in under its tail ramp.
                let src = if k < lp / 2 { k.min(s - 1) } else { s.saturating_sub(lp - k) };
                for c in 0..nc {
                    out.push(g * p[k * nc + c] + (1.0 - w) * orig[src * nc + c]);
                }
            }
            buf.data.splice(i..i + s * nc, out);
            buf.remap_jumps(a, s, lp);
            receipt.replaced = s;
            receipt.length_delta = lp as isize - s as isize;
        }
        EditKind::Insert => {
            if a > len {
                return Err(RejectReason::OutOfRange.into());
            }
            let i = buf.idx(a);
            buf.data.splice(i..i, payload.samples().iter().map(|&x| g * x));
            buf.remap_jumps(a, 0, lp);
            receipt.length_delta = lp as isize;
        }
        EditKind::Jump => unreachable!(),
    }
    Ok(receipt)
}
