use super::{EditKind, EditPlan};

#[derive(Debug, Clone, PartialEq)]
struct Piece {
    track_start: usize,
    track_end: usize,
    buf_start: usize,
    buf_len: usize,
}

impl Piece {
    fn to_buffer(&self, p: usize) -> usize {
        let span = self.track_end - self.track_start;
        if span == 0 {
            return self.buf_start;
        }
        let frac = (p - self.track_start) as f64 / span as f64;
        self.buf_start + (frac * self.buf_len as f64).round() as usize
    }

    fn to_track(&self, b: usize) -> usize {
        if self.buf_len == 0 {
            return self.track_start;
        }
        let frac = (b - self.buf_start) as f64 / self.buf_len as f64;
        (self.track_start + (frac * (self.track_end - self.track_start) as f64).round() as usize).min(self.track_end)
    }
}

/// Piecewise-linear correspondence between positions in one unmodified
/// track and positions in the stream buffer.
///
/// Inserted material belongs to no piece; replaced passages map linearly
/// onto their (differently sized) substitutes.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineMap {
    pieces: Vec<Piece>,
    track_len: usize,
}

impl TimelineMap {
    /// A track of `track_len` samples placed unmodified at `buf_start`.
    pub fn new(buf_start: usize, track_len: usize) -> Self {
        Self { pieces: vec![Piece { track_start: 0, track_end: track_len, buf_start, buf_len: track_len }], track_len }
    }

    pub fn track_len(&self) -> usize {
        self.track_len
    }

    pub fn buffer_start(&self) -> usize {
        self.pieces[0].buf_start
    }

    pub fn buffer_end(&self) -> usize {
        let last = self.pieces.last().unwrap();
        last.buf_start + last.buf_len
    }

    pub fn to_buffer(&self, p: usize) -> usize {
        if p >= self.track_len {
            return self.buffer_end() + (p - self.track_len);
        }
        let i = self.pieces.partition_point(|q| q.track_end <= p);
        self.pieces[i].to_buffer(p)
    }

    /// Track position heard at buffer position `b`. Positions inside
    /// inserted material map to the track position that follows them.
    pub fn to_track(&self, b: usize) -> usize {
        if b < self.buffer_start() {
            return 0;
        }
        for q in &self.pieces {
            if b < q.buf_start {
                return q.track_start;
            }
            if b < q.buf_start + q.buf_len {
                return q.to_track(b);
            }
        }
        self.track_len
    }

    fn split_at(&mut self, p: usize) -> usize {
        let b = self.to_buffer(p);
        self.split_at_buf(p, b)
    }

    /// Splits so a piece starts at track `p`, placed at buffer `b`.
    fn split_at_buf(&mut self, p: usize, b: usize) -> usize {
        if p >= self.track_len {
            return self.pieces.len();
        }
        let i = self.pieces.partition_point(|q| q.track_end <= p);
        let q = self.pieces[i].clone();
        if q.track_start == p {
            return i;
        }
        self.pieces[i] = Piece { track_end: p, buf_len: b - q.buf_start, ..q.clone() };
        self.pieces.insert(i + 1, Piece { track_start: p, track_end: q.track_end, buf_start: b, buf_len: q.buf_start + q.buf_len - b });
        i + 1
    }

    fn shift_from(&mut self, i: usize, delta: isize) {
        for q in &mut self.pieces[i..] {
            q.buf_start = (q.buf_start as isize + delta) as usize;
        }
    }

    /// Moves the whole track by `delta` buffer samples.
    pub fn shift(&mut self, delta: isize) {
        self.shift_from(0, delta);
    }

    /// `len` samples spliced in before track position `p`.
    pub fn record_insert(&mut self, p: usize, len: usize) {
        let i = self.split_at(p);
        self.shift_from(i, len as isize);
    }

    /// Track span `[p, p + span)` now occupies `new_len` buffer samples.
    pub fn record_replace(&mut self, p: usize, span: usize, new_len: usize) {
        let end = (p + span).min(self.track_len);
        if end <= p {
            return;
        }
        let be = self.to_buffer(end);
        let i = self.split_at(p);
        let j = self.split_at_buf(end, be);
        let buf_start = self.pieces[i].buf_start;
        // Inserted material between the two ends is replaced too.
        let old_len = be - buf_start;
        self.pieces.splice(i..j, [Piece { track_start: p, track_end: end, buf_start, buf_len: new_len }]);
        self.shift_from(i + 1, new_len as isize - old_len as isize);
    }

    /// Updates the map for an applied plan expressed in track coordinates.
    pub fn record(&mut self, plan: &EditPlan) {
        match plan.kind {
            EditKind::Insert => self.record_insert(plan.anchor, plan.payload_len()),
            EditKind::Replace => self.record_replace(plan.anchor, plan.span, plan.payload_len()),
            EditKind::Superimpose | EditKind::Jump => {}
        }
    }

    /// Converts a track-coordinate plan into buffer coordinates.
    pub fn to_buffer_plan(&self, plan: &EditPlan) -> EditPlan {
        let anchor = self.to_buffer(plan.anchor);
        let span = match plan.kind {
            EditKind::Replace => self.to_buffer(plan.anchor + plan.span) - anchor,
            _ => plan.span,
        };
        EditPlan { anchor, span, jump_target: plan.jump_target.map(|t| self.to_buffer(t)), ..plan.clone() }
    }
}
