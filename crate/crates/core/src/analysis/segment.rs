//! Sectional bounds by contiguity-constrained Ward clustering of MFCC frames.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::dsp::FeatureMatrix;
use crate::error::{param, Result};

/// Typical section length used to pick the target cluster count.
pub const TARGET_SEGMENT_S: f64 = 30.0;
pub const MIN_SEGMENTS: usize = 2;
pub const MAX_SEGMENTS: usize = 12;

/// Between-cluster separation, in units of the standard error of the mean
/// difference, below which a split is treated as noise.
const SPLIT_SIGNIFICANCE: f64 = 5.0;

#[derive(Clone)]
struct Cluster {
    start: usize,
    n: usize,
    sum: Vec<f64>,
    sumsq: f64,
    prev: Option<usize>,
    next: Option<usize>,
    alive: bool,
    version: u32,
}

impl Cluster {
    fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.n as f64).collect()
    }

    /// Mean squared distance of members from the centroid.
    fn variance(&self) -> f64 {
        let m2: f64 = self.sum.iter().map(|s| s * s).sum::<f64>() / self.n as f64;
        ((self.sumsq - m2) / self.n as f64).max(0.0)
    }
}

fn ward_cost(a: &Cluster, b: &Cluster) -> f64 {
    let (na, nb) = (a.n as f64, b.n as f64);
    let d2: f64 = a.sum.iter().zip(&b.sum).map(|(x, y)| (x / na - y / nb).powi(2)).sum();
    na * nb / (na + nb) * d2
}

#[derive(PartialEq)]
struct Candidate {
    cost: f64,
    start: usize,
    left: usize,
    left_version: u32,
    right_version: u32,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost.total_cmp(&other.cost).then(self.start.cmp(&other.start))
    }
}

fn significant(a: &Cluster, b: &Cluster) -> bool {
    let d2: f64 = a.mean().iter().zip(b.mean()).map(|(x, y)| (x - y).powi(2)).sum();
    let se2 = a.variance() / a.n as f64 + b.variance() / b.n as f64;
    d2 > SPLIT_SIGNIFICANCE * SPLIT_SIGNIFICANCE * se2 && d2 > 1e-12
}

/// Number of segments the clustering aims for.
pub fn target_segments(duration_s: f64) -> usize {
    ((duration_s / TARGET_SEGMENT_S).round() as usize).clamp(MIN_SEGMENTS, MAX_SEGMENTS)
}

/// Segment start positions, as sample indices at the matrix's rate, of a
/// track `track_len` samples long. Always starts with 0.
pub fn segment_bounds(mfcc: &FeatureMatrix, track_len: usize, min_segment_s: f64) -> Result<Vec<usize>> {
    let n = mfcc.n_rows();
    if n < 2 {
        return Err(param(format!("segmentation needs at least 2 frames, got {n}")));
    }
    let sr = mfcc.sample_rate() as f64;
    let min_seg = (min_segment_s * sr).round() as usize;
    if track_len < 2 * min_seg {
        return Ok(vec![0]);
    }
    let k = target_segments(track_len as f64 / sr).min(n);

    let mut clusters: Vec<Cluster> = (0..n)
        .map(|t| {
            let row = mfcc.row(t);
            Cluster {
                start: t,
                n: 1,
                sum: row.to_vec(),
                sumsq: row.iter().map(|v| v * v).sum(),
                prev: t.checked_sub(1),
                next: (t + 1 < n).then_some(t + 1),
                alive: true,
                version: 0,
            }
        })
        .collect();
    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Reverse<Candidate>>, cl: &[Cluster], a: usize, b: usize| {
        heap.push(Reverse(Candidate {
            cost: ward_cost(&cl[a], &cl[b]),
            start: cl[a].start,
            left: a,
            left_version: cl[a].version,
            right_version: cl[b].version,
        }));
    };
    for t in 0..n - 1 {
        push(&mut heap, &clusters, t, t + 1);
    }
    let mut count = n;
    while count > k {
        let Some(Reverse(c)) = heap.pop() else { break };
        let a = c.left;
        let Some(b) = clusters[a].next else { continue };
        if !clusters[a].alive || clusters[a].version != c.left_version || clusters[b].version != c.right_version {
            continue;
        }
        let right = clusters[b].clone();
        {
            let ca = &mut clusters[a];
            ca.n += right.n;
            ca.sumsq += right.sumsq;
            ca.sum.iter_mut().zip(&right.sum).for_each(|(x, y)| *x += y);
            ca.next = right.next;
            ca.version += 1;
        }
        clusters[b].alive = false;
        if let Some(nx) = right.next {
            clusters[nx].prev = Some(a);
            push(&mut heap, &clusters, a, nx);
        }
        if let Some(pv) = clusters[a].prev {
            push(&mut heap, &clusters, pv, a);
        }
        count -= 1;
    }

    let order: Vec<usize> = {
        let mut v = vec![];
        let mut cur = Some(0);
        while let Some(i) = cur {
            v.push(i);
            cur = clusters[i].next;
        }
        v
    };
    let mut bounds = vec![0usize];
    for w in order.windows(2) {
        let (a, b) = (&clusters[w[0]], &clusters[w[1]]);
        if !significant(a, b) {
            continue;
        }
        let s = mfcc.frame_center(b.start);
        let last = *bounds.last().unwrap();
        if s >= last + min_seg && s + min_seg <= track_len {
            bounds.push(s);
        }
    }
    Ok(bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Waveform;
    use crate::dsp::{mfcc, stft};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SR: usize = 22050;

    fn tone(secs: f64, hz: f64) -> Vec<f32> {
        (0..(secs * SR as f64) as usize)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * hz * i as f64 / SR as f64).sin()) as f32)
            .collect()
    }

    fn lowpassed_noise(secs: f64, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = 0.0f64;
        (0..(secs * SR as f64) as usize)
            .map(|_| {
                y = 0.7 * y + 0.3 * rng.gen_range(-1.0..1.0);
                y as f32
            })
            .collect()
    }

    fn bounds_of(x: Vec<f32>) -> Vec<usize> {
        let w = Waveform::mono(x, SR as u32);
        let m = mfcc(&stft(&w, 2048, 512).unwrap(), 40, 13).unwrap();
        segment_bounds(&m, w.frames(), 5.0).unwrap()
    }

    #[test]
    fn two_textures() {
        let mut x = tone(20.0, 440.0);
        x.extend(lowpassed_noise(20.0, 1));
        let b = bounds_of(x);
        assert_eq!(b.len(), 2, "{b:?}");
        assert!((b[1] as f64 / SR as f64 - 20.0).abs() <= 1.0, "{b:?}");
    }

    #[test]
    fn constant_track_has_no_interior_bounds() {
        assert_eq!(bounds_of(tone(40.0, 440.0)), vec![0]);
    }

    #[test]
    fn three_textures() {
        let mut x = tone(30.0, 440.0);
        x.extend(lowpassed_noise(30.0, 2));
        x.extend(tone(30.0, 660.0));
        let b = bounds_of(x);
        assert_eq!(b.len(), 3, "{b:?}");
        assert!((b[1] as f64 / SR as f64 - 30.0).abs() <= 1.0, "{b:?}");
        assert!((b[2] as f64 / SR as f64 - 60.0).abs() <= 1.0, "{b:?}");
    }

    #[test]
    fn short_track_is_one_segment() {
        assert_eq!(bounds_of(tone(9.0, 440.0)), vec![0]);
    }

    #[test]
    fn target_count_clamped() {
        assert_eq!(target_segments(10.0), 2);
        assert_eq!(target_segments(90.0), 3);
        assert_eq!(target_segments(3600.0), 12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn bounds_strictly_increasing_from_zero(rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 2..400), min_seg in 0.05f64..2.0) {
            let n = rows.len();
            let m = FeatureMatrix::new(rows, 512, 2048, 22050).unwrap();
            let len = (n - 1) * 512 + 2048;
            let b = segment_bounds(&m, len, min_seg).unwrap();
            prop_assert_eq!(b[0], 0);
            prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(b.iter().all(|&s| s < len));
        }
    }
}
