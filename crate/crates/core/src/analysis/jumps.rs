//! Beat-synchronous similarity graph for seamless jumps.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tempo::percentile;
use crate::dsp::FeatureMatrix;

pub const MIN_GRAPH_BEATS: usize = 8;
/// Jumps never land within this many beats of their origin.
pub const MIN_JUMP_DISTANCE: usize = 4;

/// How the similarity cut-off is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpThreshold {
    /// Fixed distance in standardised feature units.
    Absolute(f64),
    /// `scale` times the given percentile of nearest-neighbour distances.
    NearestNeighbour { percentile: f64, scale: f64 },
    /// `scale` times the given percentile of all admissible pairwise
    /// distances.
    Pairwise { percentile: f64, scale: f64 },
}

impl Default for JumpThreshold {
    fn default() -> Self {
        JumpThreshold::Pairwise { percentile: 50.0, scale: 0.15 }
    }
}

/// Directed candidate map `beat -> [beats it may jump to]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JumpGraph {
    pub edges: BTreeMap<usize, Vec<usize>>,
    /// Distance cut-off actually applied.
    pub threshold: f64,
}

impl JumpGraph {
    pub fn candidates(&self, beat: usize) -> &[usize] {
        self.edges.get(&beat).map_or(&[], Vec::as_slice)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(Vec::len).sum()
    }

    /// Number of distinct jump targets.
    pub fn unique_candidates(&self) -> usize {
        self.edges.values().flatten().collect::<BTreeSet<_>>().len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Mean MFCC and chroma over each beat's span, standardised per dimension
/// across beats.
pub fn beat_features(mfcc: &FeatureMatrix, chroma: &FeatureMatrix, beats: &[usize], track_len: usize) -> Vec<Vec<f64>> {
    let mut intervals: Vec<usize> = beats.windows(2).map(|w| w[1] - w[0]).collect();
    intervals.sort_unstable();
    let typical = intervals.get(intervals.len() / 2).copied().unwrap_or(mfcc.hop_length());
    let mut feats: Vec<Vec<f64>> = beats
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let end = beats.get(i + 1).copied().unwrap_or((b + typical).min(track_len.max(b + 1)));
            let a = mfcc.frame_at(b);
            let z = mfcc.frame_at(end).max(a + 1);
            let mut f = mfcc.mean_rows(a, z);
            f.extend(chroma.mean_rows(a, z.min(chroma.n_rows()).max(a + 1)));
            f
        })
        .collect();
    let dims = feats.first().map_or(0, Vec::len);
    let n = feats.len() as f64;
    for d in 0..dims {
        let mean = feats.iter().map(|f| f[d]).sum::<f64>() / n;
        let sd = (feats.iter().map(|f| (f[d] - mean).powi(2)).sum::<f64>() / n).sqrt();
        let live = sd > 1e-9 * (1.0 + mean.abs());
        for f in feats.iter_mut() {
            f[d] = if live { (f[d] - mean) / sd } else { 0.0 };
        }
    }
    feats
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Edges `i -> j` for beats whose features lie within the threshold and at
/// least [`MIN_JUMP_DISTANCE`] beats apart. Fewer than
/// [`MIN_GRAPH_BEATS`] beats give an empty graph.
pub fn build_jump_graph(
    mfcc: &FeatureMatrix,
    chroma: &FeatureMatrix,
    beats: &[usize],
    track_len: usize,
    threshold: JumpThreshold,
) -> JumpGraph {
    if beats.len() < MIN_GRAPH_BEATS {
        return JumpGraph::default();
    }
    let feats = beat_features(mfcc, chroma, beats, track_len);
    let n = feats.len();
    let dist: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| distance(&feats[i], &feats[j])).collect()).collect();
    let cutoff = match threshold {
        JumpThreshold::Absolute(t) => t,
        JumpThreshold::NearestNeighbour { percentile: p, scale } => {
            let nn: Vec<f64> = (0..n)
                .map(|i| {
                    (0..n)
                        .filter(|&j| i.abs_diff(j) >= MIN_JUMP_DISTANCE)
                        .map(|j| dist[i][j])
                        .fold(f64::INFINITY, f64::min)
                })
                .filter(|d| d.is_finite())
                .collect();
            scale * percentile(&nn, p)
        }
        JumpThreshold::Pairwise { percentile: p, scale } => {
            let all: Vec<f64> = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| i.abs_diff(j) >= MIN_JUMP_DISTANCE).map(move |j| (i, j)))
                .map(|(i, j)| dist[i][j])
                .collect();
            if all.is_empty() { 0.0 } else { scale * percentile(&all, p) }
        }
    };
    let mut edges = BTreeMap::new();
    for i in 0..n {
        let c: Vec<usize> = (0..n)
            .filter(|&j| i.abs_diff(j) >= MIN_JUMP_DISTANCE && dist[i][j] <= cutoff)
            .collect();
        if !c.is_empty() {
            edges.insert(i, c);
        }
    }
    JumpGraph { edges, threshold: cutoff }
}
