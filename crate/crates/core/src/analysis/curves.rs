//! Delay, echo-amplitude and tempo-rate curves.
//!
//! All three are the same decreasing affine map of a driving curve onto a
//! target range: the slowest tempo gets the longest delay and the largest
//! rate, the quietest passage gets the loudest relative echo.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Output of [`rescale_curve`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rescaled {
    pub values: Vec<f64>,
    /// Set when `x_max == x_min` and the output is the range midpoint.
    pub degenerate: bool,
}

/// `y(t) = y_max + (y_min - y_max) / (x_max - x_min) * (x(t) - x_min)`,
/// clamped to `[y_min, y_max]`.
pub fn rescale_curve(x: &[f64], x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Rescaled> {
    if y_max < y_min {
        return Err(param(format!("y_max {y_max} below y_min {y_min}")));
    }
    if x_max < x_min {
        return Err(param(format!("x_max {x_max} below x_min {x_min}")));
    }
    if x_max == x_min {
        return Ok(Rescaled { values: vec![(y_min + y_max) / 2.0; x.len()], degenerate: true });
    }
    // Written as a lerp so both endpoints come out exact.
    let values = x
        .iter()
        .map(|&v| {
            let u = (v - x_min) / (x_max - x_min);
            (y_max * (1.0 - u) + y_min * u).clamp(y_min, y_max)
        })
        .collect();
    Ok(Rescaled { values, degenerate: false })
}

/// Configured output ranges for the three derived curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveBounds {
    pub delay_min_s: f64,
    pub delay_max_s: f64,
    pub echo_min: f64,
    pub echo_max: f64,
    pub rate_min: f64,
    pub rate_max: f64,
}

impl Default for CurveBounds {
    fn default() -> Self {
        Self {
            delay_min_s: 0.15,
            delay_max_s: 0.6,
            echo_min: 0.4,
            echo_max: 0.9,
            rate_min: 1.05,
            rate_max: 1.25,
        }
    }
}

/// Per-hop curves on the analysis frame timeline.
///
/// Value `i` describes sample `offset + i * hop_length` at `sample_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub hop_length: usize,
    pub sample_rate: u32,
    pub offset: usize,
    /// Smoothed tempo, BPM.
    pub tempo: Vec<f64>,
    /// Echo delay, seconds.
    pub delay: Vec<f64>,
    /// Echo gain relative to local RMS.
    pub echo_amp: Vec<f64>,
    /// Tempo scaling factor.
    pub rate: Vec<f64>,
    /// Smoothed RMS amplitude.
    pub amplitude: Vec<f64>,
    pub tempo_min: f64,
    pub tempo_max: f64,
    pub amp_min: f64,
    pub amp_max: f64,
    pub bounds: CurveBounds,
    pub tempo_degenerate: bool,
    pub amp_degenerate: bool,
}

impl CurveSet {
    pub fn build(
        tempo: Vec<f64>,
        tempo_min: f64,
        tempo_max: f64,
        amplitude: Vec<f64>,
        bounds: CurveBounds,
        hop_length: usize,
        sample_rate: u32,
        offset: usize,
    ) -> Result<CurveSet> {
        let amp_min = amplitude.iter().cloned().fold(f64::INFINITY, f64::min);
        let amp_max = amplitude.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (amp_min, amp_max) = if amplitude.is_empty() { (0.0, 0.0) } else { (amp_min, amp_max) };
        let b = bounds;
        let delay = rescale_curve(&tempo, tempo_min, tempo_max, b.delay_min_s, b.delay_max_s)?;
        let rate = rescale_curve(&tempo, tempo_min, tempo_max, b.rate_min, b.rate_max)?;
        let echo = rescale_curve(&amplitude, amp_min, amp_max, b.echo_min, b.echo_max)?;
        Ok(CurveSet {
            hop_length,
            sample_rate,
            offset,
            tempo_degenerate: delay.degenerate,
            amp_degenerate: echo.degenerate,
            delay: delay.values,
            rate: rate.values,
            echo_amp: echo.values,
            tempo,
            amplitude,
            tempo_min,
            tempo_max,
            amp_min,
            amp_max,
            bounds,
        })
    }

    fn index_at(&self, sample: usize) -> usize {
        let i = ((sample as f64 - self.offset as f64) / self.hop_length as f64).round().max(0.0) as usize;
        i.min(self.tempo.len().saturating_sub(1))
    }

    pub fn delay_at(&self, sample: usize) -> f64 {
        self.delay[self.index_at(sample)]
    }
    pub fn echo_at(&self, sample: usize) -> f64 {
        self.echo_amp[self.index_at(sample)]
    }
    pub fn rate_at(&self, sample: usize) -> f64 {
        self.rate[self.index_at(sample)]
    }
    pub fn tempo_at(&self, sample: usize) -> f64 {
        self.tempo[self.index_at(sample)]
    }
}
