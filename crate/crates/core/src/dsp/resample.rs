use std::f64::consts::PI;

use crate::exec;

/// Zero crossings of the sinc kernel on each side.
const HALF_TAPS: f64 = 16.0;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-limited resampling to exactly `out_len` samples, stretching the
/// input uniformly over the output.
pub fn resample_to_len(x: &[f32], out_len: usize) -> Vec<f32> {
    if x.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    if out_len == x.len() {
        return x.to_vec();
    }
    let step = x.len() as f64 / out_len as f64;
    let cutoff = (1.0 / step).min(1.0);
    let reach = HALF_TAPS / cutoff;
    exec::map_range(out_len, |n| {
        let t = n as f64 * step;
        let lo = (t - reach).ceil().max(0.0) as usize;
        let hi = ((t + reach).floor() as usize).min(x.len() - 1);
        let mut acc = 0.0;
        for (k, &v) in x.iter().enumerate().take(hi + 1).skip(lo) {
            let d = t - k as f64;
            let w = 0.5 + 0.5 * (PI * d / reach).cos();
            acc += v as f64 * cutoff * sinc(cutoff * d) * w;
        }
        acc as f32
    })
}

/// Converts `x` from rate `from` to rate `to`.
pub fn resample(x: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to {
        return x.to_vec();
    }
    let out_len = (x.len() as f64 * to as f64 / from as f64).round() as usize;
    resample_to_len(x, out_len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_rates_match() {
        let x = vec![0.1, 0.2, -0.3];
        assert_eq!(resample(&x, 100, 100), x);
    }

    #[test]
    fn lengths_follow_rate_ratio() {
        let x = vec![0.0f32; 44100];
        assert_eq!(resample(&x, 44100, 22050).len(), 22050);
        assert_eq!(resample(&x, 44100, 48000).len(), 48000);
    }

    #[test]
    fn low_tone_survives_downsampling() {
        let x: Vec<f32> = (0..44100)
            .map(|i| (2.0 * PI * 440.0 * i as f64 / 44100.0).sin() as f32)
            .collect();
        let y = resample(&x, 44100, 22050);
        for (n, &v) in y.iter().enumerate().skip(200).take(20000) {
            let want = (2.0 * PI * 440.0 * n as f64 / 22050.0).sin();
            assert!((v as f64 - want).abs() < 2e-3, "{n}: {v} vs {want}");
        }
    }

    #[test]
    fn content_above_new_nyquist_is_removed() {
        let x: Vec<f32> = (0..44100)
            .map(|i| (2.0 * PI * 15000.0 * i as f64 / 44100.0).sin() as f32)
            .collect();
        let y = resample(&x, 44100, 22050);
        assert!(crate::audio::rms(&y[500..21000]) < 0.02);
    }
}
