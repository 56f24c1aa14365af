use std::f64::consts::PI;

use crate::audio::Waveform;
use crate::error::{param, Error, Result};

/// Raised-cosine gain at position `i` of an `n`-sample segment whose fades
/// each span `fraction * (n - 1)` samples.
pub fn taper_gain(i: usize, n: usize, fraction: f64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = fraction * (n - 1) as f64;
    let d = i.min(n - 1 - i) as f64;
    if d >= m {
        1.0
    } else {
        0.5 - 0.5 * (PI * d / m).cos()
    }
}

/// Fades both edges of `seg` in and out with a raised cosine. Endpoints come
/// out exactly zero; at `fraction = 0.5` this is the symmetric Hann window.
pub fn taper_window(seg: &Waveform, fraction: f64) -> Result<Waveform> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(param(format!("taper fraction {fraction} outside (0, 0.5]")));
    }
    if seg.is_empty() {
        return Err(Error::InputTooShort { needed: 1, got: 0 });
    }
    let n = seg.frames();
    let nc = seg.channels() as usize;
    let samples = seg
        .samples()
        .iter()
        .enumerate()
        .map(|(j, &s)| (s as f64 * taper_gain(j / nc, n, fraction)) as f32)
        .collect();
    Waveform::new(samples, seg.sample_rate(), seg.channels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::stft::hann;

    #[test]
    fn endpoints_zero_interior_untouched() {
        let w = taper_window(&Waveform::mono(vec![1.0; 1001], 100), 0.1).unwrap();
        let s = w.samples();
        assert_eq!(s[0], 0.0);
        assert_eq!(s[1000], 0.0);
        assert_eq!(s[500], 1.0);
    }

    #[test]
    fn half_fraction_is_hann() {
        for n in [2usize, 7, 64, 1000] {
            let w = taper_window(&Waveform::mono(vec![1.0; n], 100), 0.5).unwrap();
            for (a, b) in w.samples().iter().zip(hann(n)) {
                assert!((*a as f64 - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn stereo_tapers_per_frame() {
        let w = Waveform::from_channels(&[vec![1.0; 11], vec![-1.0; 11]], 100).unwrap();
        let t = taper_window(&w, 0.5).unwrap();
        assert_eq!(t.channel(0)[5], 1.0);
        assert_eq!(t.channel(1)[5], -1.0);
        assert_eq!(t.channel(1)[0], 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(taper_window(&Waveform::mono(vec![], 100), 0.2).is_err());
        assert!(taper_window(&Waveform::mono(vec![1.0], 100), 0.0).is_err());
        assert!(taper_window(&Waveform::mono(vec![1.0], 100), 0.6).is_err());
    }
}
