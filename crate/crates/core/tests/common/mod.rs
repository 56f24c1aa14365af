//! Synthetic tracks shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soundsignal_core::Waveform;

pub const SR: u32 = 22050;

pub fn sine(hz: f64, secs: f64, amp: f64) -> Waveform {
    let n = (secs * SR as f64) as usize;
    Waveform::mono((0..n).map(|i| (amp * (2.0 * PI * hz * i as f64 / SR as f64).sin()) as f32).collect(), SR)
}

fn add(out: &mut [f32], at: usize, x: &[f32]) {
    let at = at.min(out.len());
    for (o, v) in out[at..].iter_mut().zip(x) {
        *o += v;
    }
}

/// Harmonic note with an exponential decay.
fn note(hz: f64, len: usize, amp: f64, decay: f64, partials: &[f64]) -> Vec<f32> {
    (0..len)
        .map(|i| {
            let t = i as f64 / SR as f64;
            let env = (-decay * t).exp() * (1.0 - (-t * 400.0).exp());
            let v: f64 = partials.iter().enumerate().map(|(k, a)| a * (2.0 * PI * hz * (k + 1) as f64 * t).sin()).sum();
            (amp * env * v) as f32
        })
        .collect()
}

/// Short decaying noise burst.
fn burst(rng: &mut ChaCha8Rng, len: usize, amp: f64, decay: f64) -> Vec<f32> {
    (0..len).map(|i| (amp * (-decay * i as f64 / SR as f64).exp() * rng.gen_range(-1.0..1.0)) as f32).collect()
}

/// Sustained chords in 10 s sections with slow crossfades; no attacks.
pub fn classical(secs: f64) -> Waveform {
    let chords: [[f64; 3]; 6] = [
        [220.0, 277.2, 329.6],
        [196.0, 246.9, 293.7],
        [174.6, 220.0, 261.6],
        [164.8, 207.7, 246.9],
        [146.8, 185.0, 220.0],
        [261.6, 329.6, 392.0],
    ];
    let n = (secs * SR as f64) as usize;
    let section = 10.0;
    let fade = 1.5;
    let mut out = vec![0f32; n];
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / SR as f64;
        let k = (t / section) as usize;
        let pos = t - k as f64 * section;
        let mut v = 0.0;
        for (kk, w) in [(k, 1.0), (k + 1, 0.0)] {
            let w = if kk == k + 1 {
                if pos > section - fade { (pos - (section - fade)) / fade } else { 0.0 }
            } else if pos > section - fade {
                1.0 - (pos - (section - fade)) / fade
            } else {
                w
            };
            if w == 0.0 {
                continue;
            }
            let c = chords[kk % chords.len()];
            for (j, f) in c.iter().enumerate() {
                let trem = 1.0 + 0.15 * (2.0 * PI * (0.2 + 0.07 * j as f64) * t).sin();
                v += w * trem * (0.12 * (2.0 * PI * f * t).sin() + 0.04 * (2.0 * PI * 2.0 * f * t).sin());
            }
        }
        *o = v as f32;
    }
    Waveform::mono(out, SR)
}

/// Loud percussive clicks on every beat over a quiet bass drone.
pub fn blues(secs: f64) -> Waveform {
    let n = (secs * SR as f64) as usize;
    let beat = SR as usize / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out: Vec<f32> = (0..n).map(|i| (0.08 * (2.0 * PI * 110.0 * i as f64 / SR as f64).sin()) as f32).collect();
    for b in (0..n).step_by(beat) {
        add(&mut out, b, &burst(&mut rng, 2000, 0.8, 120.0));
    }
    Waveform::mono(out, SR)
}

/// Note on every beat plus kick and off-beat hi-hat bursts.
fn melodic(secs: f64, bpm: f64, voice: &mut dyn FnMut(usize) -> (f64, [f64; 4], f64), seed: u64) -> Waveform {
    let n = (secs * SR as f64) as usize;
    let beat = (60.0 / bpm * SR as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<f32> = (0..n).map(|_| (0.02 * rng.gen_range(-1.0..1.0)) as f32).collect();
    for (k, b) in (0..n).step_by(beat).enumerate() {
        let (hz, partials, decay) = voice(k);
        add(&mut out, b, &note(hz, beat, 0.35, decay, &partials));
        add(&mut out, b, &burst(&mut rng, 600, 0.3, 300.0));
        add(&mut out, b + beat / 2, &burst(&mut rng, 600, 0.08, 300.0));
    }
    Waveform::mono(out, SR)
}

const LOOP: [f64; 16] = [
    262.0, 330.0, 392.0, 523.0, 294.0, 349.0, 440.0, 587.0, 247.0, 311.0, 370.0, 494.0, 220.0, 277.0, 330.0, 440.0,
];

/// Rhythmic and repetitive: a 16-beat riff looped.
pub fn pop(secs: f64) -> Waveform {
    melodic(secs, 120.0, &mut |k| (LOOP[k % LOOP.len()], [1.0, 0.4, 0.2, 0.0], 4.0), 21)
}

/// Rhythmic, never repeating: every beat a fresh pitch and timbre.
pub fn jazz(secs: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    melodic(
        secs,
        120.0,
        &mut move |_| {
            let hz = 110.0 * 2f64.powf(rng.gen_range(0.0..3.0));
            let partials = [1.0, rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.8), rng.gen_range(0.0..0.6)];
            (hz, partials, rng.gen_range(1.5..9.0))
        },
        41,
    )
}

/// Like [`jazz`], but the register and timbre change every 20 s, as in
/// successive solos.
pub fn jazz_sections(secs: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    melodic(
        secs,
        120.0,
        &mut move |k| {
            let section = k / 40;
            let base = 110.0 * 2f64.powf((section % 3) as f64);
            let hz = base * 2f64.powf(rng.gen_range(0.0..1.0));
            let bright = if section % 2 == 0 { 0.1 } else { 0.8 };
            let partials = [1.0, bright * rng.gen_range(0.5..1.0), bright * rng.gen_range(0.0..0.8), bright * rng.gen_range(0.0..0.6)];
            (hz, partials, rng.gen_range(1.5..9.0))
        },
        42,
    )
}

/// Stationary white noise.
pub fn noise(secs: f64, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::mono((0..(secs * SR as f64) as usize).map(|_| rng.gen_range(-0.5f32..0.5)).collect(), SR)
}

/// Eight plucked notes, eight different buzzy notes, then the first eight
/// again. Beats every half second.
pub fn aba() -> Waveform {
    let beat = SR as usize / 2;
    let a = [262.0, 330.0, 392.0, 523.0, 294.0, 349.0, 440.0, 587.0];
    let b = [185.0, 208.0, 233.0, 277.0, 311.0, 370.0, 415.0, 466.0];
    let mut out = Vec::with_capacity(24 * beat);
    for f in a {
        out.extend(note(f, beat, 0.4, 3.0, &[1.0]));
    }
    for f in b {
        out.extend(note(f, beat, 0.4, 3.0, &[0.5, 0.3, 0.2]));
    }
    for f in a {
        out.extend(note(f, beat, 0.4, 3.0, &[1.0]));
    }
    Waveform::mono(out, SR)
}

/// Index of the strongest bin of a Hann-windowed DFT, evaluated directly.
pub fn peak_hz(x: &[f32], sr: u32, lo: f64, hi: f64, step: f64) -> f64 {
    let n = x.len();
    let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect();
    let mut best = (0.0, lo);
    let mut f = lo;
    while f <= hi {
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..n {
            let ph = 2.0 * PI * f * i as f64 / sr as f64;
            re += w[i] * x[i] as f64 * ph.cos();
            im -= w[i] * x[i] as f64 * ph.sin();
        }
        let m = re * re + im * im;
        if m > best.0 {
            best = (m, f);
        }
        f += step;
    }
    best.1
}

pub fn rms(x: &[f32]) -> f64 {
    (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len().max(1) as f64).sqrt()
}
