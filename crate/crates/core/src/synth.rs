//! A toy language whose six "phonemes" are distinct tone and noise patterns.
//!
//! Used for fixtures, benchmarks and end-to-end training checks where no real
//! recordings are available.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio::{AudioClip, CANONICAL_RATE};
use crate::corpus::LabeledClip;
use crate::orthography::Orthography;

pub const PHONEMES: [&str; 6] = ["a", "i", "u", "k", "s", "š"];

pub const ORTHOGRAPHY_CONFIG: &str = "orthography synth
a\tvowel
i\tvowel
u\tvowel
k\tconsonant
s\tconsonant
š\tconsonant\tsh
=\tboundary
ˈ\tsuprasegmental
";

pub const MIN_PHONEME_MS: f64 = 120.0;
pub const MAX_PHONEME_MS: f64 = 220.0;
const GAP_MS: f64 = 40.0;
const EDGE_MS: f64 = 100.0;
const WORD_GAP_MS: f64 = 120.0;
const AMPLITUDE: f64 = 0.3;
const FLOOR_STD: f64 = 0.002;

pub fn orthography() -> Orthography {
    Orthography::parse(ORTHOGRAPHY_CONFIG).expect("built-in orthography parses")
}

fn ms(ms: f64) -> usize {
    (ms * CANONICAL_RATE as f64 / 1000.0).round() as usize
}

/// Appends one phoneme of `n` samples to `out`.
fn render_phoneme(symbol: &str, n: usize, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    let rate = CANONICAL_RATE as f64;
    let white = Normal::new(0.0, 1.0).expect("unit normal");
    let ramp = ms(10.0).min(n / 2);
    let mut prev = 0.0;
    let mut res = (0.0, 0.0);
    for i in 0..n {
        let t = i as f64 / rate;
        let x = match symbol {
            "a" => (2.0 * PI * 500.0 * t).sin(),
            "i" => (2.0 * PI * 2500.0 * t).sin(),
            "u" => 0.5 * ((2.0 * PI * 300.0 * t).sin() + (2.0 * PI * 900.0 * t).sin()),
            "k" => {
                // 400 Hz -> 2000 Hz linear chirp
                let dur = n as f64 / rate;
                let k = (2000.0 - 400.0) / dur;
                (2.0 * PI * (400.0 * t + 0.5 * k * t * t)).sin()
            }
            "s" => {
                // first difference of white noise: energy tilted to the top
                let w: f64 = white.sample(rng);
                let y = 0.5 * (w - prev);
                prev = w;
                y
            }
            "š" => {
                // noise through a two-pole resonator at 1200 Hz
                let w: f64 = white.sample(rng);
                let (r, theta) = (0.97, 2.0 * PI * 1200.0 / rate);
                let y = 0.08 * w + 2.0 * r * theta.cos() * res.0 - r * r * res.1;
                res = (y, res.0);
                y
            }
            _ => unreachable!("unknown synthetic phoneme {symbol}"),
        };
        let env = if i < ramp {
            0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
        } else if i >= n - ramp {
            0.5 - 0.5 * (PI * (n - i) as f64 / ramp as f64).cos()
        } else {
            1.0
        };
        out.push(AMPLITUDE * env * x);
    }
}

/// Renders `text` (phonemes and spaces) deterministically from `seed`.
pub fn render(text: &str, seed: u64) -> AudioClip {
    let orth = orthography();
    let graphemes = orth.tokenize(text).expect("text uses synthetic phonemes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; ms(EDGE_MS)];
    for g in graphemes {
        match g.symbol.as_str() {
            " " => out.extend(std::iter::repeat_n(0.0, ms(WORD_GAP_MS))),
            "=" | "ˈ" => {}
            s => {
                let dur = rng.random_range(MIN_PHONEME_MS..=MAX_PHONEME_MS);
                render_phoneme(s, ms(dur), &mut rng, &mut out);
                out.extend(std::iter::repeat_n(0.0, ms(GAP_MS)));
            }
        }
    }
    out.extend(std::iter::repeat_n(0.0, ms(EDGE_MS)));
    let floor = Normal::new(0.0, FLOOR_STD).expect("valid std");
    let samples = out
        .into_iter()
        .map(|x| (x + floor.sample(&mut rng)).clamp(-1.0, 1.0) as f32)
        .collect();
    AudioClip::new(samples, CANONICAL_RATE).expect("samples are clamped")
}

/// Random phoneme string with no immediate repeats whose expected rendered
/// length falls in `[min_s, max_s]`.
pub fn random_text(rng: &mut impl Rng, min_s: f64, max_s: f64) -> String {
    let per = (MIN_PHONEME_MS + MAX_PHONEME_MS) / 2.0 + GAP_MS;
    let budget = rng.random_range(min_s..=max_s) * 1000.0 - 2.0 * EDGE_MS;
    let count = ((budget / per).floor() as usize).max(1);
    let mut text = String::new();
    let mut last = usize::MAX;
    for _ in 0..count {
        let mut p = rng.random_range(0..PHONEMES.len());
        while p == last {
            p = rng.random_range(0..PHONEMES.len());
        }
        text.push_str(PHONEMES[p]);
        last = p;
    }
    text
}

/// `n` labelled utterances of `min_s..=max_s` seconds.
pub fn corpus(n: usize, min_s: f64, max_s: f64, seed: u64) -> Vec<LabeledClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let transcript = random_text(&mut rng, min_s, max_s);
            let clip = render(&transcript, rng.random());
            LabeledClip { clip, transcript }
        })
        .collect()
}

/// Concatenates utterances with `pause_s` of near-silence between them,
/// returning the recording and each utterance's `(start_s, end_s)`.
pub fn long_recording(
    items: &[LabeledClip],
    pause_s: f64,
    seed: u64,
) -> (AudioClip, Vec<(f64, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = Normal::new(0.0, FLOOR_STD).expect("valid std");
    let pause = (pause_s * CANONICAL_RATE as f64).round() as usize;
    let mut samples: Vec<f32> = Vec::new();
    let mut spans = Vec::with_capacity(items.len());
    for item in items {
        samples.extend((0..pause).map(|_| floor.sample(&mut rng) as f32));
        let start = samples.len();
        samples.extend_from_slice(&item.clip.samples);
        spans.push((
            start as f64 / CANONICAL_RATE as f64,
            samples.len() as f64 / CANONICAL_RATE as f64,
        ));
    }
    samples.extend((0..pause).map(|_| floor.sample(&mut rng) as f32));
    let samples = samples.into_iter().map(|x| x.clamp(-1.0, 1.0)).collect();
    (
        AudioClip::new(samples, CANONICAL_RATE).expect("clamped"),
        spans,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic() {
        assert_eq!(render("aki", 3), render("aki", 3));
        assert_ne!(render("aki", 3), render("aki", 4));
    }

    #[test]
    fn corpus_lengths() {
        let items = corpus(20, 1.0, 3.0, 9);
        for it in &items {
            let d = it.clip.duration_s();
            assert!((0.6..=3.6).contains(&d), "{d}");
            assert!(!it.transcript.is_empty());
            orthography().tokenize(&it.transcript).unwrap();
        }
    }

    #[test]
    fn no_immediate_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let t = random_text(&mut rng, 1.0, 3.0);
            let g: Vec<char> = t.chars().collect();
            assert!(g.windows(2).all(|w| w[0] != w[1]));
        }
    }
}
