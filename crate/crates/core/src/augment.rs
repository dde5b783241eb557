//! Speed, tempo, pitch and noise perturbations for single-speaker corpora.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{resample_step, AudioClip};
use crate::corpus::LabeledClip;

/// WSOLA analysis/synthesis window (25 ms at 16 kHz).
pub const WSOLA_WINDOW: usize = 400;
/// WSOLA synthesis hop (10 ms).
pub const WSOLA_HOP: usize = 160;
/// WSOLA similarity search radius (5 ms).
pub const WSOLA_TOLERANCE: usize = 80;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("speed factor {0} outside [0.5, 2.0]")]
    SpeedOutOfRange(f64),
    #[error("stretch rate {0} outside [0.5, 2.0]")]
    RateOutOfRange(f64),
    #[error("pitch shift of {0} semitones outside [-12, 12]")]
    PitchOutOfRange(f64),
    #[error("SNR {0} dB outside [0, 60]")]
    SnrOutOfRange(f64),
    #[error("clip of {len} samples is shorter than one {WSOLA_WINDOW}-sample window")]
    TooShort { len: usize },
    #[error("cannot set an SNR on a silent clip")]
    Silent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSpec {
    pub speed_factors: Vec<f64>,
    pub pitch_semitones: Vec<f64>,
    pub noise_snr_db: Vec<f64>,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            speed_factors: vec![0.9, 1.1],
            pitch_semitones: vec![-2.0, 2.0],
            noise_snr_db: vec![15.0, 25.0],
            seed: 0,
        }
    }
}

impl AugmentSpec {
    /// No perturbations: expansion yields the originals only.
    pub fn none() -> Self {
        AugmentSpec {
            speed_factors: Vec::new(),
            pitch_semitones: Vec::new(),
            noise_snr_db: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if let Some(&f) = self
            .speed_factors
            .iter()
            .find(|f| !(0.5..=2.0).contains(*f))
        {
            return Err(AugmentError::SpeedOutOfRange(f));
        }
        if let Some(&s) = self.pitch_semitones.iter().find(|s| !(s.abs() <= 12.0)) {
            return Err(AugmentError::PitchOutOfRange(s));
        }
        if let Some(&s) = self
            .noise_snr_db
            .iter()
            .find(|s| !(0.0..=60.0).contains(*s))
        {
            return Err(AugmentError::SnrOutOfRange(s));
        }
        Ok(())
    }

    /// Number of clips produced per source clip, original included.
    pub fn variants(&self) -> usize {
        1 + self.speed_factors.len() + self.pitch_semitones.len() + self.noise_snr_db.len()
    }
}

/// Plain resampling: speed and pitch change together by `factor`.
pub fn speed_perturb(clip: &AudioClip, factor: f64) -> Result<AudioClip, AugmentError> {
    if !(0.5..=2.0).contains(&factor) {
        return Err(AugmentError::SpeedOutOfRange(factor));
    }
    if factor == 1.0 {
        return Ok(clip.clone());
    }
    let out_len = (clip.len() as f64 / factor).round() as usize;
    Ok(AudioClip {
        samples: resample_step(&clip.samples, factor, out_len),
        sample_rate: clip.sample_rate,
    })
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

#[inline]
fn sample_at(x: &[f32], i: i64) -> f64 {
    if i >= 0 && (i as usize) < x.len() {
        x[i as usize] as f64
    } else {
        0.0
    }
}

/// Pitch-preserving tempo change by waveform-similarity overlap-add.
///
/// `rate > 1` shortens the clip. Each synthesis frame is taken from near its
/// ideal input position, shifted by up to [`WSOLA_TOLERANCE`] samples to best
/// match the natural continuation of the previous frame.
pub fn time_stretch(clip: &AudioClip, rate: f64) -> Result<AudioClip, AugmentError> {
    if !(0.5..=2.0).contains(&rate) {
        return Err(AugmentError::RateOutOfRange(rate));
    }
    if clip.len() < WSOLA_WINDOW {
        return Err(AugmentError::TooShort { len: clip.len() });
    }
    let x = &clip.samples;
    let target_len = (x.len() as f64 / rate).round() as usize;
    let window = hann(WSOLA_WINDOW);
    let analysis_hop = WSOLA_HOP as f64 * rate;
    let tol = WSOLA_TOLERANCE as i64;

    let mut out = vec![0.0f64; target_len + WSOLA_WINDOW];
    let mut norm = vec![0.0f64; target_len + WSOLA_WINDOW];
    let mut prev_pos: i64 = 0;
    let mut k = 0usize;
    loop {
        let out_pos = k * WSOLA_HOP;
        if out_pos >= target_len {
            break;
        }
        let ideal = (k as f64 * analysis_hop).round() as i64;
        let pos = if k == 0 {
            0
        } else {
            let natural = prev_pos + WSOLA_HOP as i64;
            let mut best = ideal;
            let mut best_score = f64::NEG_INFINITY;
            // search outward from zero so ties keep the smallest shift
            for step in 0..=2 * tol {
                let delta = if step % 2 == 0 {
                    step / 2
                } else {
                    -(step + 1) / 2
                };
                let cand = ideal + delta;
                if cand < 0 {
                    continue;
                }
                let score: f64 = (0..WSOLA_WINDOW as i64)
                    .map(|i| sample_at(x, cand + i) * sample_at(x, natural + i))
                    .sum();
                if score > best_score {
                    best_score = score;
                    best = cand;
                }
            }
            best
        };
        for (i, w) in window.iter().enumerate() {
            out[out_pos + i] += w * sample_at(x, pos + i as i64);
            norm[out_pos + i] += w;
        }
        prev_pos = pos;
        k += 1;
    }
    let samples = out
        .iter()
        .zip(&norm)
        .take(target_len)
        .map(|(&v, &n)| if n > 1e-8 { v / n } else { v })
        .map(|v| v.clamp(-1.0, 1.0) as f32)
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

/// Resample by `2^(semitones/12)`, then stretch back to the original length.
pub fn pitch_shift(clip: &AudioClip, semitones: f64) -> Result<AudioClip, AugmentError> {
    if !(semitones.abs() <= 12.0) {
        return Err(AugmentError::PitchOutOfRange(semitones));
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let sped = speed_perturb(clip, ratio)?;
    let mut stretched = time_stretch(&sped, 1.0 / ratio)?;
    stretched.samples.resize(clip.len(), 0.0);
    Ok(stretched)
}

/// Adds white Gaussian noise at exactly `snr_db` (signal RMS over noise RMS),
/// then clamps to [-1, 1].
pub fn add_noise(clip: &AudioClip, snr_db: f64, seed: u64) -> Result<AudioClip, AugmentError> {
    if !(0.0..=60.0).contains(&snr_db) {
        return Err(AugmentError::SnrOutOfRange(snr_db));
    }
    let signal_rms = clip.rms();
    if signal_rms == 0.0 {
        return Err(AugmentError::Silent);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..clip.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let noise_rms = (noise.iter().map(|n| n * n).sum::<f64>() / noise.len() as f64).sqrt();
    let scale = signal_rms / 10f64.powf(snr_db / 20.0) / noise_rms;
    let samples = clip
        .samples
        .iter()
        .zip(&noise)
        .map(|(&s, &n)| (s as f64 + n * scale).clamp(-1.0, 1.0) as f32)
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one (clip, perturbation) pair, independent of processing order.
pub fn derive_seed(seed: u64, clip_index: usize, variant: usize) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(clip_index as u64)) ^ variant as u64)
}

fn expand_one(
    item: &LabeledClip,
    index: usize,
    spec: &AugmentSpec,
) -> Result<Vec<LabeledClip>, AugmentError> {
    let label = |clip: AudioClip| LabeledClip {
        clip,
        transcript: item.transcript.clone(),
    };
    let mut out = Vec::with_capacity(spec.variants());
    out.push(item.clone());
    for &f in &spec.speed_factors {
        out.push(label(speed_perturb(&item.clip, f)?));
    }
    for &s in &spec.pitch_semitones {
        out.push(label(pitch_shift(&item.clip, s)?));
    }
    for (j, &snr) in spec.noise_snr_db.iter().enumerate() {
        out.push(label(add_noise(
            &item.clip,
            snr,
            derive_seed(spec.seed, index, j),
        )?));
    }
    Ok(out)
}

/// Originals followed by every configured perturbation of each clip, in input
/// order. Transcripts are copied unchanged.
pub fn expand(items: &[LabeledClip], spec: &AugmentSpec) -> Result<Vec<LabeledClip>, AugmentError> {
    spec.validate()?;
    let nested: Vec<Vec<LabeledClip>> = items
        .par_iter()
        .enumerate()
        .map(|(i, item)| expand_one(item, i, spec))
        .collect::<Result<_, _>>()?;
    Ok(nested.into_iter().flatten().collect())
}
