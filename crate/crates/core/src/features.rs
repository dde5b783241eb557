//! Log-mel filterbank front end.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("clip of {len} samples is shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("invalid feature spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub window_ms: u32,
    pub hop_ms: u32,
    pub mel_bins: usize,
    pub fft_size: usize,
    pub log_floor: f64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            window_ms: 25,
            hop_ms: 10,
            mel_bins: 40,
            fft_size: 512,
            log_floor: 1e-10,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self, sample_rate: u32) -> Result<(), FeatureError> {
        if self.hop_ms == 0 || self.window_ms < self.hop_ms {
            return Err(FeatureError::InvalidSpec(
                "window must be at least one hop".into(),
            ));
        }
        if self.mel_bins == 0 || self.mel_bins > self.fft_size / 2 {
            return Err(FeatureError::InvalidSpec(
                "mel_bins must lie in 1..=fft_size/2".into(),
            ));
        }
        if self.window_samples(sample_rate) > self.fft_size {
            return Err(FeatureError::InvalidSpec(
                "window longer than the FFT".into(),
            ));
        }
        if !(self.log_floor > 0.0) {
            return Err(FeatureError::InvalidSpec(
                "log_floor must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (sample_rate as usize * self.window_ms as usize) / 1000
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (sample_rate as usize * self.hop_ms as usize) / 1000
    }

    /// `1 + floor((n - window) / hop)`, or zero when `n < window`.
    pub fn frame_count(&self, n: usize, sample_rate: u32) -> usize {
        let w = self.window_samples(sample_rate);
        if n < w {
            0
        } else {
            1 + (n - w) / self.hop_samples(sample_rate)
        }
    }
}

/// Row-major `frames x bins` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl Features {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }

    /// Per-bin mean and variance normalization over the utterance.
    pub fn normalized(&self) -> Features {
        let mut values = self.values.clone();
        if self.frames == 0 {
            return self.clone();
        }
        for b in 0..self.bins {
            let mean = (0..self.frames)
                .map(|t| self.values[t * self.bins + b])
                .sum::<f64>()
                / self.frames as f64;
            let var = (0..self.frames)
                .map(|t| (self.values[t * self.bins + b] - mean).powi(2))
                .sum::<f64>()
                / self.frames as f64;
            let scale = 1.0 / var.sqrt().max(1e-3);
            for t in 0..self.frames {
                let v = &mut values[t * self.bins + b];
                *v = (*v - mean) * scale;
            }
        }
        Features {
            frames: self.frames,
            bins: self.bins,
            values,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale spanning 0 Hz to Nyquist; returns
/// `mel_bins` rows of `fft_size/2 + 1` weights.
pub fn mel_filterbank(spec: &FeatureSpec, sample_rate: u32) -> Vec<Vec<f64>> {
    let n_fft_bins = spec.fft_size / 2 + 1;
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..spec.mel_bins + 2)
        .map(|i| mel_to_hz(top * i as f64 / (spec.mel_bins + 1) as f64))
        .collect();
    (0..spec.mel_bins)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_fft_bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / spec.fft_size as f64;
                    let rise = (f - lo) / (center - lo);
                    let fall = (hi - f) / (hi - center);
                    rise.min(fall).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Reusable extractor holding the FFT plan, window and filterbank.
pub struct FeatureExtractor {
    spec: FeatureSpec,
    sample_rate: u32,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
    fft: Arc<dyn rustfft::Fft<f64>>,
}

impl FeatureExtractor {
    pub fn new(spec: FeatureSpec, sample_rate: u32) -> Result<Self, FeatureError> {
        spec.validate(sample_rate)?;
        let w = spec.window_samples(sample_rate);
        let window = (0..w)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / w as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(spec.fft_size);
        Ok(FeatureExtractor {
            filters: mel_filterbank(&spec, sample_rate),
            spec,
            sample_rate,
            window,
            fft,
        })
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<Features, FeatureError> {
        let w = self.window.len();
        let hop = self.spec.hop_samples(self.sample_rate);
        let frames = self.spec.frame_count(clip.len(), self.sample_rate);
        if frames == 0 {
            return Err(FeatureError::TooShort {
                len: clip.len(),
                window: w,
            });
        }
        let bins = self.spec.mel_bins;
        let n_fft_bins = self.spec.fft_size / 2 + 1;
        let mut values = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(0.0, 0.0); self.spec.fft_size];
        let mut power = vec![0.0f64; n_fft_bins];
        for t in 0..frames {
            let start = t * hop;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, (&s, &win)) in clip.samples[start..start + w]
                .iter()
                .zip(&self.window)
                .enumerate()
            {
                buf[i].re = s as f64 * win;
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for filter in &self.filters {
                let energy: f64 = filter.iter().zip(&power).map(|(a, b)| a * b).sum();
                values.push((energy + self.spec.log_floor).ln());
            }
        }
        Ok(Features {
            frames,
            bins,
            values,
        })
    }
}

pub fn extract_features(clip: &AudioClip, spec: &FeatureSpec) -> Result<Features, FeatureError> {
    FeatureExtractor::new(*spec, clip.sample_rate)?.extract(clip)
}
