//! Audio clips, WAV PCM16 input/output and windowed-sinc resampling.

use std::io::Cursor;

use thiserror::Error;

/// Every clip inside the toolkit runs at this rate.
pub const CANONICAL_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    Malformed(String),
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),
    #[error("audio contains no samples")]
    Empty,
    #[error("sample {index} = {value} lies outside [-1, 1]")]
    OutOfRange { index: usize, value: f32 },
    #[error("sample rate must be positive")]
    ZeroRate,
}

/// Mono floating-point audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroRate);
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !(-1.0..=1.0).contains(*v))
        {
            return Err(AudioError::OutOfRange { index, value });
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn slice(&self, start: usize, end: usize) -> AudioClip {
        AudioClip {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }
}

pub fn rms(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples
        .iter()
        .map(|&s| (s as f64) * (s as f64))
        .sum::<f64>()
        / samples.len() as f64)
        .sqrt()
}

/// Decodes a PCM16 WAV (mono or stereo, any rate) into a 16 kHz mono clip.
/// Stereo is averaged; samples are scaled by 1/32768.
pub fn ingest_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| match e {
        hound::Error::Unsupported => AudioError::UnsupportedCodec("non-PCM format".into()),
        other => AudioError::Malformed(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedCodec(format!(
            "{:?} {}-bit (only 16-bit PCM is accepted)",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if !(1..=2).contains(&spec.channels) {
        return Err(AudioError::UnsupportedCodec(format!(
            "{} channels",
            spec.channels
        )));
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::ZeroRate);
    }
    let raw: Vec<i16> = reader
        .into_samples::<i16>()
        .collect::<Result<_, _>>()
        .map_err(|e| AudioError::Malformed(e.to_string()))?;
    let channels = spec.channels as usize;
    if raw.len() < channels {
        return Err(AudioError::Empty);
    }
    let mono: Vec<f32> = raw
        .chunks_exact(channels)
        .map(|frame| {
            let sum: f32 = frame.iter().map(|&s| s as f32 / 32768.0).sum();
            sum / channels as f32
        })
        .collect();
    let samples = resample(&mono, spec.sample_rate, CANONICAL_RATE);
    Ok(AudioClip {
        samples,
        sample_rate: CANONICAL_RATE,
    })
}

/// Encodes a clip as mono PCM16 WAV at its own rate.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    encode_wav_raw(&clip.samples, clip.sample_rate, 1)
}

/// Encodes interleaved samples as PCM16 WAV. Values are scaled by 32768 and
/// clamped.
pub fn encode_wav_raw(interleaved: &[f32], sample_rate: u32, channels: u16) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec).expect("in-memory writer");
        for &s in interleaved {
            let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(v).expect("in-memory write");
        }
        writer.finalize().expect("in-memory finalize");
    }
    cursor.into_inner()
}

const HALF_TAPS: i64 = 32;
const KAISER_BETA: f64 = 8.0;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Output length `round(n * to / from)`, halves rounded up.
pub fn resampled_len(n: usize, from: u32, to: u32) -> usize {
    let num = n as u128 * to as u128 * 2 + from as u128;
    (num / (2 * from as u128)) as usize
}

/// Rate conversion with a 64-tap Kaiser-windowed sinc kernel.
pub fn resample(samples: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to {
        return samples.to_vec();
    }
    let out_len = resampled_len(samples.len(), from, to);
    resample_step(samples, from as f64 / to as f64, out_len)
}

/// Reads `samples` at positions `n * step` for `n < out_len`. A step above
/// one is a downsampling and lowers the kernel cutoff to avoid aliasing.
pub fn resample_step(samples: &[f32], step: f64, out_len: usize) -> Vec<f32> {
    let cutoff = (1.0 / step).min(1.0);
    let i0_beta = bessel_i0(KAISER_BETA);
    let n = samples.len() as i64;
    let mut out = Vec::with_capacity(out_len);
    let mut weights = [0.0f64; (2 * HALF_TAPS) as usize];
    for j in 0..out_len {
        let center = j as f64 * step;
        let base = center.floor() as i64;
        let mut weight_sum = 0.0;
        for (w, k) in weights
            .iter_mut()
            .zip(base - HALF_TAPS + 1..=base + HALF_TAPS)
        {
            let d = center - k as f64;
            let r = d / HALF_TAPS as f64;
            let window = if r.abs() >= 1.0 {
                0.0
            } else {
                bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
            };
            *w = cutoff * sinc(cutoff * d) * window;
            weight_sum += *w;
        }
        let mut acc = 0.0f64;
        for (w, k) in weights.iter().zip(base - HALF_TAPS + 1..=base + HALF_TAPS) {
            if (0..n).contains(&k) {
                acc += w * samples[k as usize] as f64;
            }
        }
        let value = if weight_sum.abs() > 1e-12 {
            acc / weight_sum
        } else {
            acc
        };
        out.push(value.clamp(-1.0, 1.0) as f32);
    }
    out
}
