//! Deterministic inputs shared by the benchmarks.

use nolor_core::acoustic::{AcousticModel, ModelConfig};
use nolor_core::ctc::LogProbMatrix;
use nolor_core::synth;
use nolor_core::AudioClip;

/// Smooth pseudo-random logits: no RNG dependency, same matrix every run.
pub fn log_probs(frames: usize, vocab: usize) -> LogProbMatrix {
    let logits: Vec<f64> = (0..frames * vocab)
        .map(|i| {
            let x = i as f64;
            (x * 0.731).sin() * 2.0 + (x * 0.097).cos()
        })
        .collect();
    LogProbMatrix::from_logits(frames, vocab, &logits).expect("finite logits")
}

/// `len` labels cycling through `1..vocab`.
pub fn target(len: usize, vocab: usize) -> Vec<usize> {
    (0..len).map(|i| 1 + (i * 7) % (vocab - 1)).collect()
}

/// A synthetic utterance of about `seconds` (within half a second).
pub fn utterance(seconds: f64) -> AudioClip {
    let items = synth::corpus(1, seconds - 0.5, seconds, 7);
    items.into_iter().next().expect("one item").clip
}

pub fn model(channels: usize) -> AcousticModel {
    let config = ModelConfig {
        channels,
        ..ModelConfig::default()
    };
    AcousticModel::init(&config, synth::orthography().build_vocab(), 1).expect("valid config")
}
