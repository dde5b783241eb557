//! Core algorithms for a low-resource speech recognition documentation loop:
//! orthography handling, corpus management, augmentation, CTC, a small
//! convolutional acoustic model and evaluation.

pub mod acoustic;
pub mod audio;
pub mod augment;
pub mod corpus;
pub mod ctc;
pub mod eval;
pub mod features;
pub mod orthography;
pub mod synth;

pub use acoustic::{AcousticError, AcousticModel, ModelConfig, TrainConfig, TrainOutcome};
pub use audio::{AudioClip, AudioError, CANONICAL_RATE};
pub use augment::{AugmentError, AugmentSpec};
pub use corpus::{
    CorpusError, LabeledClip, Manifest, Segment, Split, MAX_SEGMENT_SAMPLES, MAX_SEGMENT_SECONDS,
};
pub use ctc::{CtcError, LogProbMatrix, Vocab, BLANK};
pub use eval::{EvalError, EvalReport, SpeedupEntry, Transcriber};
pub use features::{FeatureSpec, Features};
pub use orthography::{
    Grapheme, GraphemeClass, Orthography, OrthographyError, TransliterationScheme,
};
