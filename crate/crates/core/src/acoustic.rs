//! Convolutional acoustic model: an encoder over log-mel frames producing
//! latents, a context convolution mixing neighbouring latents, and an affine
//! head emitting per-frame character logits. Trained with CTC and Adam.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::augment::{expand, AugmentError, AugmentSpec};
use crate::corpus::LabeledClip;
use crate::ctc::{self, CtcError, LogProbMatrix, Vocab};
use crate::eval::{edit_distance, Transcriber};
use crate::features::{FeatureError, FeatureExtractor, FeatureSpec, Features};
use crate::orthography::Orthography;

#[derive(Debug, Error)]
pub enum AcousticError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("no training utterances")]
    EmptyTrainSet,
    #[error("every training target is infeasible for its clip length")]
    AllInfeasible,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("no sweep configurations given")]
    NoConfigs,
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file is truncated")]
    Truncated,
    #[error("model file shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model file is corrupt: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Encoder,
    Context,
    Head,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [ParamGroup::Encoder, ParamGroup::Context, ParamGroup::Head];

    fn index(self) -> usize {
        self as usize
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub channels: usize,
    /// Encoder receptive field in frames (odd).
    pub encoder_width: usize,
    /// Context receptive field in latents (odd).
    pub context_width: usize,
    pub features: FeatureSpec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 64,
            encoder_width: 5,
            context_width: 9,
            features: FeatureSpec::default(),
        }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<(), AcousticError> {
        if self.channels == 0 {
            return Err(AcousticError::BadConfig("channels must be positive".into()));
        }
        for (name, w) in [
            ("encoder_width", self.encoder_width),
            ("context_width", self.context_width),
        ] {
            if w == 0 || w % 2 == 0 {
                return Err(AcousticError::BadConfig(format!(
                    "{name} must be odd, got {w}"
                )));
            }
        }
        self.features.validate(crate::audio::CANONICAL_RATE)?;
        Ok(())
    }
}

/// Weights and biases of one stage. Convolution weights are laid out
/// `[out][tap][in]`, the head as `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    feature_spec: FeatureSpec,
    input_dim: usize,
    channels: usize,
    encoder_width: usize,
    context_width: usize,
    vocab: Vocab,
    layers: [Layer; 3],
}

fn layer_shapes(
    input_dim: usize,
    channels: usize,
    u: usize,
    v: usize,
    vocab: usize,
) -> [(usize, usize); 3] {
    [
        (channels * u * input_dim, channels),
        (channels * v * channels, channels),
        (vocab * channels, vocab),
    ]
}

impl AcousticModel {
    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn init(config: &ModelConfig, vocab: Vocab, seed: u64) -> Result<Self, AcousticError> {
        config.validate()?;
        let input_dim = config.features.mel_bins;
        let c = config.channels;
        let fan_ins = [
            config.encoder_width * input_dim,
            config.context_width * c,
            c,
        ];
        let shapes = layer_shapes(
            input_dim,
            c,
            config.encoder_width,
            config.context_width,
            vocab.len(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = std::array::from_fn(|g| {
            let normal = Normal::new(0.0, (2.0 / fan_ins[g] as f64).sqrt()).expect("positive std");
            Layer {
                weight: (0..shapes[g].0)
                    .map(|_| normal.sample(&mut rng) as f32)
                    .collect(),
                bias: vec![0.0; shapes[g].1],
            }
        });
        Ok(AcousticModel {
            feature_spec: config.features,
            input_dim,
            channels: c,
            encoder_width: config.encoder_width,
            context_width: config.context_width,
            vocab,
            layers,
        })
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            channels: self.channels,
            encoder_width: self.encoder_width,
            context_width: self.context_width,
            features: self.feature_spec,
        }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn feature_spec(&self) -> &FeatureSpec {
        &self.feature_spec
    }

    pub fn layer(&self, group: ParamGroup) -> &Layer {
        &self.layers[group.index()]
    }

    pub fn layer_mut(&mut self, group: ParamGroup) -> &mut Layer {
        &mut self.layers[group.index()]
    }

    pub fn zero_head(&mut self) {
        let head = self.layer_mut(ParamGroup::Head);
        head.weight.iter_mut().for_each(|w| *w = 0.0);
        head.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn extractor(&self) -> Result<FeatureExtractor, AcousticError> {
        Ok(FeatureExtractor::new(
            self.feature_spec,
            crate::audio::CANONICAL_RATE,
        )?)
    }

    /// Normalized model input for `clip`.
    pub fn features(&self, clip: &AudioClip) -> Result<Features, AcousticError> {
        Ok(self.extractor()?.extract(clip)?.normalized())
    }

    fn weights64(&self) -> [(Vec<f64>, Vec<f64>); 3] {
        std::array::from_fn(|g| {
            let l = &self.layers[g];
            (
                l.weight.iter().map(|&w| w as f64).collect(),
                l.bias.iter().map(|&b| b as f64).collect(),
            )
        })
    }

    fn trace(&self, feats: &Features) -> Trace {
        let w = self.weights64();
        let frames = feats.frames;
        let c = self.channels;
        let v = self.vocab.len();
        let mut z = conv_forward(
            &feats.values,
            frames,
            self.input_dim,
            &w[0].0,
            &w[0].1,
            c,
            self.encoder_width,
        );
        relu(&mut z);
        let mut ctx = conv_forward(&z, frames, c, &w[1].0, &w[1].1, c, self.context_width);
        relu(&mut ctx);
        let logits = conv_forward(&ctx, frames, c, &w[2].0, &w[2].1, v, 1);
        Trace {
            frames,
            z,
            ctx,
            logits,
            weights: w,
        }
    }

    pub fn forward_features(&self, feats: &Features) -> Result<LogProbMatrix, AcousticError> {
        let trace = self.trace(feats);
        Ok(LogProbMatrix::from_logits(
            trace.frames,
            self.vocab.len(),
            &trace.logits,
        )?)
    }

    /// Features, encoder, context, head, log-softmax.
    pub fn forward(&self, clip: &AudioClip) -> Result<LogProbMatrix, AcousticError> {
        self.forward_features(&self.features(clip)?)
    }

    pub fn loss_features(&self, feats: &Features, target: &[usize]) -> Result<f64, AcousticError> {
        Ok(ctc::ctc_nll(&self.forward_features(feats)?, target)?)
    }

    pub fn greedy_transcript(&self, clip: &AudioClip) -> Result<String, AcousticError> {
        Ok(ctc::greedy_decode(&self.forward(clip)?, &self.vocab))
    }
}

impl Transcriber for AcousticModel {
    fn transcribe(&self, clip: &AudioClip) -> Result<String, String> {
        self.greedy_transcript(clip).map_err(|e| e.to_string())
    }
}

struct Trace {
    frames: usize,
    z: Vec<f64>,
    ctx: Vec<f64>,
    logits: Vec<f64>,
    weights: [(Vec<f64>, Vec<f64>); 3],
}

fn relu(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Same-padded 1-D convolution over `frames` rows of `cin` values.
fn conv_forward(
    x: &[f64],
    frames: usize,
    cin: usize,
    w: &[f64],
    b: &[f64],
    cout: usize,
    k: usize,
) -> Vec<f64> {
    let half = k / 2;
    let mut y = vec![0.0; frames * cout];
    for t in 0..frames {
        let out = &mut y[t * cout..(t + 1) * cout];
        out.copy_from_slice(b);
        for j in 0..k {
            let Some(src) = (t + j).checked_sub(half).filter(|&s| s < frames) else {
                continue;
            };
            let row = &x[src * cin..(src + 1) * cin];
            for (o, acc) in out.iter_mut().enumerate() {
                let wr = &w[(o * k + j) * cin..(o * k + j + 1) * cin];
                *acc += wr.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    frames: usize,
    cin: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    dy: &[f64],
    grad: &mut LayerGrad,
    mut dx: Option<&mut [f64]>,
) {
    let half = k / 2;
    for t in 0..frames {
        for o in 0..cout {
            let g = dy[t * cout + o];
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            for j in 0..k {
                let Some(src) = (t + j).checked_sub(half).filter(|&s| s < frames) else {
                    continue;
                };
                let base = (o * k + j) * cin;
                let row = &x[src * cin..(src + 1) * cin];
                for (dw, &xi) in grad.weight[base..base + cin].iter_mut().zip(row) {
                    *dw += g * xi;
                }
                if let Some(dx) = dx.as_deref_mut() {
                    for (d, &wi) in dx[src * cin..(src + 1) * cin]
                        .iter_mut()
                        .zip(&w[base..base + cin])
                    {
                        *d += g * wi;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Loss gradients for every parameter group, in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    groups: [LayerGrad; 3],
}

impl Gradients {
    pub fn zeros_like(model: &AcousticModel) -> Self {
        Gradients {
            groups: std::array::from_fn(|g| LayerGrad {
                weight: vec![0.0; model.layers[g].weight.len()],
                bias: vec![0.0; model.layers[g].bias.len()],
            }),
        }
    }

    pub fn group(&self, group: ParamGroup) -> &LayerGrad {
        &self.groups[group.index()]
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            a.weight
                .iter_mut()
                .zip(&b.weight)
                .for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    fn norm_sq(&self, groups: &[ParamGroup]) -> f64 {
        groups
            .iter()
            .map(|g| {
                let l = self.group(*g);
                l.weight.iter().chain(&l.bias).map(|x| x * x).sum::<f64>()
            })
            .sum()
    }

    fn scale(&mut self, factor: f64) {
        for l in self.groups.iter_mut() {
            l.weight
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|x| *x *= factor);
        }
    }
}

/// Which stages are held fixed during training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Freeze {
    pub encoder: bool,
    pub context: bool,
}

impl Freeze {
    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::Encoder => self.encoder,
            ParamGroup::Context => self.context,
            ParamGroup::Head => false,
        }
    }

    pub fn trainable(&self) -> Vec<ParamGroup> {
        ParamGroup::ALL
            .into_iter()
            .filter(|g| !self.is_frozen(*g))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct GradOutcome {
    pub loss: f64,
    pub grads: Gradients,
    /// The target could not be aligned to the clip; gradients are zero.
    pub skipped: bool,
    /// Groups whose gradients were computed but will not be applied.
    pub frozen: Vec<ParamGroup>,
    pub log_probs: LogProbMatrix,
}

/// Exact backpropagation of the CTC loss through head, context and encoder.
pub fn model_grad_features(
    model: &AcousticModel,
    feats: &Features,
    target: &[usize],
    freeze: Freeze,
) -> Result<GradOutcome, AcousticError> {
    let trace = model.trace(feats);
    let v = model.vocab.len();
    let c = model.channels;
    let frames = trace.frames;
    let lp = LogProbMatrix::from_logits(frames, v, &trace.logits)?;
    let frozen = ParamGroup::ALL
        .into_iter()
        .filter(|g| freeze.is_frozen(*g))
        .collect();
    let mut grads = Gradients::zeros_like(model);
    let (loss, dlogits) = match ctc::ctc_loss_and_grad(&lp, target) {
        Ok(pair) => pair,
        Err(CtcError::Infeasible { .. }) => {
            return Ok(GradOutcome {
                loss: f64::INFINITY,
                grads,
                skipped: true,
                frozen,
                log_probs: lp,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let w = &trace.weights;

    let mut dctx = vec![0.0; frames * c];
    conv_backward(
        &trace.ctx,
        frames,
        c,
        &w[2].0,
        v,
        1,
        &dlogits,
        &mut grads.groups[2],
        Some(&mut dctx),
    );
    for (d, &a) in dctx.iter_mut().zip(&trace.ctx) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }
    let mut dz = vec![0.0; frames * c];
    conv_backward(
        &trace.z,
        frames,
        c,
        &w[1].0,
        c,
        model.context_width,
        &dctx,
        &mut grads.groups[1],
        Some(&mut dz),
    );
    for (d, &a) in dz.iter_mut().zip(&trace.z) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }
    conv_backward(
        &feats.values,
        frames,
        model.input_dim,
        &w[0].0,
        c,
        model.encoder_width,
        &dz,
        &mut grads.groups[0],
        None,
    );
    Ok(GradOutcome {
        loss,
        grads,
        skipped: false,
        frozen,
        log_probs: lp,
    })
}

pub fn model_grad(
    model: &AcousticModel,
    clip: &AudioClip,
    target: &[usize],
    freeze: Freeze,
) -> Result<GradOutcome, AcousticError> {
    model_grad_features(model, &model.features(clip)?, target, freeze)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub freeze_encoder: bool,
    pub freeze_context: bool,
    pub augment: Option<AugmentSpec>,
    pub optimizer: AdamConfig,
    pub grad_clip_norm: f64,
    pub model: ModelConfig,
    /// Compute per-utterance gradients of a batch on the rayon pool. The sum
    /// is still taken in batch order, so results do not change.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            epochs: 30,
            batch_size: 8,
            seed: 0,
            freeze_encoder: false,
            freeze_context: false,
            augment: None,
            optimizer: AdamConfig::default(),
            grad_clip_norm: 5.0,
            model: ModelConfig::default(),
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn freeze(&self) -> Freeze {
        Freeze {
            encoder: self.freeze_encoder,
            context: self.freeze_context,
        }
    }

    fn validate(&self) -> Result<(), AcousticError> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(AcousticError::BadConfig(
                "learning_rate must be non-negative".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(AcousticError::BadConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(AcousticError::BadConfig(
                "grad_clip_norm must be positive".into(),
            ));
        }
        if let Some(spec) = &self.augment {
            spec.validate()?;
        }
        self.model.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean CTC loss over the feasible utterances seen this epoch.
    pub mean_loss: f64,
    /// Grapheme error rate of greedy decodes made during this epoch's passes.
    pub train_cer: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AcousticModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl Adam {
    fn new(model: &AcousticModel) -> Self {
        Adam {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            step: 0,
        }
    }

    fn update(
        &mut self,
        model: &mut AcousticModel,
        grads: &Gradients,
        groups: &[ParamGroup],
        lr: f64,
        cfg: &AdamConfig,
    ) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        for &g in groups {
            let i = g.index();
            let layer = &mut model.layers[i];
            let (m, v, gr) = (
                &mut self.m.groups[i],
                &mut self.v.groups[i],
                &grads.groups[i],
            );
            let pairs = layer
                .weight
                .iter_mut()
                .zip(m.weight.iter_mut().zip(v.weight.iter_mut()).zip(&gr.weight))
                .chain(
                    layer
                        .bias
                        .iter_mut()
                        .zip(m.bias.iter_mut().zip(v.bias.iter_mut()).zip(&gr.bias)),
                );
            for (p, ((m, v), &g)) in pairs {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let update = lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.epsilon);
                *p = (*p as f64 - update) as f32;
            }
        }
    }
}

fn encode_items(
    items: &[LabeledClip],
    vocab: &Vocab,
    orth: &Orthography,
) -> Result<Vec<Vec<usize>>, AcousticError> {
    items
        .iter()
        .map(|it| {
            vocab
                .encode(&it.transcript, orth)
                .map_err(AcousticError::from)
        })
        .collect()
}

/// Trains a freshly initialised model on `items`.
pub fn train(
    items: &[LabeledClip],
    vocab: &Vocab,
    orth: &Orthography,
    config: &TrainConfig,
) -> Result<TrainOutcome, AcousticError> {
    config.validate()?;
    let model = AcousticModel::init(&config.model, vocab.clone(), config.seed)?;
    fine_tune(model, items, orth, config)
}

/// Continues training `model` (architecture and vocabulary taken from the
/// model; `config.model` is ignored).
pub fn fine_tune(
    mut model: AcousticModel,
    items: &[LabeledClip],
    orth: &Orthography,
    config: &TrainConfig,
) -> Result<TrainOutcome, AcousticError> {
    config.validate()?;
    if items.is_empty() {
        return Err(AcousticError::EmptyTrainSet);
    }
    let expanded;
    let items = match &config.augment {
        Some(spec) => {
            let spec = AugmentSpec {
                seed: spec.seed ^ config.seed,
                ..spec.clone()
            };
            expanded = expand(items, &spec)?;
            &expanded[..]
        }
        None => items,
    };
    let targets = encode_items(items, model.vocab(), orth)?;
    let extractor = model.extractor()?;
    let feats: Vec<Features> = items
        .par_iter()
        .map(|it| extractor.extract(&it.clip).map(|f| f.normalized()))
        .collect::<Result<_, _>>()?;
    if feats
        .iter()
        .zip(&targets)
        .all(|(f, t)| f.frames < ctc::min_frames(t))
    {
        return Err(AcousticError::AllInfeasible);
    }

    let freeze = config.freeze();
    let trainable = freeze.trainable();
    let mut adam = Adam::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5ee_d0f0_da7a);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, AcousticModel)> = None;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut counted, mut skipped) = (0.0, 0usize, 0usize);
        let (mut edits, mut ref_len) = (0usize, 0usize);
        for batch in order.chunks(config.batch_size) {
            let run = |&i: &usize| model_grad_features(&model, &feats[i], &targets[i], freeze);
            let outcomes: Vec<GradOutcome> = if config.parallel {
                batch.par_iter().map(run).collect::<Result<_, _>>()?
            } else {
                batch.iter().map(run).collect::<Result<_, _>>()?
            };
            let mut total = Gradients::zeros_like(&model);
            for (out, &i) in outcomes.iter().zip(batch) {
                let hyp = ctc::greedy_labels(&out.log_probs);
                edits += edit_distance(&targets[i], &hyp);
                ref_len += targets[i].len();
                if out.skipped {
                    skipped += 1;
                    continue;
                }
                loss_sum += out.loss;
                counted += 1;
                total.add(&out.grads);
            }
            let norm = total.norm_sq(&trainable).sqrt();
            if norm > config.grad_clip_norm {
                total.scale(config.grad_clip_norm / norm);
            }
            adam.update(
                &mut model,
                &total,
                &trainable,
                config.learning_rate,
                &config.optimizer,
            );
        }
        let mean_loss = if counted > 0 {
            loss_sum / counted as f64
        } else {
            f64::INFINITY
        };
        history.push(EpochStats {
            epoch,
            mean_loss,
            train_cer: if ref_len > 0 {
                edits as f64 / ref_len as f64
            } else {
                0.0
            },
            skipped,
        });
        if best.as_ref().is_none_or(|(l, _, _)| mean_loss < *l) {
            best = Some((mean_loss, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config_index: usize,
    pub config: TrainConfig,
    pub test_cer: f64,
    pub history: Vec<EpochStats>,
    pub model: AcousticModel,
}

/// Trains every configuration and ranks them by held-out CER (ascending;
/// ties keep input order).
pub fn sweep(
    train_items: &[LabeledClip],
    test_items: &[LabeledClip],
    vocab: &Vocab,
    orth: &Orthography,
    configs: &[TrainConfig],
) -> Result<Vec<SweepResult>, AcousticError> {
    if configs.is_empty() {
        return Err(AcousticError::NoConfigs);
    }
    if test_items.is_empty() {
        return Err(AcousticError::BadConfig(
            "sweep needs a non-empty test split".into(),
        ));
    }
    let mut results = Vec::with_capacity(configs.len());
    for (config_index, config) in configs.iter().enumerate() {
        let outcome = train(train_items, vocab, orth, config)?;
        let test_cer = crate::eval::corpus_cer(&outcome.model, test_items, orth)
            .map_err(|e| AcousticError::BadConfig(e.to_string()))?;
        results.push(SweepResult {
            config_index,
            config: config.clone(),
            test_cer,
            history: outcome.history,
            model: outcome.model,
        });
    }
    results.sort_by(|a, b| {
        a.test_cer
            .total_cmp(&b.test_cer)
            .then(a.config_index.cmp(&b.config_index))
    });
    Ok(results)
}

pub const MODEL_MAGIC: &[u8; 4] = b"NLR1";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    version: u32,
    feature_spec: FeatureSpec,
    input_dim: usize,
    channels: usize,
    encoder_width: usize,
    context_width: usize,
    vocab: Vec<String>,
    arrays: Vec<ArrayHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayHeader {
    name: String,
    len: usize,
}

const ARRAY_NAMES: [&str; 6] = [
    "encoder.weight",
    "encoder.bias",
    "context.weight",
    "context.bias",
    "head.weight",
    "head.bias",
];

/// `NLR1`, a little-endian `u32` header length, a JSON header, then every
/// parameter array as little-endian `f32` in declaration order.
pub fn save_model(model: &AcousticModel) -> Vec<u8> {
    let arrays: Vec<&[f32]> = model
        .layers
        .iter()
        .flat_map(|l| [&l.weight[..], &l.bias[..]])
        .collect();
    let header = ModelHeader {
        version: MODEL_VERSION,
        feature_spec: model.feature_spec,
        input_dim: model.input_dim,
        channels: model.channels,
        encoder_width: model.encoder_width,
        context_width: model.context_width,
        vocab: model.vocab.symbols().to_vec(),
        arrays: ARRAY_NAMES
            .iter()
            .zip(&arrays)
            .map(|(name, a)| ArrayHeader {
                name: name.to_string(),
                len: a.len(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out =
        Vec::with_capacity(8 + header.len() + arrays.iter().map(|a| a.len() * 4).sum::<usize>());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for a in arrays {
        for &x in a {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn load_model(bytes: &[u8]) -> Result<AcousticModel, AcousticError> {
    if bytes.len() < 4 {
        return Err(AcousticError::Truncated);
    }
    if &bytes[..4] != MODEL_MAGIC {
        return Err(AcousticError::BadMagic);
    }
    let len_bytes: [u8; 4] = bytes
        .get(4..8)
        .ok_or(AcousticError::Truncated)?
        .try_into()
        .expect("4 bytes");
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let header_bytes = bytes
        .get(8..8 + header_len)
        .ok_or(AcousticError::Truncated)?;
    let header: ModelHeader =
        serde_json::from_slice(header_bytes).map_err(|e| AcousticError::Corrupt(e.to_string()))?;
    if header.version != MODEL_VERSION {
        return Err(AcousticError::VersionMismatch {
            found: header.version,
            expected: MODEL_VERSION,
        });
    }
    let vocab = Vocab::from_symbols(header.vocab.clone())
        .map_err(|e| AcousticError::Corrupt(e.to_string()))?;
    let config = ModelConfig {
        channels: header.channels,
        encoder_width: header.encoder_width,
        context_width: header.context_width,
        features: header.feature_spec,
    };
    config
        .validate()
        .map_err(|e| AcousticError::Corrupt(e.to_string()))?;
    if header.input_dim != header.feature_spec.mel_bins {
        return Err(AcousticError::ShapeMismatch(format!(
            "input_dim {} but {} mel bins",
            header.input_dim, header.feature_spec.mel_bins
        )));
    }
    let shapes = layer_shapes(
        header.input_dim,
        header.channels,
        header.encoder_width,
        header.context_width,
        vocab.len(),
    );
    let expected: Vec<usize> = shapes.iter().flat_map(|&(w, b)| [w, b]).collect();
    if header.arrays.len() != expected.len() {
        return Err(AcousticError::ShapeMismatch(format!(
            "{} arrays declared, expected {}",
            header.arrays.len(),
            expected.len()
        )));
    }
    for ((decl, &want), name) in header.arrays.iter().zip(&expected).zip(ARRAY_NAMES) {
        if decl.name != name || decl.len != want {
            return Err(AcousticError::ShapeMismatch(format!(
                "array {:?} has {} values, expected {name:?} with {want}",
                decl.name, decl.len
            )));
        }
    }
    let body = &bytes[8 + header_len..];
    let total: usize = expected.iter().sum();
    if body.len() < total * 4 {
        return Err(AcousticError::Truncated);
    }
    if body.len() > total * 4 {
        return Err(AcousticError::Corrupt(format!(
            "{} trailing bytes",
            body.len() - total * 4
        )));
    }
    let mut floats = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut take = |n: usize| -> Vec<f32> { floats.by_ref().take(n).collect() };
    let layers = std::array::from_fn(|g| Layer {
        weight: take(shapes[g].0),
        bias: take(shapes[g].1),
    });
    Ok(AcousticModel {
        feature_spec: header.feature_spec,
        input_dim: header.input_dim,
        channels: header.channels,
        encoder_width: header.encoder_width,
        context_width: header.context_width,
        vocab,
        layers,
    })
}

/// Loads a model and checks it was trained for `vocab`.
pub fn load_model_for(bytes: &[u8], vocab: &Vocab) -> Result<AcousticModel, AcousticError> {
    let model = load_model(bytes)?;
    if model.vocab() != vocab {
        return Err(AcousticError::ShapeMismatch(format!(
            "model vocabulary has {} symbols, expected {}",
            model.vocab().len(),
            vocab.len()
        )));
    }
    Ok(model)
}
