//! `nolor.toml`: project paths, augmentation, training defaults and chunking.
//! Relative paths resolve against the directory holding the file.

use std::path::{Path, PathBuf};

use nolor_core::acoustic::{ModelConfig, TrainConfig};
use nolor_core::augment::AugmentSpec;
use nolor_core::corpus::MAX_SEGMENT_SECONDS;
use nolor_core::orthography::{Orthography, TransliterationScheme};
use serde::Deserialize;

use crate::error::{io_err, CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub orthography: PathBuf,
    pub schemes: Vec<PathBuf>,
    pub recordings: PathBuf,
    pub manifest: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
    pub collect: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            orthography: "orthography.txt".into(),
            schemes: Vec::new(),
            recordings: "recordings".into(),
            manifest: "manifest.jsonl".into(),
            models: "models".into(),
            reports: "reports".into(),
            collect: "collect".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub augment: bool,
    pub freeze_encoder: bool,
    pub freeze_context: bool,
    pub grad_clip_norm: f64,
    pub parallel: bool,
    /// Share of unassigned segments moved to train when a run starts.
    pub train_fraction: f64,
    pub model: ModelConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let core = TrainConfig::default();
        TrainSection {
            learning_rate: core.learning_rate,
            epochs: core.epochs,
            batch_size: core.batch_size,
            seed: core.seed,
            augment: true,
            freeze_encoder: false,
            freeze_context: false,
            grad_clip_norm: core.grad_clip_norm,
            parallel: true,
            train_fraction: 0.8,
            model: ModelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Chunking {
    pub window_s: f64,
    pub overlap_s: f64,
    pub beam_width: usize,
}

impl Default for Chunking {
    fn default() -> Self {
        Chunking {
            window_s: 15.0,
            overlap_s: 2.0,
            beam_width: 8,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub paths: Paths,
    pub augment: AugmentSpec,
    pub train: TrainSection,
    pub chunking: Chunking,
}

impl ProjectConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let config: ProjectConfig =
            toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> CliResult<()> {
        let c = &self.chunking;
        if !(c.window_s > 0.0 && c.window_s <= MAX_SEGMENT_SECONDS) {
            return Err(CliError::Validation(format!(
                "chunking.window_s must lie in (0, {MAX_SEGMENT_SECONDS}], got {}",
                c.window_s
            )));
        }
        if !(c.overlap_s >= 0.0 && c.overlap_s < c.window_s) {
            return Err(CliError::Validation(format!(
                "chunking.overlap_s must lie in [0, window_s), got {}",
                c.overlap_s
            )));
        }
        if c.beam_width == 0 {
            return Err(CliError::Validation(
                "chunking.beam_width must be at least 1".into(),
            ));
        }
        let f = self.train.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Validation(format!(
                "train.train_fraction must lie in (0, 1), got {f}"
            )));
        }
        self.augment.validate()?;
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed,
            freeze_encoder: t.freeze_encoder,
            freeze_context: t.freeze_context,
            augment: t.augment.then(|| self.augment.clone()),
            grad_clip_norm: t.grad_clip_norm,
            model: t.model,
            parallel: t.parallel,
            ..TrainConfig::default()
        }
    }
}

/// A loaded project: config plus the orthography and schemes it names.
pub struct Project {
    pub root: PathBuf,
    pub config: ProjectConfig,
    pub orth: Orthography,
    pub schemes: Vec<TransliterationScheme>,
    pub seed: u64,
}

impl Project {
    pub fn load(config_path: &Path, seed: Option<u64>) -> CliResult<Self> {
        let text = std::fs::read_to_string(config_path).map_err(io_err(config_path))?;
        let config = ProjectConfig::parse(&text).map_err(|e| e.context(config_path.display()))?;
        let root = match config_path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let orth_path = root.join(&config.paths.orthography);
        let orth_text = std::fs::read_to_string(&orth_path).map_err(io_err(&orth_path))?;
        let orth = Orthography::parse(&orth_text)
            .map_err(|e| CliError::from(e).context(orth_path.display()))?;
        let mut schemes = vec![orth.phonemic_scheme(), orth.simplified_scheme()];
        for rel in &config.paths.schemes {
            let path = root.join(rel);
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let scheme = TransliterationScheme::parse(&text, &orth)
                .map_err(|e| CliError::from(e).context(path.display()))?;
            if schemes.iter().any(|s| s.name == scheme.name) {
                return Err(CliError::Validation(format!(
                    "{}: duplicate scheme {:?}",
                    path.display(),
                    scheme.name
                )));
            }
            schemes.push(scheme);
        }
        Ok(Project {
            seed: seed.unwrap_or(config.train.seed),
            root,
            config,
            orth,
            schemes,
        })
    }

    pub fn path(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.path(&self.config.paths.manifest)
    }

    pub fn recordings_dir(&self) -> PathBuf {
        self.path(&self.config.paths.recordings)
    }

    pub fn models_dir(&self) -> PathBuf {
        self.path(&self.config.paths.models)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.path(&self.config.paths.reports)
    }
}
