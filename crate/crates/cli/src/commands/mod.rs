pub mod corpus;
pub mod model;
pub mod report;
pub mod serve;

use std::path::{Path, PathBuf};

use nolor_core::acoustic::{self, AcousticModel};
use nolor_core::corpus::{LabeledClip, Manifest, RecordingCache, Split};
use serde_json::Value;

use crate::config::Project;
use crate::error::{io_err, CliError, CliResult};

pub const LATEST_MODEL: &str = "latest.nlr";
pub const EVAL_REPORT: &str = "eval-latest.jsonl";
pub const SPEEDUP_LOG: &str = "speedup.jsonl";
pub const ACCEPT_LOG: &str = "accepted.jsonl";
pub const TRAIN_LOG: &str = "train-history.jsonl";

/// Global flags shared by every subcommand.
pub struct Ctx {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub json: bool,
}

impl Ctx {
    pub fn project(&self) -> CliResult<Project> {
        Project::load(&self.config, self.seed)
    }

    /// Prints `human` normally, or `value` as one JSON document with `--json`.
    pub fn emit(&self, human: &str, value: Value) {
        if self.json {
            println!("{value}");
        } else {
            print!("{human}");
            if !human.ends_with('\n') {
                println!();
            }
        }
    }
}

pub fn load_model(project: &Project, path: Option<&Path>) -> CliResult<AcousticModel> {
    let path = path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| project.models_dir().join(LATEST_MODEL));
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    acoustic::load_model_for(&bytes, &project.orth.build_vocab())
        .map_err(|e| CliError::from(e).context(path.display()))
}

/// Audio and transcripts of every segment in `split`.
pub fn split_items(
    project: &Project,
    manifest: &Manifest,
    split: Split,
) -> CliResult<Vec<(String, LabeledClip)>> {
    let mut cache = RecordingCache::new(project.recordings_dir());
    manifest
        .split(split)
        .map(|seg| {
            Ok((
                seg.id.clone(),
                LabeledClip {
                    clip: cache.segment_audio(seg)?,
                    transcript: seg.transcript.clone(),
                },
            ))
        })
        .collect()
}

pub fn percent(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}
