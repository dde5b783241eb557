#![allow(dead_code)]

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nolor_core::audio::{self, AudioClip};
use nolor_core::corpus::{LabeledClip, Manifest};
use nolor_core::synth;
use tempfile::TempDir;

/// Settings that train the synthetic language to a usable model in seconds.
pub const FAST_TRAIN: &str = "[train]
learning_rate = 0.01
batch_size = 4
epochs = 15
seed = 1

[train.model]
channels = 32
";

pub const TINY_TRAIN: &str = "[train]
learning_rate = 0.01
batch_size = 4
epochs = 1
augment = false

[train.model]
channels = 8
";

pub const LATIN_SCHEME: &str = "scheme latin
a\ta
i\ti
u\tu
k\tk
s\ts
š\tx
=\t-
ˈ\t'
\\s\t\\s
";

pub struct Project {
    pub dir: TempDir,
}

impl Project {
    pub fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let toml = format!("[paths]\nschemes = [\"latin.scheme\"]\n\n{config}");
        std::fs::write(dir.path().join("nolor.toml"), toml).unwrap();
        std::fs::write(
            dir.path().join("orthography.txt"),
            synth::ORTHOGRAPHY_CONFIG,
        )
        .unwrap();
        std::fs::write(dir.path().join("latin.scheme"), LATIN_SCHEME).unwrap();
        Project { dir }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_nolor"))
            .current_dir(self.dir.path())
            .args(args)
            .output()
            .expect("binary runs")
    }

    pub fn manifest(&self) -> Manifest {
        Manifest::import(&std::fs::read(self.path("manifest.jsonl")).unwrap()).unwrap()
    }

    pub fn manifest_bytes(&self) -> Option<Vec<u8>> {
        std::fs::read(self.path("manifest.jsonl")).ok()
    }

    pub fn write_wav(&self, name: &str, clip: &AudioClip) -> PathBuf {
        let path = self.path(name);
        std::fs::write(&path, audio::encode_wav(clip)).unwrap();
        path
    }

    /// Concatenates `items` into one WAV plus a matching cuts file.
    pub fn recording(&self, name: &str, items: &[LabeledClip], seed: u64) -> (PathBuf, PathBuf) {
        let (clip, spans) = synth::long_recording(items, 0.4, seed);
        let wav = self.write_wav(&format!("{name}.wav"), &clip);
        let cuts = self.path(&format!("{name}.cuts"));
        let lines: String = spans
            .iter()
            .zip(items)
            .map(|((s, e), it)| format!("{s:.4}\t{e:.4}\t{}\n", it.transcript))
            .collect();
        std::fs::write(&cuts, lines).unwrap();
        (wav, cuts)
    }

    /// Holds the project's writer lock until dropped.
    pub fn hold_lock(&self) -> File {
        let f = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(self.path(".nolor.lock"))
            .unwrap();
        f.lock().unwrap();
        f
    }
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
