//! Append-only on-disk store: `audio/` plus a `meta.jsonl` event log that is
//! replayed on open.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nolor_core::corpus::{Manifest, Segment, Split};
use serde::{Deserialize, Serialize};

pub const AUDIO_DIR: &str = "audio";
pub const META_FILE: &str = "meta.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub text_phonemic: String,
    pub contributed_by: Option<String>,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contributor {
    pub id: String,
    pub dialect: String,
    pub preferred_scheme: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub id: String,
    pub sentence_id: String,
    pub contributor_id: String,
    /// Normalized 16 kHz copy, relative to the storage root.
    pub audio: String,
    /// Bytes exactly as uploaded, relative to the storage root.
    pub original: String,
    pub samples: usize,
    pub duration_s: f64,
    pub received_at: u64,
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Sentence(Sentence),
    Activate { id: String },
    Contributor(Contributor),
    Submission(Submission),
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    log: File,
    pub sentences: BTreeMap<String, Sentence>,
    pub contributors: BTreeMap<String, Contributor>,
    pub submissions: BTreeMap<String, Submission>,
    idempotency: BTreeMap<String, String>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let audio = root.join(AUDIO_DIR);
        fs::create_dir_all(&audio).map_err(io(&audio))?;
        let meta = root.join(META_FILE);
        let mut store = Store {
            log: OpenOptions::new()
                .create(true)
                .append(true)
                .open(&meta)
                .map_err(io(&meta))?,
            root,
            sentences: BTreeMap::new(),
            contributors: BTreeMap::new(),
            submissions: BTreeMap::new(),
            idempotency: BTreeMap::new(),
        };
        let reader = BufReader::new(File::open(&meta).map_err(io(&meta))?);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io(&meta))?;
            if line.trim().is_empty() {
                continue;
            }
            let event: Event = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                path: meta.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            store.apply(event);
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::Sentence(s) => {
                self.sentences.insert(s.id.clone(), s);
            }
            Event::Activate { id } => {
                if let Some(s) = self.sentences.get_mut(&id) {
                    s.active = true;
                }
            }
            Event::Contributor(c) => {
                self.contributors.insert(c.id.clone(), c);
            }
            Event::Submission(s) => {
                if let Some(key) = &s.idempotency_key {
                    self.idempotency.insert(key.clone(), s.id.clone());
                }
                self.submissions.insert(s.id.clone(), s);
            }
        }
    }

    fn append(&mut self, event: Event) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(&event).expect("events serialize");
        line.push('\n');
        let meta = self.root.join(META_FILE);
        self.log.write_all(line.as_bytes()).map_err(io(&meta))?;
        self.log.sync_data().map_err(io(&meta))?;
        self.apply(event);
        Ok(())
    }

    fn next_id(prefix: &str, taken: usize) -> String {
        format!("{prefix}-{:06}", taken + 1)
    }

    pub fn add_sentence(
        &mut self,
        text: String,
        contributed_by: Option<String>,
        active: bool,
    ) -> Result<Sentence, StoreError> {
        let sentence = Sentence {
            id: Self::next_id("sent", self.sentences.len()),
            text_phonemic: text,
            contributed_by,
            active,
        };
        self.append(Event::Sentence(sentence.clone()))?;
        Ok(sentence)
    }

    pub fn activate(&mut self, id: &str) -> Result<(), StoreError> {
        self.append(Event::Activate { id: id.to_string() })
    }

    pub fn add_contributor(
        &mut self,
        dialect: String,
        preferred_scheme: String,
    ) -> Result<Contributor, StoreError> {
        let c = Contributor {
            id: Self::next_id("user", self.contributors.len()),
            dialect,
            preferred_scheme,
        };
        self.append(Event::Contributor(c.clone()))?;
        Ok(c)
    }

    pub fn by_idempotency_key(&self, key: &str) -> Option<&Submission> {
        self.idempotency
            .get(key)
            .and_then(|id| self.submissions.get(id))
    }

    pub fn next_submission_id(&self) -> String {
        Self::next_id("rec", self.submissions.len())
    }

    pub fn add_submission(&mut self, submission: Submission) -> Result<(), StoreError> {
        self.append(Event::Submission(submission))
    }

    /// Writes `bytes` to `relative` under the root via a temporary file and
    /// rename, so readers never see a partial file.
    pub fn write_audio(&self, relative: &str, bytes: &[u8]) -> Result<(), StoreError> {
        let path = self.root.join(relative);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(io(&tmp))?;
        fs::rename(&tmp, &path).map_err(io(&path))
    }

    /// Checks the storage directory accepts writes.
    pub fn probe(&self) -> Result<(), StoreError> {
        let path = self.root.join(".probe");
        fs::write(&path, b"ok").map_err(io(&path))?;
        fs::remove_file(&path).map_err(io(&path))
    }

    /// Every submission as one whole-clip segment.
    pub fn export(&self, orthography_name: &str, now: u64) -> Manifest {
        let mut m = Manifest::new(orthography_name, now);
        m.segments = self
            .submissions
            .values()
            .map(|s| {
                let dialect = self
                    .contributors
                    .get(&s.contributor_id)
                    .map(|c| c.dialect.clone())
                    .unwrap_or_default();
                Segment {
                    id: s.id.clone(),
                    source_recording: s.audio.clone(),
                    start_sample: 0,
                    end_sample: s.samples,
                    transcript: self.sentences[&s.sentence_id].text_phonemic.clone(),
                    speaker_id: s.contributor_id.clone(),
                    dialect,
                    split: Split::Unassigned,
                }
            })
            .collect();
        m
    }
}
