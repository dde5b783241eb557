//! Segmented speech corpus: verbatim-labelled slices of field recordings and
//! the line-delimited manifest that catalogues them.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{ingest_wav, AudioClip, AudioError, CANONICAL_RATE};
use crate::orthography::{Orthography, OrthographyError};

/// Upper bound on a trainable segment.
pub const MAX_SEGMENT_SECONDS: f64 = 15.0;
pub const MAX_SEGMENT_SAMPLES: usize = 15 * CANONICAL_RATE as usize;

/// Length of the energy frames used by [`suggest_cuts`].
pub const ENERGY_FRAME_SAMPLES: usize = 400;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cut {index}: {seconds:.3} s exceeds the {max} s limit")]
    TooLong {
        index: usize,
        seconds: f64,
        max: f64,
    },
    #[error("cut {index} overlaps the previous cut")]
    Overlap { index: usize },
    #[error("cut {index} has start >= end")]
    Inverted { index: usize },
    #[error("cut {index} ends past the end of the recording")]
    PastEnd { index: usize },
    #[error("cut {index} has a negative or non-finite time")]
    BadTime { index: usize },
    #[error("{cuts} cuts but {transcripts} transcripts")]
    CountMismatch { cuts: usize, transcripts: usize },
    #[error("cut {index}: transcript is empty")]
    EmptyTranscript { index: usize },
    #[error("cut {index}: {source}")]
    Transcript {
        index: usize,
        #[source]
        source: OrthographyError,
    },
    #[error("clip shorter than one {ENERGY_FRAME_SAMPLES}-sample frame")]
    ClipTooShort,
    #[error("max_len_s must lie in (0, {MAX_SEGMENT_SECONDS}], got {0}")]
    BadMaxLength(f64),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("manifest has no segments")]
    EmptyManifest,
    #[error("duplicate segment id {0:?}")]
    DuplicateId(String),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: {message}")]
    Invariant { line: usize, message: String },
    #[error("segment {id}: {message}")]
    InvalidSegment { id: String, message: String },
    #[error("recording {path}: {source}")]
    Recording {
        path: PathBuf,
        #[source]
        source: Box<CorpusError>,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub id: String,
    /// Path of the source recording, relative to the project's recordings dir.
    pub source_recording: String,
    pub start_sample: usize,
    pub end_sample: usize,
    pub transcript: String,
    pub speaker_id: String,
    pub dialect: String,
    pub split: Split,
}

impl Segment {
    pub fn duration_s(&self) -> f64 {
        self.end_sample.saturating_sub(self.start_sample) as f64 / CANONICAL_RATE as f64
    }

    /// Checks the orthography-independent invariants.
    pub fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.start_sample >= self.end_sample {
            return Err(format!(
                "start_sample {} must be below end_sample {}",
                self.start_sample, self.end_sample
            ));
        }
        if self.end_sample - self.start_sample > MAX_SEGMENT_SAMPLES {
            return Err(format!(
                "duration {:.3} s exceeds the {MAX_SEGMENT_SECONDS} s limit",
                self.duration_s()
            ));
        }
        Ok(())
    }

    /// Cuts this segment's samples out of its (already ingested) source clip.
    pub fn audio(&self, source: &AudioClip) -> Result<AudioClip, CorpusError> {
        if self.end_sample > source.len() {
            return Err(CorpusError::InvalidSegment {
                id: self.id.clone(),
                message: format!(
                    "end_sample {} beyond recording length {}",
                    self.end_sample,
                    source.len()
                ),
            });
        }
        Ok(source.slice(self.start_sample, self.end_sample))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub orthography_name: String,
    /// Unix seconds.
    pub created: u64,
    pub modified: u64,
    pub segments: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestHeader {
    manifest: u32,
    orthography: String,
    created: u64,
    modified: u64,
}

const MANIFEST_VERSION: u32 = 1;

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Manifest {
    pub fn new(orthography_name: impl Into<String>, timestamp: u64) -> Self {
        Manifest {
            orthography_name: orthography_name.into(),
            created: timestamp,
            modified: timestamp,
            segments: Vec::new(),
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.segments.iter().any(|s| s.id == id)
    }

    /// Appends all of `segments` or none of them.
    pub fn append(&mut self, segments: Vec<Segment>, timestamp: u64) -> Result<(), CorpusError> {
        let mut ids: HashSet<&str> = self.segments.iter().map(|s| s.id.as_str()).collect();
        for seg in &segments {
            seg.check().map_err(|message| CorpusError::InvalidSegment {
                id: seg.id.clone(),
                message,
            })?;
            if !ids.insert(seg.id.as_str()) {
                return Err(CorpusError::DuplicateId(seg.id.clone()));
            }
        }
        self.segments.extend(segments);
        self.modified = timestamp;
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(move |s| s.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Checks every transcript tokenizes under `orth`.
    pub fn validate_transcripts(&self, orth: &Orthography) -> Result<(), CorpusError> {
        for seg in &self.segments {
            orth.tokenize(&seg.transcript)
                .map_err(|e| CorpusError::InvalidSegment {
                    id: seg.id.clone(),
                    message: e.to_string(),
                })?;
        }
        Ok(())
    }

    /// Checks every referenced recording exists under `root`.
    pub fn validate_recordings(&self, root: &Path) -> Result<(), CorpusError> {
        for seg in &self.segments {
            let path = root.join(&seg.source_recording);
            if !path.is_file() {
                return Err(CorpusError::InvalidSegment {
                    id: seg.id.clone(),
                    message: format!("recording {} not found", path.display()),
                });
            }
        }
        Ok(())
    }

    /// One JSON header line, then one flat JSON object per segment.
    pub fn export(&self) -> Vec<u8> {
        let header = ManifestHeader {
            manifest: MANIFEST_VERSION,
            orthography: self.orthography_name.clone(),
            created: self.created,
            modified: self.modified,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for seg in &self.segments {
            out.push_str(&serde_json::to_string(seg).expect("segment serializes"));
            out.push('\n');
        }
        out.into_bytes()
    }

    pub fn import(bytes: &[u8]) -> Result<Self, CorpusError> {
        let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::Schema {
            line: 1 + bytes[..e.valid_up_to()]
                .iter()
                .filter(|&&b| b == b'\n')
                .count(),
            message: "invalid UTF-8".into(),
        })?;
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(CorpusError::Schema {
            line: 1,
            message: "missing manifest header".into(),
        })?;
        let header: ManifestHeader =
            serde_json::from_str(first).map_err(|e| CorpusError::Schema {
                line: 1,
                message: format!("bad header: {e}"),
            })?;
        if header.manifest != MANIFEST_VERSION {
            return Err(CorpusError::Schema {
                line: 1,
                message: format!("unsupported manifest version {}", header.manifest),
            });
        }
        let mut segments = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let seg: Segment = serde_json::from_str(line).map_err(|e| CorpusError::Schema {
                line: line_no,
                message: e.to_string(),
            })?;
            seg.check().map_err(|message| CorpusError::Invariant {
                line: line_no,
                message,
            })?;
            if !ids.insert(seg.id.clone()) {
                return Err(CorpusError::Invariant {
                    line: line_no,
                    message: format!("duplicate segment id {:?}", seg.id),
                });
            }
            segments.push(seg);
        }
        Ok(Manifest {
            orthography_name: header.orthography,
            created: header.created,
            modified: header.modified,
            segments,
        })
    }
}

/// Audio paired with its transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub clip: AudioClip,
    pub transcript: String,
}

/// A human-supplied cut in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cut {
    pub start_s: f64,
    pub end_s: f64,
}

impl Cut {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Cut { start_s, end_s }
    }
}

/// Seconds to sample index at the canonical rate, halves rounded up.
pub fn seconds_to_sample(seconds: f64) -> usize {
    (seconds * CANONICAL_RATE as f64 + 0.5).floor() as usize
}

/// Identity shared by every segment cut from one recording.
#[derive(Debug, Clone)]
pub struct SegmentSource {
    pub recording: String,
    pub id_prefix: String,
    pub speaker_id: String,
    pub dialect: String,
    pub split: Split,
}

/// Slices `clip` at the given cuts, one segment per cut, with transcripts
/// normalized under `orth`.
pub fn segment_recording(
    clip: &AudioClip,
    cuts: &[Cut],
    transcripts: &[String],
    orth: &Orthography,
    source: &SegmentSource,
) -> Result<Vec<Segment>, CorpusError> {
    if cuts.len() != transcripts.len() {
        return Err(CorpusError::CountMismatch {
            cuts: cuts.len(),
            transcripts: transcripts.len(),
        });
    }
    let mut prev_end = 0usize;
    let mut segments = Vec::with_capacity(cuts.len());
    for (index, (cut, text)) in cuts.iter().zip(transcripts).enumerate() {
        if !(cut.start_s.is_finite() && cut.end_s.is_finite())
            || cut.start_s < 0.0
            || cut.end_s < 0.0
        {
            return Err(CorpusError::BadTime { index });
        }
        let start = seconds_to_sample(cut.start_s);
        let end = seconds_to_sample(cut.end_s);
        if start >= end {
            return Err(CorpusError::Inverted { index });
        }
        if end - start > MAX_SEGMENT_SAMPLES {
            return Err(CorpusError::TooLong {
                index,
                seconds: (end - start) as f64 / CANONICAL_RATE as f64,
                max: MAX_SEGMENT_SECONDS,
            });
        }
        if index > 0 && start < prev_end {
            return Err(CorpusError::Overlap { index });
        }
        if end > clip.len() {
            return Err(CorpusError::PastEnd { index });
        }
        prev_end = end;
        let transcript = orth
            .normalize(text)
            .map_err(|source| CorpusError::Transcript { index, source })?;
        if transcript.trim().is_empty() {
            return Err(CorpusError::EmptyTranscript { index });
        }
        segments.push(Segment {
            id: format!("{}-{:03}", source.id_prefix, index),
            source_recording: source.recording.clone(),
            start_sample: start,
            end_sample: end,
            transcript,
            speaker_id: source.speaker_id.clone(),
            dialect: source.dialect.clone(),
            split: source.split,
        });
    }
    Ok(segments)
}

/// Silent gaps shorter than this many frames do not end a region.
const MIN_PAUSE_FRAMES: usize = 8;
/// Frames within this many dB of the quietest candidate count as equally quiet;
/// the latest of them is chosen so pieces stay long.
const SPLIT_TIE_DB: f64 = 1.0;

/// Energy-based cut proposal.
///
/// The clip is divided into 25 ms frames; frames quieter than `silence_db`
/// (dBFS) are silence. Each run of non-silent audio becomes one cut, and runs
/// longer than `max_len_s` are split at the quietest frame in the second half
/// of the allowed span, never producing more pieces than the length requires.
pub fn suggest_cuts(
    clip: &AudioClip,
    max_len_s: f64,
    silence_db: f64,
) -> Result<Vec<Cut>, CorpusError> {
    if !(max_len_s > 0.0 && max_len_s <= MAX_SEGMENT_SECONDS) {
        return Err(CorpusError::BadMaxLength(max_len_s));
    }
    if clip.len() < ENERGY_FRAME_SAMPLES {
        return Err(CorpusError::ClipTooShort);
    }
    let rate = clip.sample_rate as f64;
    let energy_db: Vec<f64> = clip
        .samples
        .chunks(ENERGY_FRAME_SAMPLES)
        .map(|frame| {
            let ms = frame.iter().map(|&s| s as f64 * s as f64).sum::<f64>() / frame.len() as f64;
            10.0 * (ms + 1e-20).log10()
        })
        .collect();
    let voiced: Vec<bool> = energy_db.iter().map(|&db| db >= silence_db).collect();

    let mut regions: Vec<(usize, usize)> = Vec::new();
    let mut f = 0;
    while f < voiced.len() {
        if !voiced[f] {
            f += 1;
            continue;
        }
        let start = f;
        while f < voiced.len() && voiced[f] {
            f += 1;
        }
        match regions.last_mut() {
            Some(last) if start - last.1 < MIN_PAUSE_FRAMES => last.1 = f,
            _ => regions.push((start, f)),
        }
    }

    let max_samples = (max_len_s * rate).floor() as usize;
    let frame_center = |f: usize| f * ENERGY_FRAME_SAMPLES + ENERGY_FRAME_SAMPLES / 2;
    let mut cuts = Vec::new();
    for (first, last) in regions {
        let mut start = first * ENERGY_FRAME_SAMPLES;
        let end = (last * ENERGY_FRAME_SAMPLES).min(clip.len());
        while end - start > max_samples {
            // keep the piece count minimal: whatever follows the split must
            // still fit in the remaining pieces
            let pieces = (end - start).div_ceil(max_samples);
            let hi = start + max_samples;
            let lo = (start + max_samples / 2)
                .max(end - (pieces - 1) * max_samples)
                .min(hi);
            let candidates: Vec<usize> = (lo / ENERGY_FRAME_SAMPLES..last)
                .filter(|&f| f * ENERGY_FRAME_SAMPLES <= hi && (f + 1) * ENERGY_FRAME_SAMPLES > lo)
                .collect();
            let split = if candidates.is_empty() {
                hi
            } else {
                let quietest = candidates
                    .iter()
                    .map(|&f| energy_db[f])
                    .fold(f64::INFINITY, f64::min);
                let chosen = candidates
                    .iter()
                    .rev()
                    .find(|&&f| energy_db[f] <= quietest + SPLIT_TIE_DB)
                    .copied()
                    .expect("quietest frame is a candidate");
                frame_center(chosen).clamp(lo.max(start + 1), hi)
            };
            cuts.push(Cut::new(start as f64 / rate, split as f64 / rate));
            start = split;
        }
        cuts.push(Cut::new(start as f64 / rate, end as f64 / rate));
    }
    Ok(cuts)
}

/// Seeded shuffle assigning `floor(n * train_fraction)` segments to train and
/// the rest to test.
pub fn split_manifest(
    m: &Manifest,
    train_fraction: f64,
    seed: u64,
) -> Result<Manifest, CorpusError> {
    let mut out = m.clone();
    let n = out.segments.len();
    assign_splits(&mut out, &(0..n).collect::<Vec<_>>(), train_fraction, seed)?;
    Ok(out)
}

/// As [`split_manifest`] but only re-assigns the segments at `indices`.
pub fn assign_splits(
    m: &mut Manifest,
    indices: &[usize],
    train_fraction: f64,
    seed: u64,
) -> Result<(), CorpusError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::BadFraction(train_fraction));
    }
    if indices.is_empty() {
        return Err(CorpusError::EmptyManifest);
    }
    let mut order = indices.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (indices.len() as f64 * train_fraction).floor() as usize;
    for (rank, &i) in order.iter().enumerate() {
        m.segments[i].split = if rank < n_train {
            Split::Train
        } else {
            Split::Test
        };
    }
    Ok(())
}

/// Loads each referenced recording once and slices out segment audio.
pub struct RecordingCache {
    root: PathBuf,
    clips: HashMap<String, AudioClip>,
}

impl RecordingCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RecordingCache {
            root: root.into(),
            clips: HashMap::new(),
        }
    }

    pub fn recording(&mut self, relative: &str) -> Result<&AudioClip, CorpusError> {
        if !self.clips.contains_key(relative) {
            let path = self.root.join(relative);
            let clip = std::fs::read(&path)
                .map_err(CorpusError::from)
                .and_then(|bytes| ingest_wav(&bytes).map_err(CorpusError::from))
                .map_err(|e| CorpusError::Recording {
                    path: path.clone(),
                    source: Box::new(e),
                })?;
            self.clips.insert(relative.to_string(), clip);
        }
        Ok(&self.clips[relative])
    }

    pub fn segment_audio(&mut self, seg: &Segment) -> Result<AudioClip, CorpusError> {
        let source = self.recording(&seg.source_recording)?;
        seg.audio(source)
    }
}
