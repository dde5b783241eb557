//! Error-rate metrics, corpus evaluation and transcription-speedup tables.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::corpus::LabeledClip;
use crate::orthography::{Orthography, OrthographyError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("segment {0}: reference is empty")]
    EmptySegmentReference(String),
    #[error("test split is empty")]
    EmptyTestSplit,
    #[error("no speedup entries")]
    NoEntries,
    #[error("entry {0}: times must be positive")]
    NonPositiveTime(String),
    #[error("entry {0}: CER must be non-negative")]
    NegativeCer(String),
    #[error(transparent)]
    Orthography(#[from] OrthographyError),
    #[error("transcription failed for {id}: {message}")]
    Model { id: String, message: String },
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit count and reference length over grapheme sequences.
pub fn grapheme_edits(
    reference: &str,
    hypothesis: &str,
    orth: &Orthography,
) -> Result<(usize, usize), EvalError> {
    let r: Vec<&str> = orth
        .tokenize(reference)?
        .iter()
        .map(|g| g.symbol.as_str())
        .collect();
    let h: Vec<&str> = orth
        .tokenize(hypothesis)?
        .iter()
        .map(|g| g.symbol.as_str())
        .collect();
    Ok((edit_distance(&r, &h), r.len()))
}

/// Grapheme error rate; may exceed 1 when the hypothesis is long.
pub fn cer(reference: &str, hypothesis: &str, orth: &Orthography) -> Result<f64, EvalError> {
    let (edits, len) = grapheme_edits(reference, hypothesis, orth)?;
    if len == 0 {
        return Err(EvalError::EmptyReference);
    }
    Ok(edits as f64 / len as f64)
}

/// Word error rate over space-separated words.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64, EvalError> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    if r.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

/// Anything that turns a clip into text.
pub trait Transcriber: Sync {
    fn transcribe(&self, clip: &AudioClip) -> Result<String, String>;
}

#[derive(Debug, Clone)]
pub struct EvalItem {
    pub id: String,
    pub clip: AudioClip,
    pub transcript: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScore {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
    pub edits: usize,
    pub ref_len: usize,
    pub cer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub segments: Vec<SegmentScore>,
    pub total_edits: usize,
    pub total_ref_len: usize,
    /// Total edits over total reference graphemes (not the mean of per-segment rates).
    pub aggregate_cer: f64,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .segments
            .iter()
            .map(|s| s.id.len())
            .max()
            .unwrap_or(2)
            .max(7);
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>5}  {:>7}  hypothesis",
            "segment", "edits", "len", "CER%"
        );
        for s in &self.segments {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6}  {:>5}  {:>7.1}  {}",
                s.id,
                s.edits,
                s.ref_len,
                s.cer * 100.0,
                s.hypothesis
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>5}  {:>7.1}",
            "TOTAL",
            self.total_edits,
            self.total_ref_len,
            self.aggregate_cer * 100.0
        );
        out
    }

    /// One JSON object per segment, then a summary record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            out.push_str(&serde_json::to_string(s).expect("score serializes"));
            out.push('\n');
        }
        out.push_str(
            &serde_json::json!({
                "total_edits": self.total_edits,
                "total_ref_len": self.total_ref_len,
                "aggregate_cer": self.aggregate_cer,
            })
            .to_string(),
        );
        out.push('\n');
        out
    }
}

/// Transcribes every item and scores it against its reference.
pub fn evaluate<M: Transcriber + ?Sized>(
    model: &M,
    items: &[EvalItem],
    orth: &Orthography,
) -> Result<EvalReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyTestSplit);
    }
    let segments: Vec<SegmentScore> = items
        .par_iter()
        .map(|item| {
            let hypothesis = model
                .transcribe(&item.clip)
                .map_err(|message| EvalError::Model {
                    id: item.id.clone(),
                    message,
                })?;
            let reference = orth.normalize(&item.transcript)?;
            let (edits, ref_len) = grapheme_edits(&reference, &hypothesis, orth)?;
            if ref_len == 0 {
                return Err(EvalError::EmptySegmentReference(item.id.clone()));
            }
            Ok(SegmentScore {
                id: item.id.clone(),
                reference,
                hypothesis,
                edits,
                ref_len,
                cer: edits as f64 / ref_len as f64,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    let total_edits = segments.iter().map(|s| s.edits).sum();
    let total_ref_len: usize = segments.iter().map(|s| s.ref_len).sum();
    Ok(EvalReport {
        segments,
        total_edits,
        total_ref_len,
        aggregate_cer: total_edits as f64 / total_ref_len as f64,
    })
}

/// Aggregate CER of `model` over labelled clips.
pub fn corpus_cer<M: Transcriber + ?Sized>(
    model: &M,
    items: &[LabeledClip],
    orth: &Orthography,
) -> Result<f64, EvalError> {
    let items: Vec<EvalItem> = items
        .iter()
        .enumerate()
        .map(|(i, it)| EvalItem {
            id: i.to_string(),
            clip: it.clip.clone(),
            transcript: it.transcript.clone(),
        })
        .collect();
    Ok(evaluate(model, &items, orth)?.aggregate_cer)
}

/// Paired timing of transcribing one sample with and without ASR drafts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupEntry {
    pub sample_id: String,
    pub length_s: f64,
    pub time_without_s: f64,
    pub time_with_s: f64,
    pub cer_without: f64,
    pub cer_with: f64,
}

impl SpeedupEntry {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.time_without_s > 0.0 && self.time_with_s > 0.0 && self.length_s > 0.0) {
            return Err(EvalError::NonPositiveTime(self.sample_id.clone()));
        }
        if !(self.cer_without >= 0.0 && self.cer_with >= 0.0) {
            return Err(EvalError::NegativeCer(self.sample_id.clone()));
        }
        Ok(())
    }

    pub fn speedup(&self) -> f64 {
        self.time_without_s / self.time_with_s
    }
}

/// Rounds to one decimal place, halves away from zero.
pub fn round_one_decimal(x: f64) -> f64 {
    // the epsilon absorbs representation error in ratios like 10.5/7
    (x * 10.0 + 0.5 + 1e-9).floor() / 10.0
}

/// `time_without / time_with` rendered as e.g. `6.3×`.
pub fn format_speedup(time_without: f64, time_with: f64) -> Result<String, EvalError> {
    if !(time_without > 0.0 && time_with > 0.0) {
        return Err(EvalError::NonPositiveTime(String::new()));
    }
    Ok(format!(
        "{:.1}×",
        round_one_decimal(time_without / time_with)
    ))
}

/// `3min` for whole minutes, otherwise seconds: `89sec`, `7.5sec`.
pub fn format_duration(seconds: f64) -> String {
    let whole = seconds.round();
    if (seconds - whole).abs() < 1e-9 {
        if whole >= 60.0 && whole % 60.0 == 0.0 {
            format!("{}min", whole as u64 / 60)
        } else {
            format!("{}sec", whole as u64)
        }
    } else {
        format!("{seconds:.1}sec")
    }
}

/// Table with Length, Without (time, CER), With (time, CER) and Speedup columns.
pub fn speedup_report(entries: &[SpeedupEntry]) -> Result<String, EvalError> {
    if entries.is_empty() {
        return Err(EvalError::NoEntries);
    }
    for e in entries {
        e.validate()?;
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} | {:>8} {:>7} | {:>8} {:>7} | {:>7}",
        "Length", "Without", "", "With", "", "Speedup"
    );
    let _ = writeln!(
        out,
        "{:<8} | {:>8} {:>7} | {:>8} {:>7} | {:>7}",
        "", "Time", "CER(%)", "Time", "CER(%)", ""
    );
    for e in entries {
        let _ = writeln!(
            out,
            "{:<8} | {:>8} {:>7.1} | {:>8} {:>7.1} | {:>7}",
            format_duration(e.length_s),
            format_duration(e.time_without_s),
            e.cer_without * 100.0,
            format_duration(e.time_with_s),
            e.cer_with * 100.0,
            format_speedup(e.time_without_s, e.time_with_s)?
        );
    }
    Ok(out)
}

/// One JSON object per entry, with the rounded speedup attached.
pub fn speedup_jsonl(entries: &[SpeedupEntry]) -> Result<String, EvalError> {
    let mut out = String::new();
    for e in entries {
        e.validate()?;
        let mut v = serde_json::to_value(e).expect("entry serializes");
        v["speedup"] = serde_json::json!(round_one_decimal(e.speedup()));
        out.push_str(&v.to_string());
        out.push('\n');
    }
    Ok(out)
}
