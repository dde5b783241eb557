//! Commands that add to or copy out of the manifest.

use std::path::{Path, PathBuf};

use nolor_core::audio::{self, AudioClip};
use nolor_core::corpus::{self, unix_now, Cut, Manifest, Segment, SegmentSource, Split};
use nolor_core::eval::{self, SpeedupEntry};
use serde::Serialize;
use serde_json::json;

use super::{Ctx, ACCEPT_LOG, SPEEDUP_LOG};
use crate::config::Project;
use crate::error::{io_err, CliError, CliResult};
use crate::files::{self, ProjectLock};

pub struct Speaker {
    pub speaker: String,
    pub dialect: String,
}

fn read_cuts(path: &Path) -> CliResult<(Vec<Cut>, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    files::parse_cuts(&text).map_err(|e| e.context(path.display()))
}

fn read_audio(path: &Path) -> CliResult<AudioClip> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    audio::ingest_wav(&bytes).map_err(|e| CliError::from(e).context(path.display()))
}

fn id_prefix(explicit: Option<&str>, audio: &Path) -> CliResult<String> {
    let prefix = match explicit {
        Some(p) => p.to_string(),
        None => audio
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| {
                CliError::Validation(format!(
                    "{}: cannot derive an id; pass --id",
                    audio.display()
                ))
            })?
            .to_string(),
    };
    if prefix.is_empty() || prefix.contains(['/', '\\']) || prefix.starts_with('.') {
        return Err(CliError::Validation(format!(
            "id prefix {prefix:?} is not a plain file name"
        )));
    }
    Ok(prefix)
}

/// Cut files carry millisecond timestamps, so an end printed as the rounded
/// recording length may overshoot it by under a millisecond; such ends are
/// pulled back to the last sample.
fn snap_to_end(cuts: &[Cut], clip: &AudioClip) -> Vec<Cut> {
    let len_s = clip.duration_s();
    cuts.iter()
        .map(|c| {
            if c.end_s > len_s && c.end_s - len_s <= 1e-3 {
                Cut::new(c.start_s, len_s)
            } else {
                *c
            }
        })
        .collect()
}

/// Slices and validates every cut, then writes the normalized recording and
/// the grown manifest. Nothing is written unless every check passes.
fn add_recording(
    project: &Project,
    clip: &AudioClip,
    cuts: &[Cut],
    transcripts: &[String],
    prefix: &str,
    who: &Speaker,
    split: Split,
) -> CliResult<(Manifest, Vec<Segment>)> {
    let manifest_path = project.manifest_path();
    let mut manifest = files::load_manifest(&manifest_path, project.orth.name())?;
    let source = SegmentSource {
        recording: format!("{prefix}.wav"),
        id_prefix: prefix.to_string(),
        speaker_id: who.speaker.clone(),
        dialect: who.dialect.clone(),
        split,
    };
    let cuts = snap_to_end(cuts, clip);
    let segments = corpus::segment_recording(clip, &cuts, transcripts, &project.orth, &source)?;
    if segments.is_empty() {
        return Err(CliError::Empty("the cuts file lists no segments".into()));
    }
    manifest.append(segments.clone(), unix_now())?;

    let wav = audio::encode_wav(clip);
    let dest = project.recordings_dir().join(&source.recording);
    match std::fs::read(&dest) {
        Ok(existing) if existing != wav => {
            return Err(CliError::Validation(format!(
                "{} already holds a different recording; pick another --id",
                dest.display()
            )))
        }
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => files::write_atomic(&dest, &wav)?,
        Err(e) => return Err(io_err(&dest)(e)),
    }
    files::save_manifest(&manifest_path, &manifest)?;
    Ok((manifest, segments))
}

pub fn ingest(
    ctx: &Ctx,
    wav: &Path,
    cuts: &Path,
    id: Option<&str>,
    who: &Speaker,
    split: Split,
) -> CliResult<()> {
    let project = ctx.project()?;
    let _lock = ProjectLock::acquire(&project.root)?;
    let clip = read_audio(wav)?;
    let (cuts, transcripts) = read_cuts(cuts)?;
    let prefix = id_prefix(id, wav)?;
    let (manifest, added) =
        add_recording(&project, &clip, &cuts, &transcripts, &prefix, who, split)?;
    ctx.emit(
        &format!(
            "added {} segments from {} ({} in manifest)",
            added.len(),
            wav.display(),
            manifest.segments.len()
        ),
        json!({
            "added": added.iter().map(|s| &s.id).collect::<Vec<_>>(),
            "total": manifest.segments.len(),
        }),
    );
    Ok(())
}

/// Prints energy-based cut proposals as a cuts-file template.
pub fn suggest(ctx: &Ctx, wav: &Path, max_len_s: f64, silence_db: f64) -> CliResult<()> {
    let clip = read_audio(wav)?;
    let cuts = corpus::suggest_cuts(&clip, max_len_s, silence_db)?;
    let lines: String = cuts
        .iter()
        .map(|c| files::format_cut_line(c.start_s, c.end_s, "") + "\n")
        .collect();
    ctx.emit(
        &lines,
        json!({ "cuts": cuts.iter().map(|c| [c.start_s, c.end_s]).collect::<Vec<_>>() }),
    );
    Ok(())
}

/// Merges another manifest (such as the collection service's export),
/// copying its recordings under `prefix/`. Segments already merged are
/// skipped, so re-running with a newer export only adds what is new.
pub fn merge(ctx: &Ctx, manifest_path: &Path, source_root: &Path, prefix: &str) -> CliResult<()> {
    let project = ctx.project()?;
    let _lock = ProjectLock::acquire(&project.root)?;
    if prefix.is_empty() || prefix.contains(['/', '\\']) || prefix.starts_with('.') {
        return Err(CliError::Validation(format!(
            "prefix {prefix:?} is not a plain name"
        )));
    }
    let incoming = files::require_manifest(manifest_path)?;
    incoming
        .validate_transcripts(&project.orth)
        .map_err(|e| CliError::from(e).context(manifest_path.display()))?;
    incoming.validate_recordings(source_root)?;

    let target_path = project.manifest_path();
    let mut manifest = files::load_manifest(&target_path, project.orth.name())?;
    let mut fresh = Vec::new();
    for seg in &incoming.segments {
        let id = format!("{prefix}-{}", seg.id);
        if manifest.contains(&id) {
            continue;
        }
        let transcript = project.orth.normalize(&seg.transcript)?;
        fresh.push(Segment {
            id,
            source_recording: format!("{prefix}/{}", seg.source_recording),
            transcript,
            ..seg.clone()
        });
    }
    if fresh.is_empty() {
        ctx.emit(
            "nothing new to merge",
            json!({ "added": [], "total": manifest.segments.len() }),
        );
        return Ok(());
    }
    manifest.append(fresh.clone(), unix_now())?;
    let recordings = project.recordings_dir();
    for seg in &fresh {
        let original = seg
            .source_recording
            .strip_prefix(&format!("{prefix}/"))
            .expect("prefixed above");
        let src = source_root.join(original);
        let dest = recordings.join(&seg.source_recording);
        if !dest.exists() {
            let bytes = std::fs::read(&src).map_err(io_err(&src))?;
            // re-encode so every stored recording is canonical 16 kHz mono
            let clip =
                audio::ingest_wav(&bytes).map_err(|e| CliError::from(e).context(src.display()))?;
            files::write_atomic(&dest, &audio::encode_wav(&clip))?;
        }
    }
    files::save_manifest(&target_path, &manifest)?;
    ctx.emit(
        &format!("merged {} segments ({} in manifest)", fresh.len(), manifest.segments.len()),
        json!({ "added": fresh.iter().map(|s| &s.id).collect::<Vec<_>>(), "total": manifest.segments.len() }),
    );
    Ok(())
}

/// Operator-entered timing for one transcription session.
pub struct Timing {
    pub minutes_without: f64,
    pub minutes_with: f64,
    pub cer_without_pct: f64,
    pub cer_with_pct: f64,
}

#[derive(Serialize)]
struct AcceptRecord<'a> {
    id: &'a str,
    audio: String,
    segments: usize,
    duration_s: f64,
    draft_cer: Option<f64>,
    draft_edits: Option<usize>,
    reference_graphemes: Option<usize>,
    accepted_at: u64,
}

pub struct AcceptArgs<'a> {
    pub audio: &'a Path,
    pub corrected: &'a Path,
    pub draft: Option<&'a Path>,
    pub id: Option<&'a str>,
    pub who: Speaker,
    pub timing: Option<Timing>,
}

/// Adds a corrected draft to the manifest as unassigned segments and records
/// how far the draft was from the correction.
pub fn accept(ctx: &Ctx, args: &AcceptArgs) -> CliResult<()> {
    let project = ctx.project()?;
    let _lock = ProjectLock::acquire(&project.root)?;
    let clip = read_audio(args.audio)?;
    let (cuts, transcripts) = read_cuts(args.corrected)?;
    let prefix = id_prefix(args.id, args.audio)?;

    // the draft is checked before anything is written
    let sep = project.orth.separator().symbol.clone();
    let draft_text = match args.draft {
        Some(path) => {
            let (_, texts) = read_cuts(path)?;
            let mut normalized = Vec::with_capacity(texts.len());
            for t in &texts {
                normalized.push(
                    project
                        .orth
                        .normalize(t)
                        .map_err(|e| CliError::from(e).context(path.display()))?,
                );
            }
            Some(normalized.join(&sep))
        }
        None => None,
    };
    let speedup = args
        .timing
        .as_ref()
        .map(|t| {
            let entry = SpeedupEntry {
                sample_id: prefix.clone(),
                length_s: clip.duration_s(),
                time_without_s: t.minutes_without * 60.0,
                time_with_s: t.minutes_with * 60.0,
                cer_without: t.cer_without_pct / 100.0,
                cer_with: t.cer_with_pct / 100.0,
            };
            entry.validate().map(|_| entry)
        })
        .transpose()?;

    let (_, added) = add_recording(
        &project,
        &clip,
        &cuts,
        &transcripts,
        &prefix,
        &args.who,
        Split::Unassigned,
    )?;

    let corrected_text = added
        .iter()
        .map(|s| s.transcript.as_str())
        .collect::<Vec<_>>()
        .join(&sep);
    let draft_stats = draft_text
        .map(|d| eval::grapheme_edits(&corrected_text, &d, &project.orth))
        .transpose()?;
    let draft_cer = draft_stats.map(|(e, n)| if n == 0 { 0.0 } else { e as f64 / n as f64 });

    let reports = project.reports_dir();
    files::append_jsonl(
        &reports.join(ACCEPT_LOG),
        &AcceptRecord {
            id: &prefix,
            audio: args.audio.display().to_string(),
            segments: added.len(),
            duration_s: clip.duration_s(),
            draft_cer,
            draft_edits: draft_stats.map(|s| s.0),
            reference_graphemes: draft_stats.map(|s| s.1),
            accepted_at: unix_now(),
        },
    )?;
    if let Some(entry) = &speedup {
        files::append_jsonl(&reports.join(SPEEDUP_LOG), entry)?;
    }

    let mut human = format!("accepted {} segments as {prefix}-*", added.len());
    if let Some(cer) = draft_cer {
        human.push_str(&format!(
            "\ndraft CER against correction: {}",
            super::percent(cer)
        ));
    }
    if let Some(e) = &speedup {
        human.push_str(&format!(
            "\nspeedup: {}",
            eval::format_speedup(e.time_without_s, e.time_with_s)?
        ));
    }
    ctx.emit(
        &human,
        json!({
            "added": added.iter().map(|s| &s.id).collect::<Vec<_>>(),
            "draft_cer": draft_cer,
            "speedup": speedup.as_ref().map(|e| eval::round_one_decimal(e.speedup())),
        }),
    );
    Ok(())
}

/// Copies the selected segments, their recordings, and per-scheme transcript
/// tables into a self-contained directory.
pub fn export(ctx: &Ctx, out: &Path, split: Option<Split>) -> CliResult<()> {
    let project = ctx.project()?;
    let manifest = files::require_manifest(&project.manifest_path())?;
    let mut selected = manifest.clone();
    selected
        .segments
        .retain(|s| split.is_none_or(|sp| s.split == sp));
    if selected.segments.is_empty() {
        return Err(CliError::Empty("no segments match".into()));
    }
    let recordings: std::collections::BTreeSet<&str> = selected
        .segments
        .iter()
        .map(|s| s.source_recording.as_str())
        .collect();
    let out_recordings = out.join("recordings");
    for rel in &recordings {
        let src = project.recordings_dir().join(rel);
        let bytes = std::fs::read(&src).map_err(io_err(&src))?;
        files::write_atomic(&out_recordings.join(rel), &bytes)?;
    }
    let mut written: Vec<PathBuf> = vec![out.join("manifest.jsonl")];
    files::write_atomic(&written[0], &selected.export())?;
    for scheme in &project.schemes {
        let mut table = String::from("id\tstart_s\tend_s\ttranscript\n");
        for s in &selected.segments {
            let rendered = project.orth.transliterate(&s.transcript, scheme)?;
            table.push_str(&format!(
                "{}\t{:.3}\t{:.3}\t{rendered}\n",
                s.id,
                s.start_sample as f64 / audio::CANONICAL_RATE as f64,
                s.end_sample as f64 / audio::CANONICAL_RATE as f64
            ));
        }
        let path = out.join(format!("transcripts.{}.tsv", scheme.name));
        files::write_atomic(&path, table.as_bytes())?;
        written.push(path);
    }
    ctx.emit(
        &format!(
            "exported {} segments and {} recordings to {}",
            selected.segments.len(),
            recordings.len(),
            out.display()
        ),
        json!({
            "segments": selected.segments.len(),
            "recordings": recordings.len(),
            "files": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        }),
    );
    Ok(())
}
