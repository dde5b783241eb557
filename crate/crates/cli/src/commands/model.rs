//! Training, evaluation and decoding.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nolor_core::acoustic::{self, AcousticModel, TrainConfig};
use nolor_core::audio::{self, CANONICAL_RATE};
use nolor_core::augment::{self, AugmentSpec};
use nolor_core::corpus::{self, unix_now, LabeledClip, Split};
use nolor_core::ctc;
use nolor_core::eval::{self, EvalItem, EvalReport};
use serde::Serialize;
use serde_json::json;

use super::{load_model, percent, split_items, Ctx, EVAL_REPORT, LATEST_MODEL, TRAIN_LOG};
use crate::chunk;
use crate::config::Project;
use crate::error::{io_err, CliError, CliResult};
use crate::files::{self, ProjectLock};

#[derive(Default)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub no_augment: bool,
    pub freeze_encoder: bool,
    pub freeze_context: bool,
    pub from: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainRecord {
    trained_at: u64,
    seed: u64,
    train_segments: usize,
    test_segments: usize,
    newly_assigned: usize,
    best_epoch: usize,
    final_loss: f64,
    train_cer: f64,
    test_cer: Option<f64>,
    model: String,
    fine_tuned_from: Option<String>,
}

fn labeled(items: Vec<(String, LabeledClip)>) -> Vec<LabeledClip> {
    items.into_iter().map(|(_, c)| c).collect()
}

fn eval_items(items: Vec<(String, LabeledClip)>) -> Vec<EvalItem> {
    items
        .into_iter()
        .map(|(id, c)| EvalItem {
            id,
            clip: c.clip,
            transcript: c.transcript,
        })
        .collect()
}

fn write_eval_report(project: &Project, report: &EvalReport) -> CliResult<()> {
    files::write_atomic(
        &project.reports_dir().join(EVAL_REPORT),
        report.to_jsonl().as_bytes(),
    )
}

/// Assigns every unassigned segment to train or test, then trains on train and
/// scores on test.
pub fn train(ctx: &Ctx, o: &TrainOverrides) -> CliResult<()> {
    let project = ctx.project()?;
    let _lock = ProjectLock::acquire(&project.root)?;
    let manifest_path = project.manifest_path();
    let mut manifest = files::require_manifest(&manifest_path)?;
    if manifest.segments.is_empty() {
        return Err(CliError::Empty(format!(
            "{}: no segments",
            manifest_path.display()
        )));
    }
    let unassigned: Vec<usize> = (0..manifest.segments.len())
        .filter(|&i| manifest.segments[i].split == Split::Unassigned)
        .collect();
    if !unassigned.is_empty() {
        corpus::assign_splits(
            &mut manifest,
            &unassigned,
            project.config.train.train_fraction,
            project.seed,
        )?;
        files::save_manifest(&manifest_path, &manifest)?;
    }

    let train_items = labeled(split_items(&project, &manifest, Split::Train)?);
    if train_items.is_empty() {
        return Err(CliError::Empty("train split is empty".into()));
    }
    let test_items = split_items(&project, &manifest, Split::Test)?;

    let mut config = project.config.train_config(project.seed);
    if let Some(e) = o.epochs {
        config.epochs = e;
    }
    if let Some(lr) = o.learning_rate {
        config.learning_rate = lr;
    }
    if let Some(b) = o.batch_size {
        config.batch_size = b;
    }
    if o.no_augment {
        config.augment = None;
    }
    config.freeze_encoder |= o.freeze_encoder;
    config.freeze_context |= o.freeze_context;

    let outcome = match &o.from {
        Some(path) => acoustic::fine_tune(
            load_model(&project, Some(path))?,
            &train_items,
            &project.orth,
            &config,
        )?,
        None => acoustic::train(
            &train_items,
            &project.orth.build_vocab(),
            &project.orth,
            &config,
        )?,
    };
    let model_path = o
        .out
        .clone()
        .unwrap_or_else(|| project.models_dir().join(LATEST_MODEL));
    files::write_atomic(&model_path, &acoustic::save_model(&outcome.model))?;

    let train_cer = eval::corpus_cer(&outcome.model, &train_items, &project.orth)?;
    let test_report = if test_items.is_empty() {
        None
    } else {
        let report = eval::evaluate(&outcome.model, &eval_items(test_items), &project.orth)?;
        write_eval_report(&project, &report)?;
        Some(report)
    };
    let record = TrainRecord {
        trained_at: unix_now(),
        seed: project.seed,
        train_segments: train_items.len(),
        test_segments: test_report.as_ref().map_or(0, |r| r.segments.len()),
        newly_assigned: unassigned.len(),
        best_epoch: outcome.best_epoch,
        final_loss: outcome.history.last().map_or(f64::NAN, |h| h.mean_loss),
        train_cer,
        test_cer: test_report.as_ref().map(|r| r.aggregate_cer),
        model: model_path.display().to_string(),
        fine_tuned_from: o.from.as_ref().map(|p| p.display().to_string()),
    };
    files::append_jsonl(&project.reports_dir().join(TRAIN_LOG), &record)?;

    let mut human = String::new();
    let _ = writeln!(
        human,
        "trained on {} segments ({} newly assigned), best epoch {} of {}",
        record.train_segments,
        record.newly_assigned,
        record.best_epoch + 1,
        config.epochs
    );
    let _ = writeln!(human, "train CER: {}", percent(train_cer));
    match &test_report {
        Some(r) => {
            let _ = writeln!(
                human,
                "test CER: {} over {} segments",
                percent(r.aggregate_cer),
                r.segments.len()
            );
        }
        None => {
            let _ = writeln!(human, "test CER: n/a (test split is empty)");
        }
    }
    let _ = write!(human, "model written to {}", model_path.display());
    ctx.emit(
        &human,
        serde_json::to_value(&record).expect("record serializes"),
    );
    Ok(())
}

/// Trains one model per grid point and ranks them by held-out CER.
pub fn sweep(
    ctx: &Ctx,
    learning_rates: &[f64],
    batch_sizes: &[usize],
    epochs: &[usize],
) -> CliResult<()> {
    let project = ctx.project()?;
    let manifest = files::require_manifest(&project.manifest_path())?;
    let train_items = labeled(split_items(&project, &manifest, Split::Train)?);
    let test_items = labeled(split_items(&project, &manifest, Split::Test)?);
    if train_items.is_empty() || test_items.is_empty() {
        return Err(CliError::Empty(
            "sweep needs non-empty train and test splits; run train first".into(),
        ));
    }
    let base = project.config.train_config(project.seed);
    let or_base = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
    let mut configs = Vec::new();
    for &lr in &or_base(learning_rates, base.learning_rate) {
        for &b in if batch_sizes.is_empty() {
            std::slice::from_ref(&base.batch_size)
        } else {
            batch_sizes
        } {
            for &e in if epochs.is_empty() {
                std::slice::from_ref(&base.epochs)
            } else {
                epochs
            } {
                configs.push(TrainConfig {
                    learning_rate: lr,
                    batch_size: b,
                    epochs: e,
                    ..base.clone()
                });
            }
        }
    }
    let results = acoustic::sweep(
        &train_items,
        &test_items,
        &project.orth.build_vocab(),
        &project.orth,
        &configs,
    )?;
    let best_path = project.models_dir().join("sweep-best.nlr");
    files::write_atomic(&best_path, &acoustic::save_model(&results[0].model))?;

    let mut human = String::from("rank  learning_rate  batch  epochs  test CER\n");
    let mut rows = Vec::new();
    for (rank, r) in results.iter().enumerate() {
        let _ = writeln!(
            human,
            "{:>4}  {:>13}  {:>5}  {:>6}  {:>8}",
            rank + 1,
            r.config.learning_rate,
            r.config.batch_size,
            r.config.epochs,
            percent(r.test_cer)
        );
        rows.push(json!({
            "rank": rank + 1,
            "learning_rate": r.config.learning_rate,
            "batch_size": r.config.batch_size,
            "epochs": r.config.epochs,
            "test_cer": r.test_cer,
        }));
    }
    let _ = write!(human, "best model written to {}", best_path.display());
    let mut log = String::new();
    for row in &rows {
        log.push_str(&row.to_string());
        log.push('\n');
    }
    files::write_atomic(&project.reports_dir().join("sweep.jsonl"), log.as_bytes())?;
    ctx.emit(
        &human,
        json!({ "results": rows, "model": best_path.display().to_string() }),
    );
    Ok(())
}

pub fn evaluate(ctx: &Ctx, model: Option<&Path>, split: Split) -> CliResult<()> {
    let project = ctx.project()?;
    let model = load_model(&project, model)?;
    let manifest = files::require_manifest(&project.manifest_path())?;
    let items = eval_items(split_items(&project, &manifest, split)?);
    let report = eval::evaluate(&model, &items, &project.orth)?;
    write_eval_report(&project, &report)?;
    if ctx.json {
        print!("{}", report.to_jsonl());
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

#[derive(Serialize)]
struct DraftLine {
    start_s: f64,
    end_s: f64,
    window_start_s: f64,
    window_end_s: f64,
    text: String,
}

fn decode_chunks(
    project: &Project,
    model: &AcousticModel,
    path: &Path,
    beam_width: usize,
) -> CliResult<Vec<DraftLine>> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let clip = audio::ingest_wav(&bytes).map_err(|e| CliError::from(e).context(path.display()))?;
    let c = &project.config.chunking;
    let rate = CANONICAL_RATE as f64;
    let plan = chunk::plan(
        clip.len(),
        (c.window_s * rate).round() as usize,
        (c.overlap_s * rate).round() as usize,
    );
    let hop = model.feature_spec().hop_samples(CANONICAL_RATE);
    let mut lines = Vec::with_capacity(plan.len());
    for ch in &plan {
        let lp = model.forward(&clip.slice(ch.start, ch.end))?;
        let kept = chunk::kept_frames(ch, hop, lp.frames());
        let text = if kept.is_empty() {
            String::new()
        } else {
            decode_span(&lp.slice_frames(kept), model, beam_width)?
        };
        lines.push(DraftLine {
            start_s: ch.keep_start as f64 / rate,
            end_s: ch.keep_end as f64 / rate,
            window_start_s: ch.start as f64 / rate,
            window_end_s: ch.end as f64 / rate,
            text,
        });
    }
    Ok(lines)
}

fn decode_span(
    lp: &ctc::LogProbMatrix,
    model: &AcousticModel,
    beam_width: usize,
) -> CliResult<String> {
    Ok(ctc::beam_decode(lp, model.vocab(), beam_width)?
        .trim()
        .to_string())
}

/// Writes a draft in cuts-file form: one `start<TAB>end<TAB>text` line per
/// window, so a corrected copy can be handed straight to `accept`.
pub fn transcribe(
    ctx: &Ctx,
    audio_path: &Path,
    model: Option<&Path>,
    out: Option<&Path>,
    beam_width: Option<usize>,
) -> CliResult<()> {
    let project = ctx.project()?;
    let model = load_model(&project, model)?;
    let width = beam_width.unwrap_or(project.config.chunking.beam_width);
    if width == 0 {
        return Err(CliError::Validation("beam width must be at least 1".into()));
    }
    let lines = decode_chunks(&project, &model, audio_path, width)?;
    let mut draft = String::new();
    for l in &lines {
        draft.push_str(&files::format_cut_line(l.start_s, l.end_s, &l.text));
        draft.push('\n');
    }
    match out {
        Some(path) => {
            files::write_atomic(path, draft.as_bytes())?;
            ctx.emit(
                &format!("wrote {} draft lines to {}", lines.len(), path.display()),
                json!({ "chunks": lines, "out": path.display().to_string() }),
            );
        }
        None => ctx.emit(&draft, json!({ "chunks": lines })),
    }
    Ok(())
}

fn variant_names(spec: &AugmentSpec) -> Vec<String> {
    let mut names = vec!["original".to_string()];
    names.extend(spec.speed_factors.iter().map(|f| format!("speed-{f}")));
    names.extend(spec.pitch_semitones.iter().map(|s| format!("pitch-{s:+}")));
    names.extend(spec.noise_snr_db.iter().map(|d| format!("noise-{d}dB")));
    names
}

/// Writes every augmentation variant of one clip so they can be listened to.
pub fn augment_preview(ctx: &Ctx, audio_path: &Path, out: &Path) -> CliResult<()> {
    let project = ctx.project()?;
    let bytes = std::fs::read(audio_path).map_err(io_err(audio_path))?;
    let clip =
        audio::ingest_wav(&bytes).map_err(|e| CliError::from(e).context(audio_path.display()))?;
    let spec = AugmentSpec {
        seed: project.config.augment.seed ^ project.seed,
        ..project.config.augment.clone()
    };
    let variants = augment::expand(
        &[LabeledClip {
            clip,
            transcript: String::new(),
        }],
        &spec,
    )?;
    let stem = audio_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("clip");
    let mut written = Vec::new();
    for (name, v) in variant_names(&spec).iter().zip(&variants) {
        let path = out.join(format!("{stem}.{name}.wav"));
        files::write_atomic(&path, &audio::encode_wav(&v.clip))?;
        written.push(json!({ "variant": name, "path": path.display().to_string(), "duration_s": v.clip.duration_s() }));
    }
    let human: String = written
        .iter()
        .map(|w| {
            format!(
                "{:<16} {:>6.2}s  {}\n",
                w["variant"].as_str().unwrap_or(""),
                w["duration_s"].as_f64().unwrap_or(0.0),
                w["path"].as_str().unwrap_or("")
            )
        })
        .collect();
    ctx.emit(&human, json!({ "variants": written }));
    Ok(())
}
