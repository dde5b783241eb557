//! `nolor`: record, segment, train, transcribe and correct, in a loop.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error, 3 no usable data.

mod chunk;
mod commands;
mod config;
mod error;
mod files;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nolor_core::corpus::{Split, MAX_SEGMENT_SECONDS};

use commands::corpus::{AcceptArgs, Speaker, Timing};
use commands::model::TrainOverrides;
use commands::Ctx;
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "nolor",
    version,
    about = "Speech recognition toolkit for documenting low-resource languages"
)]
struct Cli {
    /// Project configuration; relative paths inside it resolve against its directory.
    #[arg(long, global = true, default_value = "nolor.toml")]
    config: PathBuf,
    /// Overrides the configured seed for training, splits and augmentation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    Unassigned,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
            SplitArg::Unassigned => Split::Unassigned,
        }
    }
}

#[derive(Args)]
struct SpeakerArgs {
    #[arg(long, default_value = "unknown")]
    speaker: String,
    #[arg(long, default_value = "")]
    dialect: String,
}

impl From<SpeakerArgs> for Speaker {
    fn from(a: SpeakerArgs) -> Speaker {
        Speaker {
            speaker: a.speaker,
            dialect: a.dialect,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Segment a recording by a cuts file and append it to the manifest.
    Ingest {
        /// WAV recording (any rate, mono or multichannel PCM16).
        wav: Option<PathBuf>,
        /// `start_s<TAB>end_s<TAB>transcript` lines.
        cuts: Option<PathBuf>,
        /// Segment id prefix; defaults to the WAV file stem.
        #[arg(long)]
        id: Option<String>,
        #[command(flatten)]
        who: SpeakerArgs,
        #[arg(long, value_enum, default_value = "unassigned")]
        split: SplitArg,
        /// Print proposed cuts for WAV instead of ingesting.
        #[arg(long, conflicts_with_all = ["cuts", "from_manifest"])]
        suggest_cuts: bool,
        #[arg(long, default_value_t = MAX_SEGMENT_SECONDS)]
        max_len_s: f64,
        #[arg(long, default_value_t = -40.0, allow_negative_numbers = true)]
        silence_db: f64,
        /// Merge another manifest, such as the collection service's export.
        #[arg(long, conflicts_with_all = ["wav", "cuts"], requires = "source_root")]
        from_manifest: Option<PathBuf>,
        /// Directory the merged manifest's recording paths are relative to.
        #[arg(long)]
        source_root: Option<PathBuf>,
        /// Id and directory prefix for merged segments.
        #[arg(long, default_value = "collect")]
        prefix: String,
    },
    /// Train on the train split, score on the test split.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        no_augment: bool,
        #[arg(long)]
        freeze_encoder: bool,
        #[arg(long)]
        freeze_context: bool,
        /// Continue from this model instead of a fresh initialisation.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Model output path (default: models/latest.nlr).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train over a hyperparameter grid and rank by held-out CER.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        lr: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        batch_size: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        epochs: Vec<usize>,
    },
    /// Write every augmentation variant of a clip for listening.
    AugmentPreview {
        wav: PathBuf,
        #[arg(long, default_value = "augment-preview")]
        out: PathBuf,
    },
    /// Draft a transcript of a recording of any length.
    Transcribe {
        wav: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Draft file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        beam_width: Option<usize>,
    },
    /// Add a corrected transcript to the manifest and record draft accuracy.
    Accept {
        wav: PathBuf,
        /// Corrected draft, in cuts-file form.
        corrected: PathBuf,
        /// The draft as produced by `transcribe`, for draft-vs-correction CER.
        #[arg(long)]
        draft: Option<PathBuf>,
        #[arg(long)]
        id: Option<String>,
        #[command(flatten)]
        who: SpeakerArgs,
        /// Minutes spent transcribing without a draft.
        #[arg(long, requires_all = ["minutes_with", "cer_without", "cer_with"])]
        minutes_without: Option<f64>,
        /// Minutes spent correcting the draft.
        #[arg(long, requires = "minutes_without")]
        minutes_with: Option<f64>,
        /// Error of the unassisted transcription, in percent.
        #[arg(long, requires = "minutes_without")]
        cer_without: Option<f64>,
        /// Error of the assisted transcription, in percent.
        #[arg(long, requires = "minutes_without")]
        cer_with: Option<f64>,
    },
    /// Score a model on one split.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Speedup table and latest evaluation.
    Report,
    /// Run the collection service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Storage directory (default: the project's collect path).
        #[arg(long)]
        storage: Option<PathBuf>,
        /// Shared token for writes; also read from NOLOR_PROJECT_TOKEN.
        #[arg(long)]
        token: Option<String>,
        /// Prompts to load as active, one per line.
        #[arg(long)]
        sentences: Option<PathBuf>,
    },
    /// Copy segments, recordings and per-scheme transcripts to a directory.
    Export {
        out: PathBuf,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let ctx = Ctx {
        config: cli.config,
        seed: cli.seed,
        json: cli.json,
    };
    match cli.command {
        Command::Ingest {
            wav,
            cuts,
            id,
            who,
            split,
            suggest_cuts,
            max_len_s,
            silence_db,
            from_manifest,
            source_root,
            prefix,
        } => {
            if let Some(m) = from_manifest {
                let root = source_root.expect("clap enforces --source-root");
                return commands::corpus::merge(&ctx, &m, &root, &prefix);
            }
            let wav = wav.ok_or_else(|| CliError::Validation("missing WAV argument".into()))?;
            if suggest_cuts {
                return commands::corpus::suggest(&ctx, &wav, max_len_s, silence_db);
            }
            let cuts =
                cuts.ok_or_else(|| CliError::Validation("missing cuts file argument".into()))?;
            commands::corpus::ingest(&ctx, &wav, &cuts, id.as_deref(), &who.into(), split.into())
        }
        Command::Train {
            epochs,
            lr,
            batch_size,
            no_augment,
            freeze_encoder,
            freeze_context,
            from,
            out,
        } => commands::model::train(
            &ctx,
            &TrainOverrides {
                epochs,
                learning_rate: lr,
                batch_size,
                no_augment,
                freeze_encoder,
                freeze_context,
                from,
                out,
            },
        ),
        Command::Sweep {
            lr,
            batch_size,
            epochs,
        } => commands::model::sweep(&ctx, &lr, &batch_size, &epochs),
        Command::AugmentPreview { wav, out } => commands::model::augment_preview(&ctx, &wav, &out),
        Command::Transcribe {
            wav,
            model,
            out,
            beam_width,
        } => commands::model::transcribe(&ctx, &wav, model.as_deref(), out.as_deref(), beam_width),
        Command::Accept {
            wav,
            corrected,
            draft,
            id,
            who,
            minutes_without,
            minutes_with,
            cer_without,
            cer_with,
        } => {
            let timing = match (minutes_without, minutes_with, cer_without, cer_with) {
                (Some(a), Some(b), Some(c), Some(d)) => Some(Timing {
                    minutes_without: a,
                    minutes_with: b,
                    cer_without_pct: c,
                    cer_with_pct: d,
                }),
                _ => None,
            };
            commands::corpus::accept(
                &ctx,
                &AcceptArgs {
                    audio: &wav,
                    corrected: &corrected,
                    draft: draft.as_deref(),
                    id: id.as_deref(),
                    who: who.into(),
                    timing,
                },
            )
        }
        Command::Eval { model, split } => {
            commands::model::evaluate(&ctx, model.as_deref(), split.into())
        }
        Command::Report => commands::report::report(&ctx),
        Command::Serve {
            addr,
            storage,
            token,
            sentences,
        } => commands::serve::serve(&ctx, addr, storage.as_deref(), token, sentences.as_deref()),
        Command::Export { out, split } => {
            commands::corpus::export(&ctx, &out, split.map(Into::into))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are validation errors, not clap's default of 2
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
