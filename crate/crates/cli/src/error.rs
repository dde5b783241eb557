use std::fmt::Display;
use std::process::ExitCode;

use nolor_core::acoustic::AcousticError;
use nolor_core::audio::AudioError;
use nolor_core::augment::AugmentError;
use nolor_core::corpus::CorpusError;
use nolor_core::ctc::CtcError;
use nolor_core::eval::EvalError;
use nolor_core::orthography::OrthographyError;

/// Every failure maps to one exit code: 1 validation, 2 I/O, 3 no usable data.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Empty(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Empty(_) => 3,
        })
    }

    pub fn context(self, what: impl Display) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
            CliError::Empty(m) => CliError::Empty(format!("{what}: {m}")),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        match e {
            AudioError::Empty => CliError::Empty(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<OrthographyError> for CliError {
    fn from(e: OrthographyError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CtcError> for CliError {
    fn from(e: CtcError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(_) | CorpusError::Recording { .. } => CliError::Io(e.to_string()),
            CorpusError::Audio(a) => a.into(),
            CorpusError::EmptyManifest | CorpusError::ClipTooShort => {
                CliError::Empty(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<AcousticError> for CliError {
    fn from(e: AcousticError) -> Self {
        match e {
            AcousticError::EmptyTrainSet | AcousticError::AllInfeasible => {
                CliError::Empty(e.to_string())
            }
            AcousticError::BadMagic
            | AcousticError::VersionMismatch { .. }
            | AcousticError::Truncated
            | AcousticError::Corrupt(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::EmptyTestSplit | EvalError::NoEntries => CliError::Empty(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
