//! Project file plumbing: the writer lock, atomic replacement, cuts files
//! and small JSONL logs.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::Write;
use std::path::{Path, PathBuf};

use nolor_core::corpus::{Cut, Manifest};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{io_err, CliError, CliResult};

pub const LOCK_FILE: &str = ".nolor.lock";

/// Exclusive advisory lock on the project; released when dropped or when the
/// process dies, so there is no stale-lock cleanup.
pub struct ProjectLock {
    _file: File,
}

impl ProjectLock {
    pub fn acquire(root: &Path) -> CliResult<Self> {
        let path = root.join(LOCK_FILE);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        match file.try_lock() {
            Ok(()) => Ok(ProjectLock { _file: file }),
            Err(TryLockError::WouldBlock) => Err(CliError::Io(format!(
                "{}: another nolor command is working on this project",
                path.display()
            ))),
            Err(TryLockError::Error(e)) => Err(io_err(&path)(e)),
        }
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Reads the manifest, or starts an empty one if the file does not exist yet.
pub fn load_manifest(path: &Path, orthography_name: &str) -> CliResult<Manifest> {
    match fs::read(path) {
        Ok(bytes) => {
            Manifest::import(&bytes).map_err(|e| CliError::from(e).context(path.display()))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::new(
            orthography_name,
            nolor_core::corpus::unix_now(),
        )),
        Err(e) => Err(io_err(path)(e)),
    }
}

pub fn require_manifest(path: &Path) -> CliResult<Manifest> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Manifest::import(&bytes).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn save_manifest(path: &Path, manifest: &Manifest) -> CliResult<()> {
    write_atomic(path, &manifest.export())
}

/// One `start_s<TAB>end_s<TAB>transcript` line per segment. Blank lines and
/// `#` comments are skipped.
pub fn parse_cuts(text: &str) -> CliResult<(Vec<Cut>, Vec<String>)> {
    let mut cuts = Vec::new();
    let mut transcripts = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (Some(start), Some(end), Some(transcript)) =
            (fields.next(), fields.next(), fields.next())
        else {
            return Err(CliError::Validation(format!(
                "line {}: expected start_s<TAB>end_s<TAB>transcript",
                i + 1
            )));
        };
        let time = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("line {}: bad time {s:?}", i + 1)))
        };
        cuts.push(Cut::new(time(start)?, time(end)?));
        transcripts.push(transcript.to_string());
    }
    Ok((cuts, transcripts))
}

pub fn format_cut_line(start_s: f64, end_s: f64, text: &str) -> String {
    format!("{start_s:.3}\t{end_s:.3}\t{text}")
}

pub fn append_jsonl<T: Serialize>(path: &Path, record: &T) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut line = serde_json::to_string(record).expect("records serialize");
    line.push('\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    f.write_all(line.as_bytes()).map_err(io_err(path))
}

/// Every record of a JSONL file; a missing file reads as empty.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                CliError::Validation(format!("{} line {}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}
