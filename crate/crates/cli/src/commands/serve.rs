use std::net::SocketAddr;
use std::path::Path;

use nolor_collect::{AppState, ServiceConfig};

use super::Ctx;
use crate::error::{io_err, CliError, CliResult};

pub const TOKEN_ENV: &str = "NOLOR_PROJECT_TOKEN";

/// Runs the collection service on the project's orthography and schemes
/// until interrupted.
pub fn serve(
    ctx: &Ctx,
    addr: SocketAddr,
    storage: Option<&Path>,
    token: Option<String>,
    sentences: Option<&Path>,
) -> CliResult<()> {
    let project = ctx.project()?;
    let storage = storage
        .map(Path::to_path_buf)
        .unwrap_or_else(|| project.path(&project.config.paths.collect));
    let seed_sentences = match sentences {
        Some(path) => std::fs::read_to_string(path)
            .map_err(io_err(path))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect(),
        None => Vec::new(),
    };
    let token = token
        .or_else(|| std::env::var(TOKEN_ENV).ok())
        .filter(|t| !t.is_empty());
    let state = AppState::open(ServiceConfig {
        storage_dir: storage.clone(),
        // the service adds the built-in phonemic and simplified schemes itself
        schemes: project.schemes[2..].to_vec(),
        orthography: project.orth,
        token: token.clone(),
        seed_sentences,
    })
    .map_err(|e| match e {
        nolor_collect::ServiceError::Store(s) => CliError::Io(s.to_string()),
        other => CliError::Validation(other.to_string()),
    })?;

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Io(format!("bind {addr}: {e}")))?;
        let local = listener.local_addr()?;
        let auth = if token.is_some() { "token required for writes" } else { "no token set" };
        ctx.emit(
            &format!("serving on http://{local} (storage {}, {auth})", storage.display()),
            serde_json::json!({ "addr": local.to_string(), "storage": storage.display().to_string() }),
        );
        nolor_collect::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}
