//! HTTP backend for crowdsourced recording: serves sentence prompts in the
//! contributor's preferred transliteration, takes speech donations and new
//! sentences, and exports everything as a corpus manifest.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/sentences?scheme=&page=&page_size=` | active prompts, rendered |
//! | POST | `/api/sentences` | new sentence, inactive until activated |
//! | POST | `/api/sentences/{id}/activate` | reviewer approval |
//! | POST | `/api/contributors` | register dialect and scheme |
//! | POST | `/api/recordings` | multipart `audio`, `sentence_id`, `contributor_id`, `idempotency_key` |
//! | POST | `/api/validate` | orthography check for clients |
//! | GET | `/api/schemes` | every scheme's rendering table |
//! | GET | `/api/export` | manifest JSONL |
//! | GET | `/api/health` | counts; 503 when storage is unwritable |
//!
//! When a token is configured, POST routes and export require it in the
//! `x-project-token` header.

pub mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nolor_core::audio::{self, AudioClip};
use nolor_core::corpus::{unix_now, MAX_SEGMENT_SAMPLES, MAX_SEGMENT_SECONDS};
use nolor_core::orthography::{Orthography, OrthographyError, TransliterationScheme};
use serde::Deserialize;
use serde_json::{json, Value};

pub use store::{Contributor, Sentence, Store, StoreError, Submission};

pub const TOKEN_HEADER: &str = "x-project-token";
pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const MAX_UPLOAD_BYTES: usize = 16 * 1024 * 1024;
const MAX_PAGE_SIZE: usize = 200;

pub struct ServiceConfig {
    pub storage_dir: PathBuf,
    pub orthography: Orthography,
    /// Extra schemes beyond the built-in `phonemic` and `simplified`.
    pub schemes: Vec<TransliterationScheme>,
    pub token: Option<String>,
    /// Prompts loaded as active on startup unless already present.
    pub seed_sentences: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("seed sentence {index}: {source}")]
    Seed {
        index: usize,
        #[source]
        source: OrthographyError,
    },
    #[error("duplicate scheme name {0:?}")]
    DuplicateScheme(String),
}

struct Inner {
    orth: Orthography,
    schemes: BTreeMap<String, TransliterationScheme>,
    scheme_order: Vec<String>,
    token: Option<String>,
    store: RwLock<Store>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        let orth = config.orthography;
        let mut schemes = BTreeMap::new();
        let mut scheme_order = Vec::new();
        for scheme in [orth.phonemic_scheme(), orth.simplified_scheme()]
            .into_iter()
            .chain(config.schemes)
        {
            if schemes.contains_key(&scheme.name) {
                return Err(ServiceError::DuplicateScheme(scheme.name));
            }
            scheme_order.push(scheme.name.clone());
            schemes.insert(scheme.name.clone(), scheme);
        }
        let mut store = Store::open(&config.storage_dir)?;
        for (index, text) in config.seed_sentences.iter().enumerate() {
            let text = orth
                .validate(text)
                .map_err(|source| ServiceError::Seed { index, source })?;
            if text.trim().is_empty() || store.sentences.values().any(|s| s.text_phonemic == text) {
                continue;
            }
            store.add_sentence(text, None, true)?;
        }
        Ok(AppState(Arc::new(Inner {
            orth,
            schemes,
            scheme_order,
            token: config.token,
            store: RwLock::new(store),
        })))
    }

    fn store(&self) -> std::sync::RwLockReadGuard<'_, Store> {
        self.0.store.read().unwrap_or_else(|e| e.into_inner())
    }

    fn store_mut(&self) -> std::sync::RwLockWriteGuard<'_, Store> {
        self.0.store.write().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/sentences", get(list_sentences).post(submit_sentence))
        .route("/api/sentences/{id}/activate", post(activate_sentence))
        .route("/api/contributors", post(add_contributor))
        .route("/api/recordings", post(submit_recording))
        .route("/api/validate", post(validate))
        .route("/api/schemes", get(schemes))
        .route("/api/export", get(export))
        .route("/api/health", get(health))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    details: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(Value::Object(extra)) = self.details {
            error.as_object_mut().expect("object").extend(extra);
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "storage_unavailable",
            e.to_string(),
        )
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn orthography_error(e: &OrthographyError) -> ApiError {
    let err = ApiError::new(
        StatusCode::UNPROCESSABLE_ENTITY,
        "orthography",
        e.to_string(),
    );
    match e {
        OrthographyError::UnknownSymbol {
            char_offset,
            byte_offset,
            codepoint,
        } => err.with_details(json!({
            "position": {
                "char_offset": char_offset,
                "byte_offset": byte_offset,
                "codepoint": codepoint.to_string(),
            }
        })),
        _ => err,
    }
}

fn check_token(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    match &state.0.token {
        None => Ok(()),
        Some(token)
            if headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok()) == Some(token.as_str()) =>
        {
            Ok(())
        }
        Some(_) => Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            format!("missing or wrong {TOKEN_HEADER} header"),
        )),
    }
}

/// Validates and normalizes to NFC; empty text is rejected.
fn checked_text(orth: &Orthography, text: &str) -> ApiResult<String> {
    let text = orth.validate(text).map_err(|e| orthography_error(&e))?;
    if text.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "empty_text",
            "text is empty",
        ));
    }
    Ok(text)
}

#[derive(Deserialize)]
struct ListQuery {
    scheme: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

async fn list_sentences(
    State(state): State<AppState>,
    Query(q): Query<ListQuery>,
) -> ApiResult<Json<Value>> {
    let scheme_name = q.scheme.unwrap_or_else(|| "phonemic".into());
    let scheme = state.0.schemes.get(&scheme_name).ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "unknown_scheme",
            format!("unknown scheme {scheme_name:?}"),
        )
    })?;
    let page = q.page.unwrap_or(1);
    let page_size = q.page_size.unwrap_or(20);
    if page == 0 || page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_page",
            format!("page must be >= 1 and page_size in 1..={MAX_PAGE_SIZE}"),
        ));
    }
    let store = state.store();
    let active: Vec<&Sentence> = store.sentences.values().filter(|s| s.active).collect();
    let mut items = Vec::new();
    for s in active.iter().skip((page - 1) * page_size).take(page_size) {
        let rendered = state
            .0
            .orth
            .transliterate(&s.text_phonemic, scheme)
            .map_err(|e| {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "render", e.to_string())
            })?;
        items.push(json!({
            "id": s.id,
            "text_phonemic": s.text_phonemic,
            "rendered": rendered,
            "contributed_by": s.contributed_by,
        }));
    }
    Ok(Json(json!({
        "scheme": scheme_name,
        "page": page,
        "page_size": page_size,
        "total": active.len(),
        "sentences": items,
    })))
}

#[derive(Deserialize)]
struct NewSentence {
    text_phonemic: String,
    contributor_id: Option<String>,
}

async fn submit_sentence(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(body): Json<NewSentence>,
) -> ApiResult<(StatusCode, Json<Sentence>)> {
    check_token(&state, &headers)?;
    let text = checked_text(&state.0.orth, &body.text_phonemic)?;
    let mut store = state.store_mut();
    if let Some(c) = &body.contributor_id {
        if !store.contributors.contains_key(c) {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_contributor",
                format!("no contributor {c:?}"),
            ));
        }
    }
    let sentence = store.add_sentence(text, body.contributor_id, false)?;
    Ok((StatusCode::CREATED, Json(sentence)))
}

async fn activate_sentence(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<Sentence>> {
    check_token(&state, &headers)?;
    let mut store = state.store_mut();
    if !store.sentences.contains_key(&id) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_sentence",
            format!("no sentence {id:?}"),
        ));
    }
    store.activate(&id)?;
    Ok(Json(store.sentences[&id].clone()))
}

#[derive(Deserialize)]
struct NewContributor {
    dialect: String,
    preferred_scheme: String,
}

async fn add_contributor(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(body): Json<NewContributor>,
) -> ApiResult<(StatusCode, Json<Contributor>)> {
    check_token(&state, &headers)?;
    if !state.0.schemes.contains_key(&body.preferred_scheme) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "unknown_scheme",
            format!("unknown scheme {:?}", body.preferred_scheme),
        ));
    }
    let c = state
        .store_mut()
        .add_contributor(body.dialect, body.preferred_scheme)?;
    Ok((StatusCode::CREATED, Json(c)))
}

#[derive(Default)]
struct RecordingForm {
    audio: Option<Bytes>,
    sentence_id: Option<String>,
    contributor_id: Option<String>,
    idempotency_key: Option<String>,
}

async fn read_form(mut multipart: Multipart) -> ApiResult<RecordingForm> {
    let mut form = RecordingForm::default();
    let bad = |e: axum::extract::multipart::MultipartError| {
        let status = e.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "too_large"
        } else {
            "bad_multipart"
        };
        ApiError::new(status, code, e.body_text())
    };
    while let Some(field) = multipart.next_field().await.map_err(bad)? {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "audio" => form.audio = Some(field.bytes().await.map_err(bad)?),
            "sentence_id" => form.sentence_id = Some(field.text().await.map_err(bad)?),
            "contributor_id" => form.contributor_id = Some(field.text().await.map_err(bad)?),
            "idempotency_key" => form.idempotency_key = Some(field.text().await.map_err(bad)?),
            _ => {}
        }
    }
    Ok(form)
}

fn missing(field: &str) -> ApiError {
    ApiError::new(
        StatusCode::BAD_REQUEST,
        "missing_field",
        format!("multipart field {field:?} is required"),
    )
}

async fn submit_recording(
    State(state): State<AppState>,
    headers: HeaderMap,
    multipart: Multipart,
) -> ApiResult<(StatusCode, Json<Submission>)> {
    check_token(&state, &headers)?;
    let form = read_form(multipart).await?;
    let key = form.idempotency_key.filter(|k| !k.is_empty()).or_else(|| {
        headers
            .get(IDEMPOTENCY_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string)
    });
    if let Some(existing) = key
        .as_deref()
        .and_then(|k| state.store().by_idempotency_key(k).cloned())
    {
        return Ok((StatusCode::OK, Json(existing)));
    }
    let sentence_id = form.sentence_id.ok_or_else(|| missing("sentence_id"))?;
    let contributor_id = form
        .contributor_id
        .ok_or_else(|| missing("contributor_id"))?;
    let bytes = form.audio.ok_or_else(|| missing("audio"))?;
    {
        let store = state.store();
        match store.sentences.get(&sentence_id) {
            None => {
                return Err(ApiError::new(
                    StatusCode::NOT_FOUND,
                    "unknown_sentence",
                    format!("no sentence {sentence_id:?}"),
                ))
            }
            Some(s) if !s.active => {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "inactive_sentence",
                    format!("sentence {sentence_id:?} is awaiting review"),
                ))
            }
            Some(_) => {}
        }
        if !store.contributors.contains_key(&contributor_id) {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_contributor",
                format!("no contributor {contributor_id:?}"),
            ));
        }
    }
    let clip: AudioClip = audio::ingest_wav(&bytes)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "bad_audio", e.to_string()))?;
    if clip.len() > MAX_SEGMENT_SAMPLES {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "too_long",
            format!(
                "recording is {:.2} s; the limit is {MAX_SEGMENT_SECONDS} s",
                clip.duration_s()
            ),
        ));
    }
    let normalized = audio::encode_wav(&clip);

    let mut store = state.store_mut();
    // a concurrent retry may have won the race while we decoded
    if let Some(existing) = key
        .as_deref()
        .and_then(|k| store.by_idempotency_key(k).cloned())
    {
        return Ok((StatusCode::OK, Json(existing)));
    }
    let id = store.next_submission_id();
    let submission = Submission {
        audio: format!("{}/{id}.wav", store::AUDIO_DIR),
        original: format!("{}/{id}.orig.wav", store::AUDIO_DIR),
        id,
        sentence_id,
        contributor_id,
        samples: clip.len(),
        duration_s: clip.duration_s(),
        received_at: unix_now(),
        idempotency_key: key,
    };
    store.write_audio(&submission.original, &bytes)?;
    store.write_audio(&submission.audio, &normalized)?;
    store.add_submission(submission.clone())?;
    Ok((StatusCode::CREATED, Json(submission)))
}

#[derive(Deserialize)]
struct ValidateRequest {
    text: String,
}

/// Always 200: the body says whether the text is valid and, if not, where.
async fn validate(State(state): State<AppState>, Json(body): Json<ValidateRequest>) -> Json<Value> {
    let orth = &state.0.orth;
    match checked_text(orth, &body.text) {
        Ok(text) => {
            let renderings: BTreeMap<&str, String> = state
                .0
                .schemes
                .iter()
                .map(|(name, s)| {
                    (
                        name.as_str(),
                        orth.transliterate(&text, s).unwrap_or_default(),
                    )
                })
                .collect();
            let graphemes = orth.tokenize(&text).map(|g| g.len()).unwrap_or(0);
            Json(json!({
                "valid": true,
                "normalized": orth.normalize(&text).unwrap_or_default(),
                "graphemes": graphemes,
                "renderings": renderings,
            }))
        }
        Err(e) => {
            let mut error = json!({ "code": e.code, "message": e.message });
            if let Some(Value::Object(extra)) = e.details {
                error.as_object_mut().expect("object").extend(extra);
            }
            Json(json!({ "valid": false, "error": error }))
        }
    }
}

async fn schemes(State(state): State<AppState>) -> Json<Value> {
    let orth = &state.0.orth;
    let list: Vec<Value> = state
        .0
        .scheme_order
        .iter()
        .map(|name| {
            let scheme = &state.0.schemes[name];
            let table: Vec<[&str; 2]> = orth
                .graphemes()
                .iter()
                .map(|g| {
                    [
                        g.symbol.as_str(),
                        scheme.render(&g.symbol).unwrap_or_default(),
                    ]
                })
                .collect();
            json!({ "name": name, "renderings": table })
        })
        .collect();
    Json(json!({ "orthography": orth.name(), "schemes": list }))
}

async fn export(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<Response> {
    check_token(&state, &headers)?;
    let mut manifest = state.store().export(state.0.orth.name(), unix_now());
    for seg in &mut manifest.segments {
        // stored sentences are validated, so normalizing cannot fail
        seg.transcript = state.0.orth.normalize(&seg.transcript).unwrap_or_default();
    }
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        manifest.export(),
    )
        .into_response())
}

async fn health(State(state): State<AppState>) -> Response {
    let store = state.store();
    if let Err(e) = store.probe() {
        return ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "storage_unwritable",
            e.to_string(),
        )
        .into_response();
    }
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "orthography": state.0.orth.name(),
        "sentences": store.sentences.len(),
        "active_sentences": store.sentences.values().filter(|s| s.active).count(),
        "contributors": store.contributors.len(),
        "submissions": store.submissions.len(),
    }))
    .into_response()
}
