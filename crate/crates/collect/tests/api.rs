use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use nolor_collect::{router, AppState, ServiceConfig, TOKEN_HEADER};
use nolor_core::audio::{self, AudioClip};
use nolor_core::corpus::Manifest;
use nolor_core::synth;
use serde_json::{json, Value};
use tower::ServiceExt;

const BOUNDARY: &str = "XnolorBoundaryX";

fn app(dir: &std::path::Path, token: Option<&str>) -> Router {
    let state = AppState::open(ServiceConfig {
        storage_dir: dir.to_path_buf(),
        orthography: synth::orthography(),
        schemes: vec![],
        token: token.map(str::to_string),
        seed_sentences: vec!["ka=šu".into(), "sika".into()],
    })
    .unwrap();
    router(state)
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes)
        .unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_json(uri: &str, body: Value) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn multipart(fields: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, value) in fields {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        if *name == "audio" {
            body.extend_from_slice(
                b"Content-Disposition: form-data; name=\"audio\"; filename=\"take.wav\"\r\nContent-Type: audio/wav\r\n\r\n",
            );
        } else {
            body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes(),
            );
        }
        body.extend_from_slice(value);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

fn upload(fields: &[(&str, &[u8])]) -> Request<Body> {
    Request::post("/api/recordings")
        .header(
            "content-type",
            format!("multipart/form-data; boundary={BOUNDARY}"),
        )
        .body(Body::from(multipart(fields)))
        .unwrap()
}

async fn contributor(app: &Router) -> String {
    let (status, c) = send(
        app,
        post_json(
            "/api/contributors",
            json!({"dialect": "north", "preferred_scheme": "simplified"}),
        ),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    c["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn sentences_are_rendered_in_the_requested_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let (status, body) = send(&app, get("/api/sentences?scheme=simplified")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["total"], 2);
    let first = &body["sentences"][0];
    assert_eq!(first["text_phonemic"], "ka=šu");
    assert_eq!(first["rendered"], "kashu");

    let (status, body) = send(&app, get("/api/sentences?scheme=klingon")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "unknown_scheme");

    let (_, page) = send(&app, get("/api/sentences?page=2&page_size=1")).await;
    assert_eq!(page["sentences"].as_array().unwrap().len(), 1);
    assert_eq!(page["sentences"][0]["text_phonemic"], "sika");
}

#[tokio::test]
async fn new_sentences_wait_for_activation() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let (status, s) = send(
        &app,
        post_json("/api/sentences", json!({"text_phonemic": "kuši"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(s["active"], false);
    let (_, list) = send(&app, get("/api/sentences")).await;
    assert_eq!(list["total"], 2);

    let id = s["id"].as_str().unwrap();
    let (status, s) = send(
        &app,
        post_json(&format!("/api/sentences/{id}/activate"), json!({})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["active"], true);
    let (_, list) = send(&app, get("/api/sentences")).await;
    assert_eq!(list["total"], 3);

    let (status, _) = send(
        &app,
        post_json("/api/sentences/sent-999999/activate", json!({})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_sentences_report_the_offending_position() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let (status, body) = send(
        &app,
        post_json("/api/sentences", json!({"text_phonemic": "kaxu"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let pos = &body["error"]["position"];
    assert_eq!(pos["char_offset"], 2);
    assert_eq!(pos["byte_offset"], 2);
    assert_eq!(pos["codepoint"], "x");

    let (status, body) = send(
        &app,
        post_json("/api/sentences", json!({"text_phonemic": ""})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "empty_text");
}

#[tokio::test]
async fn validation_endpoint_mirrors_the_orthography() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let (status, ok) = send(&app, post_json("/api/validate", json!({"text": "ˈšu=ka"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ok["valid"], true);
    assert_eq!(ok["normalized"], "šu=ka");
    assert_eq!(ok["renderings"]["simplified"], "shuka");
    assert_eq!(ok["renderings"]["phonemic"], "ˈšu=ka");

    let (status, bad) = send(&app, post_json("/api/validate", json!({"text": "šuq"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bad["valid"], false);
    assert_eq!(bad["error"]["position"]["char_offset"], 2);
    assert_eq!(bad["error"]["position"]["byte_offset"], 3);

    let (_, schemes) = send(&app, get("/api/schemes")).await;
    let names: Vec<&str> = schemes["schemes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["phonemic", "simplified"]);
}

#[tokio::test]
async fn recordings_are_stored_deduplicated_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let user = contributor(&app).await;
    let wav = audio::encode_wav(&synth::render("ka=šu", 1));

    let fields: [(&str, &[u8]); 4] = [
        ("audio", &wav),
        ("sentence_id", b"sent-000001"),
        ("contributor_id", user.as_bytes()),
        ("idempotency_key", b"take-1"),
    ];
    let (status, first) = send(&app, upload(&fields)).await;
    assert_eq!(status, StatusCode::CREATED, "{first}");
    let (status, again) = send(&app, upload(&fields)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first, again);
    assert!(dir.path().join(first["audio"].as_str().unwrap()).is_file());
    assert_eq!(
        std::fs::read(dir.path().join(first["original"].as_str().unwrap())).unwrap(),
        wav
    );

    let (status, body) = send(
        &app,
        upload(&[
            ("audio", &wav),
            ("sentence_id", b"sent-000077"),
            ("contributor_id", user.as_bytes()),
        ]),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "unknown_sentence");

    let (status, _) = send(
        &app,
        upload(&[
            ("audio", &wav),
            ("sentence_id", b"sent-000001"),
            ("contributor_id", b"user-000099"),
        ]),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = send(
        &app,
        upload(&[
            ("audio", b"not a wav"),
            ("sentence_id", b"sent-000001"),
            ("contributor_id", user.as_bytes()),
        ]),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "bad_audio");

    let (_, inactive) = send(
        &app,
        post_json("/api/sentences", json!({"text_phonemic": "uki"})),
    )
    .await;
    let (status, _) = send(
        &app,
        upload(&[
            ("audio", &wav),
            ("sentence_id", inactive["id"].as_str().unwrap().as_bytes()),
            ("contributor_id", user.as_bytes()),
        ]),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn overlong_recordings_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let user = contributor(&app).await;
    let long = AudioClip::new(vec![0.01; 16_000 * 15 + 1], 16_000).unwrap();
    let wav = audio::encode_wav(&long);
    let (status, body) = send(
        &app,
        upload(&[
            ("audio", &wav),
            ("sentence_id", b"sent-000001"),
            ("contributor_id", user.as_bytes()),
        ]),
    )
    .await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(body["error"]["code"], "too_long");

    let exact = audio::encode_wav(&AudioClip::new(vec![0.01; 16_000 * 15], 16_000).unwrap());
    let (status, _) = send(
        &app,
        upload(&[
            ("audio", &exact),
            ("sentence_id", b"sent-000001"),
            ("contributor_id", user.as_bytes()),
        ]),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
}

#[tokio::test]
async fn export_round_trips_into_a_trainable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let user = contributor(&app).await;
    for (i, (sent, text)) in [("sent-000001", "ka=šu"), ("sent-000002", "sika")]
        .into_iter()
        .enumerate()
    {
        let wav = audio::encode_wav(&synth::render(text, i as u64));
        let (status, _) = send(
            &app,
            upload(&[
                ("audio", &wav),
                ("sentence_id", sent.as_bytes()),
                ("contributor_id", user.as_bytes()),
            ]),
        )
        .await;
        assert_eq!(status, StatusCode::CREATED);
    }
    let resp = app.clone().oneshot(get("/api/export")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let manifest = Manifest::import(&bytes).unwrap();
    assert_eq!(manifest.segments.len(), 2);
    assert_eq!(manifest.segments[0].transcript, "ka=šu");
    assert_eq!(manifest.segments[0].dialect, "north");
    manifest
        .validate_transcripts(&synth::orthography())
        .unwrap();
    manifest.validate_recordings(dir.path()).unwrap();
}

#[tokio::test]
async fn token_guards_writes_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), Some("s3cret"));
    let (status, body) = send(
        &app,
        post_json("/api/sentences", json!({"text_phonemic": "ku"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["error"]["code"], "unauthorized");
    let (status, _) = send(&app, get("/api/export")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    let req = Request::post("/api/sentences")
        .header("content-type", "application/json")
        .header(TOKEN_HEADER, "s3cret")
        .body(Body::from(json!({"text_phonemic": "ku"}).to_string()))
        .unwrap();
    let (status, _) = send(&app, req).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, _) = send(&app, get("/api/sentences")).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn state_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    {
        let app = app(dir.path(), None);
        contributor(&app).await;
        send(
            &app,
            post_json("/api/sentences", json!({"text_phonemic": "ku"})),
        )
        .await;
    }
    let app = app(dir.path(), None);
    let (status, health) = send(&app, get("/api/health")).await;
    assert_eq!(status, StatusCode::OK);
    // seeds are not duplicated on reopen
    assert_eq!(health["sentences"], 3);
    assert_eq!(health["active_sentences"], 2);
    assert_eq!(health["contributors"], 1);
}

#[cfg(unix)]
#[tokio::test]
async fn health_fails_when_storage_is_read_only() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    std::fs::set_permissions(dir.path(), std::fs::Permissions::from_mode(0o555)).unwrap();
    let probe = std::fs::write(dir.path().join("x"), b"");
    let (status, body) = send(&app, get("/api/health")).await;
    std::fs::set_permissions(dir.path(), std::fs::Permissions::from_mode(0o755)).unwrap();
    if probe.is_ok() {
        // running as root: permissions are not enforced
        return;
    }
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"]["code"], "storage_unwritable");
}
