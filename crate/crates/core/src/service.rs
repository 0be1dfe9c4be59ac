//! HTTP recognition service.
//!
//! | method | path             | body / response                                   |
//! |--------|------------------|---------------------------------------------------|
//! | POST   | `/api/recognize` | `{"strokes": [[[x, y, t?], ...], ...], "k": 1}` → [`RecognitionResult`] |
//! | GET    | `/api/health`    | `{"status": "starting" \| "ready"}`               |
//! | GET    | `/api/models`    | labels, pipeline hash, manifest hash, rule-set kind |
//!
//! Errors are `{"error": {"code": ..., "message": ...}}` with status 400
//! (bad request) or 503 (models not loaded yet). Unknown request fields are
//! ignored, so a whole ink record is an acceptable body. The same
//! [`parse_request`] / [`Engine::recognize`] pair backs `inkrec recognize`,
//! which keeps the two outputs byte-identical.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use crate::classifier::{BundleManifest, LoadedBundle, StrokeClassifier};
use crate::ink::{InkTrace, Point};
use crate::recognizer::{recognize, RecognitionResult};
use crate::rules::{RuleSet, RuleSetKind};

#[derive(Debug, Clone, Deserialize)]
pub struct RecognizeRequest {
    #[serde(default)]
    pub strokes: Vec<Vec<Point>>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: 400,
            code,
            message: message.into(),
        }
    }

    fn not_ready() -> Self {
        ApiError {
            status: 503,
            code: "not_ready",
            message: "models are not loaded".into(),
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Envelope<'a> {
            error: &'a ApiError,
        }
        serde_json::to_string(&Envelope { error: self }).expect("error serializes")
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

pub fn parse_request(body: &[u8]) -> Result<RecognizeRequest, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("malformed_body", e.to_string()))
}

/// Immutable bundle + rules shared by every request.
#[derive(Debug)]
pub struct Engine {
    pub bundle: LoadedBundle,
    pub rules: RuleSet,
}

#[derive(Debug, Serialize)]
pub struct ModelsInfo<'a> {
    pub labels: &'a [String],
    pub n_states: usize,
    pub pipeline_hash: &'a str,
    pub manifest_sha256: &'a str,
    pub rules: RulesInfo,
    pub manifest: &'a BundleManifest,
}

#[derive(Debug, Serialize)]
pub struct RulesInfo {
    pub kind: RuleSetKind,
    pub count: usize,
}

impl Engine {
    pub fn load(
        bundle_dir: impl AsRef<Path>,
        rules_path: impl AsRef<Path>,
    ) -> crate::Result<Engine> {
        Ok(Engine {
            bundle: StrokeClassifier::load_bundle(bundle_dir)?,
            rules: RuleSet::load(rules_path)?,
        })
    }

    pub fn recognize(&self, req: &RecognizeRequest) -> Result<RecognitionResult, ApiError> {
        let k = req.k.unwrap_or(1);
        if k == 0 {
            return Err(ApiError::bad_request("invalid_k", "k must be at least 1"));
        }
        if req.strokes.is_empty() {
            return Err(ApiError::bad_request("no_strokes", "no strokes"));
        }
        let traces = req
            .strokes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if s.is_empty() {
                    return Err(ApiError::bad_request(
                        "empty_stroke",
                        format!("stroke {i} is empty"),
                    ));
                }
                InkTrace::new(s.clone()).map_err(|e| {
                    ApiError::bad_request("invalid_stroke", format!("stroke {i}: {e}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        recognize(&self.bundle.classifier, &self.rules, &traces, k).map_err(|e| ApiError {
            status: 500,
            code: "internal",
            message: e.to_string(),
        })
    }

    pub fn models(&self) -> ModelsInfo<'_> {
        let m = &self.bundle.manifest;
        ModelsInfo {
            labels: &m.labels,
            n_states: m.n_states,
            pipeline_hash: &m.pipeline_hash,
            manifest_sha256: &self.bundle.manifest_sha256,
            rules: RulesInfo {
                kind: self.rules.kind(),
                count: self.rules.len(),
            },
            manifest: m,
        }
    }
}

/// Handle to the engine slot; empty until loading finishes.
#[derive(Clone, Default)]
pub struct AppState {
    engine: Arc<OnceLock<Engine>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_engine(engine: Engine) -> Self {
        let s = Self::new();
        s.install(engine);
        s
    }

    /// First install wins; later calls are ignored.
    pub fn install(&self, engine: Engine) {
        let _ = self.engine.set(engine);
    }

    pub fn engine(&self) -> Option<&Engine> {
        self.engine.get()
    }
}

/// Bodies end in a newline so a response equals one line of CLI output.
fn json(status: StatusCode, mut body: String) -> Response {
    body.push('\n');
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(e: ApiError) -> Response {
    json(
        StatusCode::from_u16(e.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
        e.to_json(),
    )
}

async fn health(State(state): State<AppState>) -> Response {
    let status = if state.engine().is_some() {
        "ready"
    } else {
        "starting"
    };
    json(
        StatusCode::OK,
        serde_json::json!({ "status": status }).to_string(),
    )
}

async fn models(State(state): State<AppState>) -> Response {
    match state.engine() {
        Some(e) => json(
            StatusCode::OK,
            serde_json::to_string(&e.models()).expect("models serialize"),
        ),
        None => error_response(ApiError::not_ready()),
    }
}

async fn recognize_handler(State(state): State<AppState>, body: Bytes) -> Response {
    let Some(engine) = state.engine() else {
        return error_response(ApiError::not_ready());
    };
    match parse_request(&body).and_then(|req| engine.recognize(&req)) {
        Ok(r) => json(StatusCode::OK, r.to_json()),
        Err(e) => error_response(e),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/recognize", post(recognize_handler))
        .route("/api/health", get(health))
        .route("/api/models", get(models))
        .with_state(state)
}

/// Serves until the process receives Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Binds `port`, starts answering immediately and loads the bundle in the
/// background; `/api/health` reports `starting` until the load completes.
pub fn run(bundle_dir: &Path, rules_path: &Path, port: u16) -> crate::Result<()> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| crate::Error::io(bundle_dir, e))?;
    rt.block_on(async {
        let addr = SocketAddr::from(([0, 0, 0, 0], port));
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| crate::Error::io(bundle_dir, e))?;
        log::info!(
            "listening on {}",
            listener
                .local_addr()
                .map_err(|e| crate::Error::io(bundle_dir, e))?
        );
        let state = AppState::new();
        let (bundle_dir, rules_path) = (bundle_dir.to_path_buf(), rules_path.to_path_buf());
        let loader = state.clone();
        let load = tokio::task::spawn_blocking(move || {
            Engine::load(&bundle_dir, &rules_path).map(|e| loader.install(e))
        });
        let server = tokio::spawn(serve(listener, state));
        load.await.expect("loader task")?;
        log::info!("models loaded");
        server
            .await
            .expect("server task")
            .map_err(|e| crate::Error::io(Path::new("<server>"), e))
    })
}
