//! Read-only HTTP service over a directory of built projects.
//!
//! Each subdirectory of the root that contains a `manifest.json` is a
//! project, addressed by the directory name. Manifests are loaded on first
//! use and reloaded when the file's mtime changes. The mtime is checked at
//! most once per reload interval.
//!
//! | Route | Response |
//! |---|---|
//! | `GET /api/projects` | `[{project_id, duration, segment_count}]` |
//! | `GET /api/projects/{id}/manifest?min_score=k` | filtered manifest |
//! | `GET /api/projects/{id}/segments?min_score=k` | filtered segment list |
//! | `GET /assets/{id}/{path}` | file under `<project>/assets/` |
//! | `GET /media/{id}/{path}` | file under `<project>/media/` (frames, video) |
//! | `GET /` | UI bundle when configured, otherwise a JSON index |
//!
//! JSON bodies are canonical (sorted keys), so repeated requests against
//! unchanged files return identical bytes. JSON responses carry an `ETag`
//! derived from the body and honor `If-None-Match`.

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime};

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::{ServeDir, ServeFile};
use tower_http::trace::TraceLayer;
use visaug_core::digest::sha256_hex;
use visaug_core::manifest::{to_canonical_string, MANIFEST_FILE};
use visaug_core::pipeline::validate_project_id;
use visaug_core::{filter_view, load_manifest, Manifest, ManifestError};

pub const DEFAULT_RELOAD_INTERVAL: Duration = Duration::from_secs(2);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub root: PathBuf,
    /// Built UI bundle served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Extra origins allowed by CORS; empty means same-origin only.
    pub cors_origins: Vec<String>,
    pub reload_interval: Duration,
}

impl ServiceConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            ui_dir: None,
            cors_origins: Vec::new(),
            reload_interval: DEFAULT_RELOAD_INTERVAL,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("project not found")]
    NotFound,
    #[error("manifest could not be loaded: {0}")]
    Invalid(#[from] ManifestError),
}

struct Entry {
    manifest: Arc<Manifest>,
    mtime: SystemTime,
    checked: Instant,
}

/// Loaded manifests keyed by project directory name.
pub struct ProjectStore {
    root: PathBuf,
    reload_interval: Duration,
    entries: Mutex<HashMap<String, Entry>>,
}

impl ProjectStore {
    pub fn new(root: impl Into<PathBuf>, reload_interval: Duration) -> Self {
        Self {
            root: root.into(),
            reload_interval,
            entries: Mutex::default(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn project_dir(&self, id: &str) -> Option<PathBuf> {
        validate_project_id(id).ok()?;
        Some(self.root.join(id))
    }

    pub fn get(&self, id: &str) -> Result<Arc<Manifest>, StoreError> {
        let dir = self.project_dir(id).ok_or(StoreError::NotFound)?;
        let path = dir.join(MANIFEST_FILE);
        let mut entries = self.entries.lock().expect("store lock");
        if let Some(e) = entries.get_mut(id) {
            if e.checked.elapsed() < self.reload_interval {
                return Ok(Arc::clone(&e.manifest));
            }
        }
        let Ok(mtime) = std::fs::metadata(&path).and_then(|m| m.modified()) else {
            entries.remove(id);
            return Err(StoreError::NotFound);
        };
        if let Some(e) = entries.get_mut(id) {
            if e.mtime == mtime {
                e.checked = Instant::now();
                return Ok(Arc::clone(&e.manifest));
            }
        }
        let manifest = Arc::new(load_manifest(&path)?);
        tracing::info!(project = id, "manifest loaded");
        entries.insert(
            id.to_string(),
            Entry {
                manifest: Arc::clone(&manifest),
                mtime,
                checked: Instant::now(),
            },
        );
        Ok(manifest)
    }

    /// Projects with a loadable manifest, sorted by id.
    pub fn list(&self) -> Vec<(String, Arc<Manifest>)> {
        let Ok(dir) = std::fs::read_dir(&self.root) else {
            return Vec::new();
        };
        let mut ids: Vec<String> = dir
            .filter_map(Result::ok)
            .filter(|e| e.path().join(MANIFEST_FILE).is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|id| validate_project_id(id).is_ok())
            .collect();
        ids.sort();
        ids.into_iter()
            .filter_map(|id| match self.get(&id) {
                Ok(m) => Some((id, m)),
                Err(e) => {
                    tracing::warn!(project = %id, error = %e, "skipping project");
                    None
                }
            })
            .collect()
    }
}

#[derive(Clone)]
struct AppState {
    store: Arc<ProjectStore>,
    has_ui: bool,
}

pub fn router(cfg: &ServiceConfig) -> Router {
    let state = AppState {
        store: Arc::new(ProjectStore::new(&cfg.root, cfg.reload_interval)),
        has_ui: cfg.ui_dir.is_some(),
    };
    let mut app = Router::new()
        .route("/api/projects", get(list_projects))
        .route("/api/projects/:id/manifest", get(project_manifest))
        .route("/api/projects/:id/segments", get(project_segments))
        .route("/api/*rest", get(api_not_found))
        .route("/assets/:id/*path", get(asset_file))
        .route("/media/:id/*path", get(media_file));
    app = match &cfg.ui_dir {
        Some(ui) => app.fallback_service(ServeDir::new(ui).fallback(ServeFile::new(ui.join("index.html")))),
        None => app.route("/", get(index)).fallback(not_found),
    };
    let mut app = app.with_state(state).layer(TraceLayer::new_for_http());
    if !cfg.cors_origins.is_empty() {
        let origins: Vec<HeaderValue> = cfg.cors_origins.iter().filter_map(|o| o.parse().ok()).collect();
        app = app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods([Method::GET, Method::HEAD]),
        );
    }
    app
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, cfg: &ServiceConfig) -> std::io::Result<()> {
    axum::serve(listener, router(cfg))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn error_response(status: StatusCode, message: &str, extra: Value) -> Response {
    let mut body = json!({"error": message, "status": status.as_u16()});
    if let (Value::Object(b), Value::Object(e)) = (&mut body, extra) {
        b.extend(e);
    }
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        to_canonical_string(&body),
    )
        .into_response()
}

fn json_response(req_headers: &HeaderMap, body: String) -> Response {
    let etag = format!("\"{}\"", &sha256_hex(&body)[..32]);
    let matches = req_headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == etag || t.trim() == "*"));
    if matches {
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, etag)]).into_response();
    }
    (
        StatusCode::OK,
        [
            (header::CONTENT_TYPE, "application/json".to_string()),
            (header::ETAG, etag),
            (header::CACHE_CONTROL, "no-cache".to_string()),
        ],
        body,
    )
        .into_response()
}

async fn with_store<T: Send + 'static>(
    store: &Arc<ProjectStore>,
    f: impl FnOnce(&ProjectStore) -> T + Send + 'static,
) -> T {
    let store = Arc::clone(store);
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .expect("store task panicked")
}

async fn list_projects(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let projects = with_store(&state.store, |s| s.list()).await;
    let list: Vec<Value> = projects
        .iter()
        .map(|(id, m)| {
            json!({
                "project_id": id,
                "duration": m.duration,
                "segment_count": m.segments.len(),
            })
        })
        .collect();
    json_response(&headers, to_canonical_string(&Value::Array(list)))
}

/// `min_score` must be an integer in 1..=10; absent means 1.
fn parse_min_score(params: &HashMap<String, String>) -> Result<u8, Box<Response>> {
    let Some(raw) = params.get("min_score") else {
        return Ok(1);
    };
    match raw.parse::<u8>() {
        Ok(k) if (1..=10).contains(&k) => Ok(k),
        _ => Err(Box::new(error_response(
            StatusCode::BAD_REQUEST,
            "min_score must be an integer from 1 to 10",
            json!({"min_score": raw}),
        ))),
    }
}

async fn load_view(state: &AppState, id: String, params: &HashMap<String, String>) -> Result<Manifest, Response> {
    let min_score = parse_min_score(params).map_err(|r| *r)?;
    let lookup_id = id.clone();
    match with_store(&state.store, move |s| s.get(&lookup_id)).await {
        Ok(m) => Ok(filter_view(&m, min_score)),
        Err(StoreError::NotFound) => Err(error_response(
            StatusCode::NOT_FOUND,
            "project not found",
            json!({"project_id": id}),
        )),
        Err(e @ StoreError::Invalid(_)) => {
            tracing::error!(project = %id, error = %e, "bad manifest");
            Err(error_response(
                StatusCode::INTERNAL_SERVER_ERROR,
                &e.to_string(),
                json!({"project_id": id}),
            ))
        }
    }
}

async fn project_manifest(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(params): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    match load_view(&state, id, &params).await {
        Ok(view) => json_response(&headers, view.to_canonical_json(true)),
        Err(resp) => resp,
    }
}

async fn project_segments(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(params): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    match load_view(&state, id, &params).await {
        Ok(view) => {
            let value = serde_json::to_value(&view.segments).expect("segments serialize");
            json_response(&headers, to_canonical_string(&value))
        }
        Err(resp) => resp,
    }
}

async fn asset_file(
    State(state): State<AppState>,
    UrlPath((id, path)): UrlPath<(String, String)>,
    req: Request,
) -> Response {
    project_file(&state, &id, "assets", &path, req).await
}

async fn media_file(
    State(state): State<AppState>,
    UrlPath((id, path)): UrlPath<(String, String)>,
    req: Request,
) -> Response {
    project_file(&state, &id, "media", &path, req).await
}

/// Relative path made only of normal components.
fn safe_relative(path: &str) -> Option<PathBuf> {
    let p = Path::new(path);
    let ok = !path.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_)));
    ok.then(|| p.to_path_buf())
}

async fn project_file(state: &AppState, id: &str, area: &str, path: &str, req: Request) -> Response {
    let full = state
        .store
        .project_dir(id)
        .zip(safe_relative(path))
        .map(|(dir, rel)| dir.join(area).join(rel));
    let Some(full) = full.filter(|p| p.is_file()) else {
        return error_response(
            StatusCode::NOT_FOUND,
            "file not found",
            json!({"project_id": id, "path": format!("{area}/{path}")}),
        );
    };
    match ServeFile::new(full).oneshot(req).await {
        Ok(resp) => resp.map(Body::new),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string(), json!({})),
    }
}

async fn index(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let body = json!({
        "service": "visaug",
        "ui": state.has_ui,
        "endpoints": [
            "/api/projects",
            "/api/projects/{id}/manifest?min_score=k",
            "/api/projects/{id}/segments?min_score=k",
            "/assets/{id}/{path}",
            "/media/{id}/{path}",
        ],
    });
    json_response(&headers, to_canonical_string(&body))
}

async fn api_not_found(req: Request) -> Response {
    not_found(req).await
}

async fn not_found(req: Request) -> Response {
    error_response(
        StatusCode::NOT_FOUND,
        "no such endpoint",
        json!({"path": req.uri().path()}),
    )
}
