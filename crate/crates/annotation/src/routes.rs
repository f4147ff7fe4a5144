use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use affmt_core::dataset::{parse_annotations, serialize_annotations};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use crate::store::{Store, StoreError};

#[derive(Debug, Clone)]
struct AppState {
    store: Arc<Store>,
    ui_dir: Option<PathBuf>,
}

impl IntoResponse for StoreError {
    fn into_response(self) -> Response {
        let status = match &self {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Range { .. } | StoreError::Validation(_) => StatusCode::BAD_REQUEST,
            StoreError::Conflict { .. } => StatusCode::CONFLICT,
            StoreError::MissingRoot(_) | StoreError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = json!({ "error": self.to_string() });
        if let StoreError::Conflict { current, .. } = self {
            body["current_version"] = json!(current);
        }
        (status, Json(body)).into_response()
    }
}

type Reply = Result<Response, StoreError>;

/// Routes over `store`. Static files under `ui_dir`, when given, are served
/// at `/ui`.
pub fn router(store: Arc<Store>, ui_dir: Option<PathBuf>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/videos", get(videos))
        .route("/videos/{id}/frames/{n}", get(frame))
        .route("/videos/{id}/consolidate", post(consolidate))
        .route("/annotations/{video}/{annotator}", get(get_annotations).put(put_annotations))
        .route("/annotations/{video}/{annotator}/track", get(track))
        .route("/ui", get(ui_index))
        .route("/ui/{*path}", get(ui_file))
        .with_state(AppState { store, ui_dir })
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": crate::VERSION }))
}

async fn videos(State(s): State<AppState>) -> Reply {
    Ok(Json(s.store.list_videos()?).into_response())
}

async fn frame(State(s): State<AppState>, UrlPath((id, n)): UrlPath<(String, String)>) -> Reply {
    let n: u32 = n.parse().map_err(|_| StoreError::Validation(format!("bad frame index {n:?}")))?;
    let png = s.store.frame(&id, n)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

fn version_header(v: u64) -> (header::HeaderName, HeaderValue) {
    (header::HeaderName::from_static("x-version"), HeaderValue::from(v))
}

async fn get_annotations(State(s): State<AppState>, UrlPath((video, annotator)): UrlPath<(String, String)>) -> Reply {
    let (records, version) = s.store.annotations(&video, &annotator)?;
    Ok((
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/x-ndjson")), version_header(version)],
        serialize_annotations(&records),
    )
        .into_response())
}

async fn put_annotations(
    State(s): State<AppState>,
    UrlPath((video, annotator)): UrlPath<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> Reply {
    let expected = headers
        .get("x-expected-version")
        .ok_or_else(|| StoreError::Validation("missing X-Expected-Version header".into()))?
        .to_str()
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .ok_or_else(|| StoreError::Validation("X-Expected-Version must be a non-negative integer".into()))?;
    let records = parse_annotations(&body)?;
    let version = s.store.put_annotations(&video, &annotator, &records, expected)?;
    Ok(([version_header(version)], Json(json!({ "version": version }))).into_response())
}

async fn track(State(s): State<AppState>, UrlPath((video, annotator)): UrlPath<(String, String)>) -> Reply {
    Ok(Json(s.store.replay(&video, &annotator)?).into_response())
}

async fn consolidate(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Reply {
    let (_, csv) = s.store.run_consolidation(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}

async fn ui_index(State(s): State<AppState>) -> Reply {
    serve_ui(&s, "index.html")
}

async fn ui_file(State(s): State<AppState>, UrlPath(path): UrlPath<String>) -> Reply {
    serve_ui(&s, if path.is_empty() { "index.html" } else { &path })
}

fn serve_ui(s: &AppState, rel: &str) -> Reply {
    let Some(dir) = &s.ui_dir else {
        return Err(StoreError::NotFound("no UI bundle configured".into()));
    };
    let rel = Path::new(rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(StoreError::NotFound(rel.display().to_string()));
    }
    let bytes = std::fs::read(dir.join(rel)).map_err(|_| StoreError::NotFound(rel.display().to_string()))?;
    let mime = match rel.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("png") => "image/png",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}
