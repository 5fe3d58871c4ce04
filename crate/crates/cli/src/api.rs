//! REST service over the shared engine.

use std::path::PathBuf;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;
use uibench_core::dataset::{is_valid_id, write_image_dataset};
use uibench_core::metrics::MetricName;
use uibench_core::report::{build_leaderboard, load_report};
use uibench_core::run::{artifact, Engine, RunPhase, RunRequest};

use crate::error::ApiError;

/// Artifact names that may be requested. `input.png` is the instance's
/// dataset screenshot; the rest live in the instance directory.
pub const ARTIFACT_NAMES: [&str; 6] = [
    artifact::GENERATED_HTML,
    artifact::GENERATED_PNG,
    artifact::REFERENCE_PNG,
    artifact::METRICS,
    artifact::CALL_LOG,
    INPUT_PNG,
];
pub const INPUT_PNG: &str = "input.png";

const UPLOAD_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub engine: Engine,
}

pub fn router(engine: Engine, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/runs", post(submit_run).get(list_runs))
        .route("/api/runs/{id}", get(run_status))
        .route("/api/runs/{id}/report", get(run_report))
        .route("/api/runs/{id}/instances/{iid}/artifacts/{name}", get(get_artifact))
        .route("/api/uploads", post(upload).layer(DefaultBodyLimit::max(UPLOAD_LIMIT)))
        .route("/api/leaderboard", get(leaderboard))
        .route("/api/methods", get(methods))
        .with_state(AppState { engine });
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn submit_run(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: RunRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new("ConfigError", format!("invalid run request: {e}")))?;
    let engine = st.engine.clone();
    let config = tokio::task::spawn_blocking(move || engine.create_run(req))
        .await
        .map_err(|e| ApiError::new("InternalError", e.to_string()))??;
    let run_id = config.run_id.clone();
    let engine = st.engine.clone();
    tokio::spawn(async move {
        if let Err(e) = engine.execute(&config.run_id).await {
            tracing::error!(run_id = %config.run_id, error = %e, "run stopped");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": run_id }))).into_response())
}

async fn list_runs(State(st): State<AppState>) -> Result<Json<Value>, ApiError> {
    Ok(Json(serde_json::to_value(st.engine.list_runs()?).unwrap()))
}

async fn run_status(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    Ok(Json(serde_json::to_value(st.engine.status(&id)?).unwrap()))
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn run_report(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
) -> Result<Response, ApiError> {
    let snap = st.engine.status(&id)?;
    if snap.state.phase != RunPhase::Completed {
        return Err(ApiError::new("RunNotTerminal", format!("run {id} is still in progress")));
    }
    let report = load_report(st.engine.store(), &id)?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(report).into_response()),
        Some("md") => Ok((
            [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
            report.to_markdown(),
        )
            .into_response()),
        Some(other) => Err(ApiError::new("ConfigError", format!("unknown format {other:?}"))),
    }
}

fn media_type(name: &str) -> &'static str {
    if name.ends_with(".png") {
        "image/png"
    } else if name.ends_with(".html") {
        "text/html; charset=utf-8"
    } else if name.ends_with(".jsonl") {
        "application/x-ndjson"
    } else {
        "application/json"
    }
}

async fn get_artifact(
    State(st): State<AppState>,
    Path((id, iid, name)): Path<(String, String, String)>,
) -> Result<Response, ApiError> {
    let Some(name) = ARTIFACT_NAMES.iter().copied().find(|n| *n == name) else {
        return Err(ApiError::new(
            "InvalidArtifactName",
            format!("artifact must be one of {}", ARTIFACT_NAMES.join(", ")),
        ));
    };
    let store = st.engine.store();
    let state = store.read_state(&id)?;
    if !is_valid_id(&iid) || !state.instances.contains_key(&iid) {
        return Err(ApiError::new("InstanceNotFound", format!("no instance {iid:?} in run {id}")));
    }
    let path = if name == INPUT_PNG {
        let cfg = store.read_config(&id)?;
        let manifest = store.read_manifest(&id)?;
        let entry = manifest
            .instances
            .iter()
            .find(|e| e.id == iid)
            .ok_or_else(|| ApiError::new("InstanceNotFound", iid.clone()))?;
        cfg.dataset_root.join(&entry.screenshot)
    } else {
        store.instance_dir(&id, &iid).join(name)
    };
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::new("ArtifactNotFound", format!("{name} not present for {iid}")))?;
    Ok(([(header::CONTENT_TYPE, media_type(name))], bytes).into_response())
}

async fn upload(State(st): State<AppState>, mut form: Multipart) -> Result<Response, ApiError> {
    let mut images = Vec::new();
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::new("UnreadableImage", e.to_string()))?
    {
        let name = field
            .file_name()
            .or(field.name())
            .unwrap_or("image")
            .to_string();
        let data = field
            .bytes()
            .await
            .map_err(|e| ApiError::new("UnreadableImage", e.to_string()))?;
        images.push((name, data.to_vec()));
    }
    if images.is_empty() {
        return Err(ApiError::new("UnreadableImage", "no image parts in upload"));
    }
    let token = ulid::Ulid::new().to_string();
    let dir = st.engine.store().uploads_dir().join(&token);
    let ids = tokio::task::spawn_blocking({
        let dir = dir.clone();
        move || write_image_dataset(&dir, &images)
    })
    .await
    .map_err(|e| ApiError::new("InternalError", e.to_string()))?
    .map_err(|e| ApiError::new(if e.code() == "UnreadableImage" { "UnreadableImage" } else { "InternalError" }, e.to_string()))?;
    let root = dir.canonicalize().unwrap_or(dir);
    Ok((
        StatusCode::CREATED,
        Json(json!({ "token": token, "dataset_root": root, "instances": ids })),
    )
        .into_response())
}

#[derive(Deserialize)]
struct LeaderboardQuery {
    /// Comma-separated run ids; all completed runs when absent.
    runs: Option<String>,
    sort: Option<String>,
}

async fn leaderboard(
    State(st): State<AppState>,
    Query(q): Query<LeaderboardQuery>,
) -> Result<Response, ApiError> {
    let sort = match q.sort.as_deref() {
        None => MetricName::VisualSimilarity,
        Some(s) => MetricName::parse(s)
            .ok_or_else(|| ApiError::new("ConfigError", format!("unknown metric {s:?}")))?,
    };
    let ids: Vec<String> = match q.runs {
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect(),
        None => st
            .engine
            .list_runs()?
            .into_iter()
            .filter(|r| r.phase == RunPhase::Completed)
            .map(|r| r.run_id)
            .collect(),
    };
    Ok(Json(build_leaderboard(st.engine.store(), &ids, sort)?).into_response())
}

async fn methods(State(st): State<AppState>) -> Json<Value> {
    let reg = st.engine.methods();
    let list: Vec<Value> = reg
        .names()
        .into_iter()
        .filter_map(|n| {
            let m = reg.get(n).ok()?;
            let defaults = m.resolve_params(&Default::default()).ok()?;
            Some(json!({ "name": n, "description": m.description(), "params": defaults }))
        })
        .collect();
    Json(Value::Array(list))
}
