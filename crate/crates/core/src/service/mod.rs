//! HTTP review service: serves image pairs to raters and appends their
//! scores to the evaluation CSV.
//!
//! | Method | Path | |
//! |---|---|---|
//! | GET | `/api/manifest?rater_id=` | pairs, shuffled per rater when `rater_id` is given |
//! | GET | `/api/image/{id}/{original\|stylized}` | PNG bytes |
//! | POST | `/api/score` | one score; 422 names the bad field, 409 on a repeat |
//! | GET | `/api/progress/{rater_id}` | image ids already scored |

mod manifest;
mod store;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use manifest::{ManifestPair, ReviewManifest};
pub use store::ScoreStore;

use crate::error::{Error, Result};
use crate::evaluation::{truncate_to_millis, validate_id, ScoreRecord, MAX_SCORE};
use crate::image::{decode_image, encode_png, ColorMode};

pub struct ServiceState {
    pub manifest: ReviewManifest,
    pub store: ScoreStore,
}

pub type SharedState = Arc<ServiceState>;

#[derive(Debug)]
enum ApiError {
    NotFound(String),
    Unprocessable { field: String, message: String },
    Conflict(String),
    BadRequest(String),
    Internal(String),
}

impl ApiError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        ApiError::Unprocessable {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({ "error": m })),
            ApiError::Unprocessable { field, message } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": message, "field": field }),
            ),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, json!({ "error": m })),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({ "error": m })),
            ApiError::Internal(m) => {
                log::error!("{m}");
                (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": m }))
            }
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct ManifestQuery {
    rater_id: Option<String>,
}

#[derive(Debug, Serialize)]
struct PairView {
    image_id: String,
    color_mode: ColorMode,
    original_url: String,
    stylized_url: String,
}

async fn get_manifest(
    State(state): State<SharedState>,
    Query(q): Query<ManifestQuery>,
) -> Json<Value> {
    let m = &state.manifest;
    let (order, seed): (Vec<usize>, Option<u64>) = match &q.rater_id {
        Some(rater) => {
            let seed = m.rater_seed(rater);
            log::info!("presentation order for rater {rater:?} uses seed {seed}");
            (m.order_for(rater), Some(seed))
        }
        None => ((0..m.pairs.len()).collect(), None),
    };
    let pairs: Vec<PairView> = order
        .into_iter()
        .map(|i| {
            let p = &m.pairs[i];
            PairView {
                image_id: p.image_id.clone(),
                color_mode: p.color_mode,
                original_url: format!("/api/image/{}/original", p.image_id),
                stylized_url: format!("/api/image/{}/stylized", p.image_id),
            }
        })
        .collect();
    Json(json!({ "pairs": pairs, "order_seed": seed }))
}

async fn get_image(
    State(state): State<SharedState>,
    UrlPath((id, role)): UrlPath<(String, String)>,
) -> Result<Response, ApiError> {
    let pair = state
        .manifest
        .pair(&id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown image id {id:?}")))?;
    let path = match role.as_str() {
        "original" => pair.original.clone(),
        "stylized" => pair.stylized.clone(),
        _ => return Err(ApiError::NotFound(format!("unknown image role {role:?}"))),
    };
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?;
    let png = if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        bytes
    } else {
        tokio::task::spawn_blocking(move || decode_image(&bytes).and_then(|img| encode_png(&img)))
            .await
            .map_err(|e| ApiError::Internal(e.to_string()))?
            .map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?
    };
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

fn id_field(body: &Value, field: &str) -> Result<String, ApiError> {
    let value = body
        .get(field)
        .ok_or_else(|| ApiError::field(field, format!("{field} is required")))?;
    let s = value
        .as_str()
        .ok_or_else(|| ApiError::field(field, format!("{field} must be a string")))?;
    validate_id(0, field, s).map_err(|_| {
        ApiError::field(field, format!("{field} must be 1-256 printable characters"))
    })?;
    Ok(s.to_string())
}

fn score_field(body: &Value, field: &str) -> Result<u8, ApiError> {
    let value = body
        .get(field)
        .ok_or_else(|| ApiError::field(field, format!("{field} is required")))?;
    match value.as_u64() {
        Some(v) if v <= MAX_SCORE as u64 => Ok(v as u8),
        _ => Err(ApiError::field(
            field,
            format!("{field} must be an integer from 0 to {MAX_SCORE}, got {value}"),
        )),
    }
}

async fn post_score(
    State(state): State<SharedState>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let body: Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::BadRequest(format!("body is not JSON: {e}")))?;
    if !body.is_object() {
        return Err(ApiError::BadRequest("body must be a JSON object".into()));
    }
    let rater_id = id_field(&body, "rater_id")?;
    let image_id = id_field(&body, "image_id")?;
    let removed_artifacts = score_field(&body, "removed_artifacts")?;
    let added_structures = score_field(&body, "added_structures")?;
    let pair = state
        .manifest
        .pair(&image_id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown image id {image_id:?}")))?;
    if let Some(mode) = body.get("color_mode") {
        let named = mode.as_str().and_then(|s| s.parse::<ColorMode>().ok());
        if named != Some(pair.color_mode) {
            return Err(ApiError::field(
                "color_mode",
                format!("image {image_id:?} is shown as {}", pair.color_mode),
            ));
        }
    }
    let record = ScoreRecord {
        rater_id,
        image_id,
        color_mode: pair.color_mode,
        removed_artifacts,
        added_structures,
        timestamp: truncate_to_millis(Utc::now()),
    };
    let st = state.clone();
    let stored = record.clone();
    tokio::task::spawn_blocking(move || st.store.append(&stored))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| match e {
            Error::Duplicate {
                rater_id, image_id, ..
            } => ApiError::Conflict(format!(
                "rater {rater_id:?} already scored image {image_id:?}"
            )),
            Error::Validation { field, value, .. } => {
                ApiError::field(&field, format!("invalid value {value:?}"))
            }
            other => ApiError::Internal(other.to_string()),
        })?;
    Ok(Json(
        serde_json::to_value(&record).expect("records serialize"),
    ))
}

async fn get_progress(
    State(state): State<SharedState>,
    UrlPath(rater_id): UrlPath<String>,
) -> Json<Value> {
    let scored = state.store.progress(&rater_id);
    let remaining = state.manifest.pairs.len().saturating_sub(scored.len());
    Json(json!({ "rater_id": rater_id, "scored": scored, "remaining": remaining }))
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/api/manifest", get(get_manifest))
        .route("/api/image/{id}/{role}", get(get_image))
        .route("/api/score", post(post_score))
        .route("/api/progress/{rater_id}", get(get_progress))
        .with_state(state)
}

/// Opens the scores file and builds the shared state.
pub fn open_state(manifest: ReviewManifest, scores_path: impl AsRef<Path>) -> Result<SharedState> {
    manifest.validate()?;
    let store = ScoreStore::open(scores_path)?;
    Ok(Arc::new(ServiceState { manifest, store }))
}

/// Serves on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: SharedState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Blocking entry point: binds `0.0.0.0:port` and serves until Ctrl-C.
pub fn run_review_server(
    manifest_path: impl AsRef<Path>,
    scores_path: impl AsRef<Path>,
    port: u16,
) -> Result<()> {
    let manifest = ReviewManifest::load(manifest_path)?;
    let state = open_state(manifest, &scores_path)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener =
            tokio::net::TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await?;
        log::info!(
            "review service on {} ({} pairs, {} scores in {})",
            listener.local_addr()?,
            state.manifest.pairs.len(),
            state.store.len(),
            state.store.path().display()
        );
        serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })
}
