use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use super::png::{depth_png, feature_png, label_png};
use super::{Action, ServiceHandle};
use crate::error::Error;
use crate::renderer::{render_view, Field, Pose, ViewImage, ViewMode};

type AppState = Arc<ServiceHandle>;

/// Error body `{ "error": ... }` with a status derived from the error kind.
struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Capacity(_) | Error::State(_) => StatusCode::CONFLICT,
            Error::Lookup(_) => StatusCode::NOT_FOUND,
            Error::Input(_) | Error::Dimension(_) | Error::Config(_) | Error::Json(_) | Error::Format { .. } => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

pub fn router(handle: Arc<ServiceHandle>) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/state", get(get_state))
        .route("/control", post(post_control))
        .route("/clicks", post(post_click))
        .route("/render", get(get_render))
        .route("/keyframes", get(get_keyframes))
        .route("/metrics", get(get_metrics))
        .layer(cors)
        .with_state(handle)
}

async fn get_state(State(h): State<AppState>) -> impl IntoResponse {
    Json(h.state())
}

#[derive(Deserialize)]
struct ControlBody {
    action: Action,
}

async fn post_control(State(h): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let b: ControlBody = serde_json::from_slice(&body).map_err(|e| bad_request(format!("bad control body: {e}")))?;
    Ok(Json(h.control(b.action).await?))
}

#[derive(Deserialize)]
struct ClickBody {
    keyframe_id: u32,
    u: u32,
    v: u32,
    #[serde(default)]
    name: String,
}

async fn post_click(State(h): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let b: ClickBody = serde_json::from_slice(&body).map_err(|e| bad_request(format!("bad click body: {e}")))?;
    let class_id = h.click(b.keyframe_id, b.u, b.v, b.name).await?;
    Ok(Json(json!({ "class_id": class_id })))
}

async fn get_keyframes(State(h): State<AppState>) -> impl IntoResponse {
    let kfs: Vec<_> = h
        .snapshot()
        .map(|s| {
            s.keyframes
                .iter()
                .map(|(id, p)| json!({ "frame_id": id, "pose": p.to_matrix() }))
                .collect()
        })
        .unwrap_or_default();
    Json(kfs)
}

async fn get_metrics(State(h): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    let n = match q.get("n") {
        Some(s) => s.parse().map_err(|_| bad_request(format!("bad n {s:?}")))?,
        None => 100,
    };
    let mut body = h.metrics_tail(n).join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

fn parse_pose(s: &str) -> Result<Pose, ApiError> {
    let vals: Vec<f64> = s
        .split([',', ' '])
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| bad_request(format!("bad pose: {e}")))?;
    if vals.len() != 16 {
        return Err(bad_request(format!("pose needs 16 values, got {}", vals.len())));
    }
    Pose::from_matrix(&vals).map_err(|e| bad_request(format!("bad pose: {e}")))
}

async fn get_render(State(h): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    let mode = q.get("mode").map_or("depth", String::as_str).to_string();
    let stride: usize = match q.get("stride") {
        Some(s) => s.parse().ok().filter(|&v| v >= 1).ok_or_else(|| bad_request(format!("bad stride {s:?}")))?,
        None => 1,
    };
    let explicit_pose = q.get("pose").map(|s| parse_pose(s)).transpose()?;
    let Some(snap) = h.snapshot() else {
        return Err(ApiError(StatusCode::SERVICE_UNAVAILABLE, "no snapshot yet".into()));
    };
    let pose = match explicit_pose {
        Some(p) => p,
        None => match snap.keyframes.last() {
            Some(k) => k.1,
            None => return Err(ApiError(StatusCode::SERVICE_UNAVAILABLE, "no keyframe yet".into())),
        },
    };
    let view_mode = match mode.as_str() {
        "depth" => ViewMode::Depth,
        "semantic" => ViewMode::SemanticArgmax { n_active: snap.n_active },
        "feature" => ViewMode::FeatureLatent,
        other => return Err(bad_request(format!("unknown mode {other:?}; expected depth, semantic or feature"))),
    };
    let png = tokio::task::spawn_blocking(move || -> Result<Vec<u8>, Error> {
        let field = Field::new(snap.params.view(), &snap.basis, snap.bounds)?;
        let img = render_view(&field, &snap.cam, &pose, view_mode, stride, snap.n_bins)?;
        match img {
            ViewImage::Labels(r) => label_png(r.width, r.height, &r.data),
            ViewImage::Values(r) if r.channels == 1 => depth_png(r.width, r.height, &r.data),
            ViewImage::Values(r) => feature_png(r.width, r.height, r.channels, &r.data),
        }
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}
