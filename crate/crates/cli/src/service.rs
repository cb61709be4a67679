//! Minimal JSON-over-HTTP routing service.
//!
//! Two endpoints against an immutable loaded checkpoint:
//!
//! - `GET /health` — status, pool size, model ids, and a pool fingerprint.
//! - `POST /route` — body `{"text": "..."}` or `{"embedding": [...]}`,
//!   answering `{"model_id", "probs", "expected_unit_cost"}`.
//!
//! Requests never mutate state, so identical bodies always produce
//! identical decisions.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use costroute_core::cost::ModelPool;
use costroute_core::embed::EmbeddingProvider;
use costroute_core::router::{forward_infer, RouterError, RouterParams};
use serde::{Deserialize, Serialize};

pub struct AppState {
    pub params: RouterParams,
    pub pool: ModelPool,
    pub fingerprint: String,
    /// Present when the service can embed raw text itself.
    pub embedder: Option<Box<dyn EmbeddingProvider>>,
}

pub fn app(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/route", post(route))
        .with_state(state)
}

#[derive(Debug, Serialize)]
struct HealthResponse {
    status: &'static str,
    pool_size: usize,
    model_ids: Vec<String>,
    pool_fingerprint: String,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok",
        pool_size: state.pool.len(),
        model_ids: state
            .pool
            .model_ids()
            .iter()
            .map(|s| s.to_string())
            .collect(),
        pool_fingerprint: state.fingerprint.clone(),
    })
}

#[derive(Debug, Deserialize)]
struct RouteRequest {
    text: Option<String>,
    embedding: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct RouteResponse {
    model_id: String,
    probs: Vec<f64>,
    expected_unit_cost: f64,
}

struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body {
            error: String,
        }
        (
            self.status,
            Json(Body {
                error: self.message,
            }),
        )
            .into_response()
    }
}

async fn route(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<RouteRequest>, JsonRejection>,
) -> Result<Json<RouteResponse>, ApiError> {
    let Json(request) =
        payload.map_err(|rejection| ApiError::bad_request(rejection.body_text()))?;

    let embedding = match (request.text, request.embedding) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(ApiError::bad_request(
                "provide exactly one of `text` or `embedding`",
            ));
        }
        (None, Some(embedding)) => embedding,
        (Some(text), None) => match &state.embedder {
            None => {
                return Err(ApiError::bad_request(
                    "this service has no embedding provider; send `embedding` instead of `text`",
                ));
            }
            Some(provider) => provider
                .embed(&text)
                .map_err(|e| ApiError::bad_request(e.to_string()))?,
        },
    };

    let decision = forward_infer(&state.params, &embedding, &state.pool).map_err(|e| match e {
        RouterError::DimensionMismatch { .. } => ApiError::unprocessable(e.to_string()),
        other => ApiError::bad_request(other.to_string()),
    })?;
    let model_id = state
        .pool
        .get(decision.chosen)
        .expect("chosen index is in range")
        .model_id
        .clone();
    Ok(Json(RouteResponse {
        model_id,
        probs: decision.probs,
        expected_unit_cost: decision.expected_unit_cost,
    }))
}
