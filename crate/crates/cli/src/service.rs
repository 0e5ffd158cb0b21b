//! HTTP moderation service.
//!
//! `GET /health` reports readiness and model ids. `POST /moderate` takes
//! `{"posts": [...]}` and answers with one prediction per post, in order.

use std::sync::{Arc, RwLock};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{error, info};
use serde::Deserialize;
use serde_json::json;
use toxcl_core::inference::Moderator;
use toxcl_core::Error;

use crate::commands::load_pipeline;
use crate::config::PipelineConfig;
use crate::CliError;

pub struct AppState {
    model: RwLock<Option<Arc<dyn Moderator>>>,
    max_batch: usize,
}

impl AppState {
    pub fn new(max_batch: usize) -> Arc<Self> {
        Arc::new(Self {
            model: RwLock::new(None),
            max_batch,
        })
    }

    /// Makes `model` live; requests before this get 503.
    pub fn install(&self, model: Arc<dyn Moderator>) {
        *self.model.write().unwrap_or_else(|e| e.into_inner()) = Some(model);
    }

    fn model(&self) -> Option<Arc<dyn Moderator>> {
        self.model.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

#[derive(Deserialize)]
struct ModerateRequest {
    posts: Vec<String>,
}

fn fail(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    match state.model() {
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "loading" }))).into_response(),
        Some(m) => Json(json!({ "status": "ok", "models": m.model_ids() })).into_response(),
    }
}

async fn moderate(State(state): State<Arc<AppState>>, Json(req): Json<ModerateRequest>) -> Response {
    let Some(model) = state.model() else {
        return fail(StatusCode::SERVICE_UNAVAILABLE, "models are still loading");
    };
    if req.posts.is_empty() {
        return fail(StatusCode::BAD_REQUEST, "posts must not be empty");
    }
    if req.posts.len() > state.max_batch {
        return fail(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("{} posts exceed the batch limit of {}", req.posts.len(), state.max_batch),
        );
    }
    if let Some(i) = req.posts.iter().position(|p| p.trim().is_empty()) {
        return fail(StatusCode::BAD_REQUEST, format!("post {i} is empty"));
    }
    match tokio::task::spawn_blocking(move || model.moderate(&req.posts)).await {
        Ok(Ok(preds)) => Json(preds).into_response(),
        Ok(Err(Error::Item { index, source })) if is_input_error(&source) => {
            fail(StatusCode::BAD_REQUEST, format!("post {index}: {source}"))
        }
        Ok(Err(e)) => {
            error!("moderation failed: {e}");
            fail(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
        }
        Err(e) => fail(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

fn is_input_error(e: &Error) -> bool {
    matches!(e, Error::EmptyPost | Error::EmptyAfterTokenization)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/moderate", post(moderate))
        .with_state(state)
}

/// Binds the configured address, loads the latest bundles in the background
/// and serves until the process is stopped.
pub async fn serve(config: PipelineConfig) -> Result<(), CliError> {
    let state = AppState::new(config.service.max_batch);
    let addr = format!("{}:{}", config.service.host, config.service.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| Error::io(&addr, e))?;
    info!("listening on {addr}");

    let loader = state.clone();
    let loading = async move {
        let pipeline = tokio::task::spawn_blocking(move || load_pipeline(&config))
            .await
            .map_err(|e| CliError::Config(format!("model loader panicked: {e}")))??;
        info!("models loaded: {:?}", pipeline.model_ids());
        loader.install(Arc::new(pipeline));
        std::future::pending::<Result<(), CliError>>().await
    };
    let serving = axum::serve(listener, router(state));
    tokio::select! {
        r = serving => r.map_err(|e| Error::io(&addr, e).into()),
        r = loading => r,
    }
}
