//! JSON API and static hosting of the examiner UI bundle.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State as AxState};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use graphodex_core::patching::Gender;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::{BaselineError, NewExaminer, Store};

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl BaselineError {
    pub fn status(&self) -> (StatusCode, &'static str) {
        match self {
            BaselineError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            BaselineError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            BaselineError::State(_) => (StatusCode::CONFLICT, "session_incomplete"),
            BaselineError::Capacity(_) => (StatusCode::SERVICE_UNAVAILABLE, "capacity"),
            BaselineError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            BaselineError::Empty => (StatusCode::NOT_FOUND, "no_complete_sessions"),
            BaselineError::Corrupt(_) | BaselineError::Io(_) | BaselineError::Imaging(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        }
    }
}

impl IntoResponse for BaselineError {
    fn into_response(self) -> Response {
        let (status, code) = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        let body = ErrorBody {
            error: code.to_string(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GuessRequest {
    pub index: usize,
    pub guess: Gender,
}

type Shared = Arc<Store>;

/// Runs a store call off the async workers; log appends fsync.
async fn blocking<T: Send + 'static>(
    store: Shared,
    f: impl FnOnce(&Store) -> crate::Result<T> + Send + 'static,
) -> Result<T, BaselineError> {
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| BaselineError::Io(std::io::Error::other(e)))?
}

async fn create_session(AxState(store): AxState<Shared>, Json(intake): Json<NewExaminer>) -> Response {
    match blocking(store, move |s| s.create_session(intake)).await {
        Ok(view) => (StatusCode::CREATED, Json(view)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_session(AxState(store): AxState<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    match store.session(&id) {
        Ok(view) => Json(view).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_sample(AxState(store): AxState<Shared>, UrlPath((id, index)): UrlPath<(String, usize)>) -> Response {
    match blocking(store, move |s| s.sample_png(&id, index)).await {
        Ok(png) => ([(header::CONTENT_TYPE, "image/png")], png.as_ref().clone()).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn post_guess(
    AxState(store): AxState<Shared>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<GuessRequest>,
) -> Response {
    match blocking(store, move |s| s.submit_guess(&id, req.index, req.guess)).await {
        Ok(progress) => Json(progress).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_results(AxState(store): AxState<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    match store.session_results(&id) {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_stats(AxState(store): AxState<Shared>) -> Response {
    match store.aggregate_stats() {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

pub fn router(store: Arc<Store>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/samples/{index}", get(get_sample))
        .route("/api/sessions/{id}/guesses", post(post_guess))
        .route("/api/sessions/{id}/results", get(get_results))
        .route("/api/stats", get(get_stats))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, store: Arc<Store>, ui_dir: Option<&Path>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
