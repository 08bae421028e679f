//! Routes, error responses and the server loop.

use crate::api::{handle_meta, handle_predict_bytes, ApiError};
use crate::state::{watch_artifact, LoadedModel, ModelStore};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;
use tower_http::catch_panic::CatchPanicLayer;
use tower_http::cors::{AllowOrigin, CorsLayer};
use wtraj_core::trajectory::ArtifactError;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot load model: {0}")]
    Model(#[from] ArtifactError),
    #[error("invalid CORS origin `{0}`")]
    Origin(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub model_path: PathBuf,
    pub bind: SocketAddr,
    /// Origins allowed to call the API from a browser.
    pub cors_origins: Vec<String>,
    /// Artifact polling period; `None` disables hot reload.
    pub reload_interval: Option<Duration>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

async fn predict(State(store): State<Arc<ModelStore>>, body: Bytes) -> Response {
    let model = store.current();
    match handle_predict_bytes(&model, &body) {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn meta(State(store): State<Arc<ModelStore>>) -> Response {
    Json(handle_meta(&store.current())).into_response()
}

async fn healthz() -> &'static str {
    "ok"
}

async fn not_found() -> Response {
    ApiError::NotFound.into_response()
}

fn panic_response(_: Box<dyn std::any::Any + Send + 'static>) -> Response {
    ApiError::Internal.into_response()
}

/// The API routes with CORS for `cors_origins` (none when empty).
pub fn router(store: Arc<ModelStore>, cors_origins: &[String]) -> Result<Router, ServiceError> {
    let origins = cors_origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|_| ServiceError::Origin(o.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut app = Router::new()
        .route("/api/v1/predict", post(predict))
        .route("/api/v1/meta", get(meta))
        .route("/healthz", get(healthz))
        .fallback(not_found)
        .with_state(store)
        .layer(CatchPanicLayer::custom(panic_response));
    if !origins.is_empty() {
        app = app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([header::CONTENT_TYPE]),
        );
    }
    Ok(app)
}

/// Loads the artifact, binds and serves until `shutdown` resolves.
pub async fn serve(config: ServiceConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServiceError> {
    let model = LoadedModel::from_path(&config.model_path)?;
    tracing::info!(path = %config.model_path.display(), sha256 = %model.artifact_sha256, "model loaded");
    let store = Arc::new(ModelStore::new(model));
    let app = router(store.clone(), &config.cors_origins)?;
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|source| ServiceError::Bind { addr: config.bind, source })?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let watcher = config
        .reload_interval
        .map(|every| tokio::spawn(watch_artifact(store, config.model_path.clone(), every)));
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    if let Some(w) = watcher {
        w.abort();
    }
    Ok(result?)
}
