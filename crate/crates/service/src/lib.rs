//! HTTP service for trajectory model artifacts.
//!
//! `POST /api/v1/predict` predicts one or two patient profiles in the
//! requested unit, `GET /api/v1/meta` describes the loaded model and
//! `GET /healthz` answers `ok`. See `docs/api.md` for the schema.

pub mod api;
pub mod http;
pub mod state;

pub use api::{
    handle_meta, handle_predict, handle_predict_bytes, parse_predict_request, ApiError, ApiFieldError, ErrorBody,
    MetaResponse, ModelSummary, PredictRequest, PredictResponse, ScenarioPrediction, MAX_SCENARIOS,
};
pub use http::{router, serve, ServiceConfig, ServiceError};
pub use state::{watch_artifact, LoadedModel, ModelStore};
