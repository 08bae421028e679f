#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use std::sync::Arc;
use tower::ServiceExt;
use wtraj_core::metrics::EvaluationOptions;
use wtraj_core::synth::{generate_cohort, GeneratorSpec};
use wtraj_core::trajectory::{train_trajectory_model, ProfileFeature, TrainOptions, TrajectoryModel};
use wtraj_service::{router, LoadedModel, ModelStore};

/// Deterministic model on a synthetic cohort.
pub fn model(seed: u64) -> TrajectoryModel {
    let cohort = generate_cohort(&GeneratorSpec { n: 2000, seed, ..Default::default() }).unwrap();
    let opts = TrainOptions { seed, evaluation: EvaluationOptions { bootstrap: 0, ..Default::default() }, ..Default::default() };
    train_trajectory_model(&cohort, &ProfileFeature::ALL, &opts).unwrap().model
}

pub fn store(seed: u64) -> Arc<ModelStore> {
    Arc::new(ModelStore::new(LoadedModel::from_model(model(seed)).unwrap()))
}

pub fn app(seed: u64) -> Router {
    router(store(seed), &[]).unwrap()
}

pub fn figure_profile() -> Value {
    json!({"age_years": 30, "weight_kg": 150, "height_m": 1.8, "smoker": false,
           "diabetes_status": "none", "diabetes_duration_years": 0, "operation": "RYGB"})
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

pub fn post(body: &Value) -> Request<Body> {
    Request::post("/api/v1/predict")
        .header("content-type", "application/json")
        .body(Body::from(serde_json::to_vec(body).unwrap()))
        .unwrap()
}

pub fn get(path: &str) -> Request<Body> {
    Request::get(path).body(Body::empty()).unwrap()
}

/// Compares `actual` with the golden file `name`; `UPDATE_GOLDEN=1` rewrites it.
pub fn golden(name: &str, actual: &Value) {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(actual).unwrap() + "\n").unwrap();
    }
    let expected: Value = serde_json::from_str(
        &std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {name}; run with UPDATE_GOLDEN=1")),
    )
    .unwrap();
    assert_eq!(&expected, actual, "response differs from golden {name}");
}
