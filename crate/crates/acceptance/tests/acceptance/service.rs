use crate::Verdict;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use std::sync::Arc;
use tower::ServiceExt;
use wtraj_core::metrics::EvaluationOptions;
use wtraj_core::synth::{generate_cohort, GeneratorSpec};
use wtraj_core::trajectory::{train_trajectory_model, ProfileFeature, TrainOptions};
use wtraj_service::{router, LoadedModel, ModelStore};

const CONCURRENT: usize = 1000;

/// Same recipe as the service's golden tests.
fn app() -> Router {
    let cohort = generate_cohort(&GeneratorSpec { n: 2000, seed: 7, ..Default::default() }).unwrap();
    let opts = TrainOptions { seed: 7, evaluation: EvaluationOptions { bootstrap: 0, ..Default::default() }, ..Default::default() };
    let model = train_trajectory_model(&cohort, &ProfileFeature::ALL, &opts).unwrap().model;
    router(Arc::new(ModelStore::new(LoadedModel::from_model(model).unwrap())), &[]).unwrap()
}

fn figure_profile() -> Value {
    json!({"age_years": 30, "weight_kg": 150, "height_m": 1.8, "smoker": false,
           "diabetes_status": "none", "diabetes_duration_years": 0, "operation": "RYGB"})
}

fn post(body: impl Into<Body>) -> Request<Body> {
    Request::post("/api/v1/predict").header("content-type", "application/json").body(body.into()).unwrap()
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn first_point(v: &Value) -> [f64; 4] {
    let p = &v["scenarios"][0]["points"][0];
    ["month", "value", "lo", "hi"].map(|k| p[k].as_f64().unwrap_or(f64::NAN))
}

async fn golden(v: &mut Verdict, app: &Router) {
    let (status, kg) = send(app, post(json!({"units": "kg", "scenarios": [figure_profile()]}).to_string())).await;
    v.check(status == StatusCode::OK, || format!("figure profile: status {status}"));
    v.check(first_point(&kg) == [0.0, 150.0, 150.0, 150.0], || format!("kg anchor {:?}", first_point(&kg)));
    let baseline = kg["scenarios"][0]["baseline_bmi"].as_f64().unwrap_or(f64::NAN);
    v.check(format!("{baseline:.2}") == "46.30", || format!("baseline BMI {baseline}"));
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../service/tests/golden/figure3_kg.json");
    match std::fs::read_to_string(path).ok().and_then(|s| serde_json::from_str::<Value>(&s).ok()) {
        Some(expected) => v.check(expected == kg, || "figure profile response differs from the golden file".into()),
        None => v.failures.push(format!("cannot read golden file {path}")),
    }
    let (_, bmi) = send(app, post(json!({"units": "bmi", "profile": figure_profile()}).to_string())).await;
    let anchor = first_point(&bmi);
    v.check(anchor[0] == 0.0 && anchor[1..].iter().all(|b| format!("{b:.2}") == "46.30"), || format!("BMI anchor {anchor:?}"));
}

async fn invalid_requests(v: &mut Verdict, app: &Router) -> usize {
    let with = |key: &str, value: Value| {
        let mut p = figure_profile();
        p[key] = value;
        p
    };
    let mut no_operation = figure_profile();
    no_operation.as_object_mut().unwrap().remove("operation");
    let cases: Vec<(&str, String)> = vec![
        ("age below 18", json!({"profile": with("age_years", json!(17))}).to_string()),
        ("height above 2.5 m", json!({"scenarios": [figure_profile(), with("height_m", json!(2.7))]}).to_string()),
        ("weight above 400 kg", json!({"profile": with("weight_kg", json!(450))}).to_string()),
        ("unknown operation", json!({"profile": with("operation", json!("OAGB"))}).to_string()),
        ("age as a string", json!({"profile": with("age_years", json!("thirty"))}).to_string()),
        ("missing operation", json!({"profile": no_operation}).to_string()),
        ("unknown field", json!({"profile": with("shoe_size", json!(44))}).to_string()),
        ("unknown unit", json!({"units": "stone", "profile": figure_profile()}).to_string()),
        ("three scenarios", json!({"scenarios": [figure_profile(), figure_profile(), figure_profile()]}).to_string()),
        ("no scenarios", json!({"scenarios": []}).to_string()),
        ("malformed JSON", "{oops".to_string()),
    ];
    for (label, body) in &cases {
        let (status, reply) = send(app, post(body.clone())).await;
        let fields = reply["fields"].as_array().map_or(0, Vec::len);
        v.check(status == StatusCode::BAD_REQUEST && reply["error"] == "invalid_request" && fields > 0, || {
            format!("{label}: status {status}, body {reply}")
        });
    }
    let lean = json!({"units": "ewl", "profile": with("weight_kg", json!(70))}).to_string();
    let (status, reply) = send(app, post(lean)).await;
    v.check(status == StatusCode::UNPROCESSABLE_ENTITY && reply["error"] == "ewl_unavailable", || {
        format!("EWL at BMI 21.6: status {status}, body {reply}")
    });
    cases.len()
}

async fn concurrency(v: &mut Verdict, app: &Router) {
    let bodies: Vec<String> = (0..CONCURRENT)
        .map(|i| {
            let mut p = figure_profile();
            p["age_years"] = json!(18 + i % 57);
            p["weight_kg"] = json!(70.0 + (i % 151) as f64 * 1.5);
            p["height_m"] = json!(1.5 + (i % 11) as f64 * 0.04);
            p["operation"] = json!(["RYGB", "SG", "AGB"][i % 3]);
            p["smoker"] = [json!(true), json!(false), Value::Null][(i / 3) % 3].clone();
            let unit = ["kg", "bmi", "twl"][(i / 9) % 3];
            json!({"units": unit, "profile": p}).to_string()
        })
        .collect();
    let mut serial = Vec::with_capacity(CONCURRENT);
    for b in &bodies {
        serial.push(send(app, post(b.clone())).await);
    }
    let mut set = tokio::task::JoinSet::new();
    for (i, b) in bodies.into_iter().enumerate() {
        let app = app.clone();
        set.spawn(async move { (i, send(&app, post(b)).await) });
    }
    let mut parallel = vec![None; CONCURRENT];
    while let Some(r) = set.join_next().await {
        let (i, out) = r.unwrap();
        parallel[i] = Some(out);
    }
    let ok = serial.iter().filter(|s| s.0 == StatusCode::OK).count();
    v.check(ok == CONCURRENT, || format!("{} of {CONCURRENT} serial requests failed", CONCURRENT - ok));
    let differing = serial.iter().zip(&parallel).filter(|(s, p)| p.as_ref() != Some(*s)).count();
    v.check(differing == 0, || format!("{differing} parallel responses differ from serial"));
}

pub fn run() -> Verdict {
    let mut v = Verdict::new();
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(8).enable_all().build().unwrap();
    let cases = runtime.block_on(async {
        let app = app();
        golden(&mut v, &app).await;
        let cases = invalid_requests(&mut v, &app).await;
        concurrency(&mut v, &app).await;
        cases
    });
    v.note(format!(
        "figure profile golden and anchored at 150 kg / BMI 46.30; {cases} invalid requests rejected with 400; \
         {CONCURRENT} parallel requests identical to serial"
    ));
    v
}
