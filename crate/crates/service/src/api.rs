//! Request parsing and the pure request handlers.

use crate::state::LoadedModel;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::str::FromStr;
use wtraj_core::cohort::{DiabetesStatus, Operation};
use wtraj_core::trajectory::{predict_profile, PatientProfile, Unit, UnitError, UnitPoint, FORMAT_NAME};

pub const MAX_SCENARIOS: usize = 2;

const PROFILE_FIELDS: [&str; 7] =
    ["age_years", "weight_kg", "height_m", "smoker", "diabetes_status", "diabetes_duration_years", "operation"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub units: Unit,
    pub scenarios: Vec<PatientProfile>,
}

/// A problem with one request field. `scenario` is the index into
/// `scenarios` for profile fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiFieldError {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scenario: Option<usize>,
    pub field: String,
    pub message: String,
}

impl ApiFieldError {
    fn new(scenario: Option<usize>, field: &str, message: impl Into<String>) -> Self {
        Self { scenario, field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApiError {
    #[error("invalid request")]
    Invalid(Vec<ApiFieldError>),
    #[error("excess weight loss is undefined at a baseline BMI of 25 or less")]
    EwlUnavailable(Vec<ApiFieldError>),
    #[error("not found")]
    NotFound,
    #[error("internal error")]
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default)]
    pub fields: Vec<ApiFieldError>,
}

impl ApiError {
    pub fn status(&self) -> u16 {
        match self {
            ApiError::Invalid(_) => 400,
            ApiError::EwlUnavailable(_) => 422,
            ApiError::NotFound => 404,
            ApiError::Internal => 500,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let (code, fields) = match self {
            ApiError::Invalid(f) => ("invalid_request", f.clone()),
            ApiError::EwlUnavailable(f) => ("ewl_unavailable", f.clone()),
            ApiError::NotFound => ("not_found", vec![]),
            ApiError::Internal => ("internal", vec![]),
        };
        ErrorBody { error: code.into(), message: self.to_string(), fields }
    }
}

fn describe(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn parse_profile(obj: &Map<String, Value>, scenario: usize, errors: &mut Vec<ApiFieldError>) -> Option<PatientProfile> {
    let start = errors.len();
    let mut err = |field: &str, message: String| errors.push(ApiFieldError::new(Some(scenario), field, message));
    for key in obj.keys() {
        if !PROFILE_FIELDS.contains(&key.as_str()) {
            err(key, format!("unknown field `{key}`"));
        }
    }
    let mut number = |field: &str, default: Option<f64>| match obj.get(field) {
        Some(Value::Number(n)) => n.as_f64(),
        None | Some(Value::Null) if default.is_some() => default,
        None => {
            err(field, format!("{field} is required"));
            None
        }
        Some(v) => {
            err(field, format!("{field} must be a number, got {}", describe(v)));
            None
        }
    };
    let age = number("age_years", None);
    let weight = number("weight_kg", None);
    let height = number("height_m", None);
    let duration = number("diabetes_duration_years", Some(0.0));
    let mut err = |field: &str, message: String| errors.push(ApiFieldError::new(Some(scenario), field, message));
    let smoker = match obj.get("smoker") {
        None | Some(Value::Null) => Some(None),
        Some(Value::Bool(b)) => Some(Some(*b)),
        Some(v) => {
            err("smoker", format!("smoker must be true, false or null, got {}", describe(v)));
            None
        }
    };
    fn code<T: FromStr<Err = String>>(
        obj: &Map<String, Value>,
        field: &str,
        allowed: &str,
        err: &mut dyn FnMut(&str, String),
    ) -> Option<T> {
        match obj.get(field) {
            Some(Value::String(s)) => T::from_str(s).map_err(|e| err(field, format!("{e}; expected one of {allowed}"))).ok(),
            None => {
                err(field, format!("{field} is required"));
                None
            }
            Some(v) => {
                err(field, format!("{field} must be a string, got {}", describe(v)));
                None
            }
        }
    }
    let diabetes: Option<DiabetesStatus> = code(obj, "diabetes_status", "none, pre_t2d, t2d", &mut err);
    let operation: Option<Operation> = code(obj, "operation", "RYGB, SG, AGB", &mut err);
    if errors.len() > start {
        return None;
    }
    let profile = PatientProfile {
        age_years: age?,
        weight_kg: weight?,
        height_m: height?,
        smoker: smoker?,
        diabetes_status: diabetes?,
        diabetes_duration_years: duration?,
        operation: operation?,
    };
    match profile.validate() {
        Ok(()) => Some(profile),
        Err(e) => {
            errors.extend(e.fields.into_iter().map(|f| ApiFieldError::new(Some(scenario), &f.field, f.message)));
            None
        }
    }
}

/// Parses and validates a predict body. Every problem found is reported,
/// not just the first.
///
/// The body is an object with optional `units` (default `kg`) and either
/// `scenarios` (one or two profiles) or a single `profile`.
pub fn parse_predict_request(body: &[u8]) -> Result<PredictRequest, ApiError> {
    let invalid = |field: &str, message: String| ApiError::Invalid(vec![ApiFieldError::new(None, field, message)]);
    let value: Value = serde_json::from_slice(body).map_err(|e| invalid("body", format!("body is not valid JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(invalid("body", format!("body must be a JSON object, got {}", describe(&value))));
    };
    let mut errors = Vec::new();
    for key in obj.keys() {
        if !["units", "scenarios", "profile"].contains(&key.as_str()) {
            errors.push(ApiFieldError::new(None, key, format!("unknown field `{key}`")));
        }
    }
    let units = match obj.get("units") {
        None | Some(Value::Null) => Some(Unit::Kg),
        Some(Value::String(s)) => match Unit::from_str(s) {
            Ok(u) => Some(u),
            Err(_) => {
                errors.push(ApiFieldError::new(None, "units", format!("unknown unit `{s}`; expected kg, bmi, twl or ewl")));
                None
            }
        },
        Some(v) => {
            errors.push(ApiFieldError::new(None, "units", format!("units must be a string, got {}", describe(v))));
            None
        }
    };
    let raw: Vec<&Value> = match (obj.get("scenarios"), obj.get("profile")) {
        (Some(_), Some(_)) => {
            errors.push(ApiFieldError::new(None, "profile", "give either `profile` or `scenarios`, not both"));
            vec![]
        }
        (None, None) => {
            errors.push(ApiFieldError::new(None, "scenarios", "scenarios is required"));
            vec![]
        }
        (None, Some(p)) => vec![p],
        (Some(Value::Array(list)), None) if (1..=MAX_SCENARIOS).contains(&list.len()) => list.iter().collect(),
        (Some(Value::Array(list)), None) => {
            errors.push(ApiFieldError::new(
                None,
                "scenarios",
                format!("between 1 and {MAX_SCENARIOS} scenarios are required, got {}", list.len()),
            ));
            vec![]
        }
        (Some(v), None) => {
            errors.push(ApiFieldError::new(None, "scenarios", format!("scenarios must be an array, got {}", describe(v))));
            vec![]
        }
    };
    let mut scenarios = Vec::new();
    for (i, v) in raw.into_iter().enumerate() {
        match v {
            Value::Object(p) => scenarios.extend(parse_profile(p, i, &mut errors)),
            other => errors.push(ApiFieldError::new(Some(i), "profile", format!("profile must be an object, got {}", describe(other)))),
        }
    }
    match units {
        Some(units) if errors.is_empty() => Ok(PredictRequest { units, scenarios }),
        _ => Err(ApiError::Invalid(errors)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub format_version: u32,
    pub features: Vec<String>,
    pub timepoints: Vec<u32>,
    pub artifact_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPrediction {
    pub profile: PatientProfile,
    pub baseline_bmi: f64,
    pub ewl_available: bool,
    /// Month 0 and the model timepoints.
    pub points: Vec<UnitPoint>,
    /// Smoothed samples every quarter month from 0 to the last timepoint.
    pub curve: Vec<UnitPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub units: Unit,
    pub model: ModelSummary,
    pub scenarios: Vec<ScenarioPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub format_name: String,
    pub format_version: u32,
    pub features: Vec<String>,
    pub timepoints: Vec<u32>,
    pub artifact_sha256: String,
    pub seed: u64,
    pub split_ratio: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub created_at: Option<String>,
    pub units: Vec<Unit>,
    pub max_scenarios: usize,
}

fn summary(m: &LoadedModel) -> ModelSummary {
    ModelSummary {
        format_version: m.model.metadata.format_version,
        features: m.model.features().iter().map(|f| f.name().to_string()).collect(),
        timepoints: m.model.timepoints.clone(),
        artifact_sha256: m.artifact_sha256.clone(),
    }
}

/// Predicts every scenario in `units`.
pub fn handle_predict(m: &LoadedModel, request: &PredictRequest) -> Result<PredictResponse, ApiError> {
    let mut scenarios = Vec::with_capacity(request.scenarios.len());
    let mut ewl = Vec::new();
    for (i, profile) in request.scenarios.iter().enumerate() {
        let prediction = predict_profile(&m.model, profile).map_err(|e| {
            ApiError::Invalid(e.fields.into_iter().map(|f| ApiFieldError::new(Some(i), &f.field, f.message)).collect())
        })?;
        let converted = prediction.knots(request.units).and_then(|k| Ok((k, prediction.smooth(request.units)?)));
        match converted {
            Ok((points, curve)) => scenarios.push(ScenarioPrediction {
                profile: *profile,
                baseline_bmi: prediction.baseline_bmi,
                ewl_available: prediction.ewl_available,
                points,
                curve,
            }),
            Err(UnitError::EwlUnavailable(bmi)) => ewl.push(ApiFieldError::new(
                Some(i),
                "weight_kg",
                format!("baseline BMI {bmi:.2} is not above 25, so excess weight loss is undefined"),
            )),
            Err(UnitError::Domain(_)) => return Err(ApiError::Internal),
        }
    }
    if !ewl.is_empty() {
        return Err(ApiError::EwlUnavailable(ewl));
    }
    Ok(PredictResponse { units: request.units, model: summary(m), scenarios })
}

/// Parses `body` and predicts it.
pub fn handle_predict_bytes(m: &LoadedModel, body: &[u8]) -> Result<PredictResponse, ApiError> {
    handle_predict(m, &parse_predict_request(body)?)
}

pub fn handle_meta(m: &LoadedModel) -> MetaResponse {
    let s = summary(m);
    let md = &m.model.metadata;
    MetaResponse {
        format_name: FORMAT_NAME.into(),
        format_version: s.format_version,
        features: s.features,
        timepoints: s.timepoints,
        artifact_sha256: s.artifact_sha256,
        seed: md.seed,
        split_ratio: md.split_ratio,
        n_train: md.n_train,
        n_test: md.n_test,
        created_at: md.created_at.clone(),
        units: vec![Unit::Kg, Unit::Bmi, Unit::Twl, Unit::Ewl],
        max_scenarios: MAX_SCENARIOS,
    }
}
