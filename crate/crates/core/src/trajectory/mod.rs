//! Per-visit regression trees assembled into a trajectory predictor with
//! interquartile error bands, smoothing and unit conversions.

mod artifact;
mod smooth;
mod train;

pub use artifact::{load_model, read_model, save_model, write_model, ArtifactError, FORMAT_NAME, FORMAT_VERSION};
pub use smooth::{month_grid, smooth_trajectory, Pchip, SmoothError, GRID_STEP};
pub use train::{
    split_patients, train_trajectory_model, training_dataset, HeldOutError, TrainError, TrainOptions, TrainOutcome,
};

use crate::cart::{FeatureDef, RegressionTree};
use crate::cohort::{
    compute_bmi, compute_ewl, twl_to_weight, DiabetesStatus, DomainError, Operation, PatientRecord, HEIGHT_RANGE_M,
    MIN_AGE_YEARS, SCHEDULED_MONTHS, WEIGHT_RANGE_KG,
};
use crate::metrics::quantile_sorted;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// The seven model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileFeature {
    Age,
    WeightKg,
    HeightM,
    Smoker,
    Diabetes,
    DiabetesYears,
    Operation,
}

impl ProfileFeature {
    pub const ALL: [ProfileFeature; 7] = [
        ProfileFeature::Age,
        ProfileFeature::WeightKg,
        ProfileFeature::HeightM,
        ProfileFeature::Smoker,
        ProfileFeature::Diabetes,
        ProfileFeature::DiabetesYears,
        ProfileFeature::Operation,
    ];

    /// Name shared with the selection design and the tree features.
    pub fn name(self) -> &'static str {
        match self {
            ProfileFeature::Age => "age",
            ProfileFeature::WeightKg => "weight_kg",
            ProfileFeature::HeightM => "height_m",
            ProfileFeature::Smoker => "smoker",
            ProfileFeature::Diabetes => "diabetes",
            ProfileFeature::DiabetesYears => "diabetes_years",
            ProfileFeature::Operation => "operation",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn feature_def(self) -> FeatureDef {
        match self {
            ProfileFeature::Diabetes => {
                FeatureDef::categorical(self.name(), &DiabetesStatus::ALL.map(DiabetesStatus::code))
            }
            ProfileFeature::Operation => FeatureDef::categorical(self.name(), &Operation::ALL.map(Operation::code)),
            _ => FeatureDef::numeric(self.name()),
        }
    }

    /// Tree encoding of the profile value; NaN when missing.
    pub fn value(self, p: &PatientProfile) -> f64 {
        match self {
            ProfileFeature::Age => p.age_years,
            ProfileFeature::WeightKg => p.weight_kg,
            ProfileFeature::HeightM => p.height_m,
            ProfileFeature::Smoker => p.smoker.map_or(f64::NAN, |s| f64::from(u8::from(s))),
            ProfileFeature::Diabetes => p.diabetes_status.index() as f64,
            ProfileFeature::DiabetesYears => p.diabetes_duration_years,
            ProfileFeature::Operation => p.operation.index() as f64,
        }
    }
}

impl fmt::Display for ProfileFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub age_years: f64,
    pub weight_kg: f64,
    pub height_m: f64,
    pub smoker: Option<bool>,
    pub diabetes_status: DiabetesStatus,
    pub diabetes_duration_years: f64,
    pub operation: Operation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("invalid profile: {}", .fields.iter().map(|f| format!("{}: {}", f.field, f.message)).collect::<Vec<_>>().join("; "))]
pub struct ProfileError {
    pub fields: Vec<FieldError>,
}

impl PatientProfile {
    pub fn from_record(r: &PatientRecord) -> Self {
        Self {
            age_years: r.age_years,
            weight_kg: r.weight_kg,
            height_m: r.height_m,
            smoker: r.smoker,
            diabetes_status: r.diabetes_status,
            diabetes_duration_years: r.diabetes_duration_years,
            operation: r.operation,
        }
    }

    pub fn bmi(&self) -> f64 {
        self.weight_kg / (self.height_m * self.height_m)
    }

    /// Checks the baseline bounds; every offending field is reported.
    pub fn validate(&self) -> Result<(), ProfileError> {
        let mut fields = Vec::new();
        let mut bad = |field: &str, message: String| fields.push(FieldError { field: field.into(), message });
        if !(self.age_years >= MIN_AGE_YEARS && self.age_years.is_finite()) {
            bad("age_years", format!("age must be at least {MIN_AGE_YEARS} years, got {}", self.age_years));
        }
        if !(self.weight_kg >= WEIGHT_RANGE_KG.0 && self.weight_kg <= WEIGHT_RANGE_KG.1) {
            bad(
                "weight_kg",
                format!("weight must lie in [{}, {}] kg, got {}", WEIGHT_RANGE_KG.0, WEIGHT_RANGE_KG.1, self.weight_kg),
            );
        }
        if !(self.height_m > HEIGHT_RANGE_M.0 && self.height_m < HEIGHT_RANGE_M.1) {
            bad(
                "height_m",
                format!("height must lie in ({}, {}) m, got {}", HEIGHT_RANGE_M.0, HEIGHT_RANGE_M.1, self.height_m),
            );
        }
        if !(self.diabetes_duration_years >= 0.0 && self.diabetes_duration_years.is_finite()) {
            bad("diabetes_duration_years", "diabetes duration must be a non-negative number of years".into());
        } else if self.diabetes_status != DiabetesStatus::T2d && self.diabetes_duration_years != 0.0 {
            bad("diabetes_duration_years", "diabetes duration must be 0 unless diabetes status is t2d".into());
        }
        if fields.is_empty() {
            Ok(())
        } else {
            Err(ProfileError { fields })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualQuantiles {
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntervalError {
    #[error("timepoint {index} has {got} residuals, need at least 4")]
    TooFew { index: usize, got: usize },
    #[error("timepoint {0} has a non-finite residual")]
    NonFinite(usize),
}

/// Empirical 25th and 75th percentiles of each timepoint's residuals
/// (observed − predicted TWL), interpolating between order statistics.
pub fn compute_prediction_intervals(residuals: &[Vec<f64>]) -> Result<Vec<ResidualQuantiles>, IntervalError> {
    residuals
        .iter()
        .enumerate()
        .map(|(index, r)| {
            if r.len() < 4 {
                return Err(IntervalError::TooFew { index, got: r.len() });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(IntervalError::NonFinite(index));
            }
            let mut s = r.clone();
            s.sort_by(f64::total_cmp);
            Ok(ResidualQuantiles { q25: quantile_sorted(&s, 0.25), q75: quantile_sorted(&s, 0.75) })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub format_version: u32,
    pub seed: u64,
    pub split_ratio: f64,
    pub features: Vec<ProfileFeature>,
    pub n_train: usize,
    pub n_test: usize,
    /// RFC 3339 creation time, recorded only when supplied so that
    /// artifacts are reproducible by default.
    pub created_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryModel {
    pub timepoints: Vec<u32>,
    /// One tree per timepoint; response is TWL percent.
    pub trees: Vec<RegressionTree>,
    pub residual_quantiles: Vec<ResidualQuantiles>,
    pub metadata: ModelMetadata,
}

impl TrajectoryModel {
    pub fn features(&self) -> &[ProfileFeature] {
        &self.metadata.features
    }

    pub fn feature_row(&self, profile: &PatientProfile) -> Vec<f64> {
        self.metadata.features.iter().map(|f| f.value(profile)).collect()
    }

    /// Tree predictions of TWL at each model timepoint.
    pub fn predict_twl(&self, profile: &PatientProfile) -> Vec<f64> {
        let row = self.feature_row(profile);
        self.trees.iter().map(|t| t.predict_row(&row)).collect()
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        let k = self.timepoints.len();
        if k == 0 {
            return Err("model has no timepoints".into());
        }
        if self.trees.len() != k || self.residual_quantiles.len() != k {
            return Err(format!(
                "{k} timepoints, {} trees, {} residual quantile pairs",
                self.trees.len(),
                self.residual_quantiles.len()
            ));
        }
        if self.timepoints.windows(2).any(|w| w[0] >= w[1]) || self.timepoints.iter().any(|t| !SCHEDULED_MONTHS.contains(t))
        {
            return Err(format!("timepoints {:?} are not increasing scheduled months", self.timepoints));
        }
        let mut sorted = self.metadata.features.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.metadata.features.len() {
            return Err("duplicate model feature".into());
        }
        let defs: Vec<FeatureDef> = self.metadata.features.iter().map(|f| f.feature_def()).collect();
        for (t, tree) in self.timepoints.iter().zip(&self.trees) {
            tree.check_invariants().map_err(|e| format!("month {t} tree: {e}"))?;
            if tree.features != defs {
                return Err(format!("month {t} tree features differ from the model feature set"));
            }
            if let Some(f) = tree.features_used().iter().find(|f| ProfileFeature::from_name(f).is_none()) {
                return Err(format!("month {t} tree uses `{f}`, which is not a profile feature"));
            }
        }
        for (t, q) in self.timepoints.iter().zip(&self.residual_quantiles) {
            if !(q.q25.is_finite() && q.q75.is_finite() && q.q25 <= q.q75) {
                return Err(format!("month {t} residual quantiles ({}, {}) are not ordered", q.q25, q.q75));
            }
        }
        if self.metadata.format_version != FORMAT_VERSION {
            return Err(format!("metadata format_version {} is not {FORMAT_VERSION}", self.metadata.format_version));
        }
        Ok(())
    }
}

/// TWL with its band at one month.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub month: f64,
    pub twl: f64,
    pub twl_lo: f64,
    pub twl_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Kg,
    Bmi,
    Twl,
    Ewl,
}

impl FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kg" => Ok(Unit::Kg),
            "bmi" => Ok(Unit::Bmi),
            "twl" => Ok(Unit::Twl),
            "ewl" => Ok(Unit::Ewl),
            other => Err(format!("unknown unit `{other}` (expected kg, bmi, twl or ewl)")),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Kg => "kg",
            Unit::Bmi => "bmi",
            Unit::Twl => "twl",
            Unit::Ewl => "ewl",
        })
    }
}

/// A value with its band in some unit; `lo ≤ value ≤ hi` whenever the TWL
/// band brackets the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitPoint {
    pub month: f64,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UnitError {
    #[error("EWL is undefined for a baseline BMI of {0:.2} (must exceed 25)")]
    EwlUnavailable(f64),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPrediction {
    pub baseline_weight_kg: f64,
    pub height_m: f64,
    pub baseline_bmi: f64,
    /// Month 0 anchor followed by the model timepoints.
    pub points: Vec<TrajectoryPoint>,
    /// Smoothed samples on the month grid.
    pub curve: Vec<TrajectoryPoint>,
    /// False when the baseline BMI is at most 25.
    pub ewl_available: bool,
}

impl TrajectoryPrediction {
    fn convert(&self, points: &[TrajectoryPoint], unit: Unit) -> Result<Vec<UnitPoint>, UnitError> {
        let w0 = self.baseline_weight_kg;
        let h2 = self.height_m * self.height_m;
        if unit == Unit::Ewl && !self.ewl_available {
            return Err(UnitError::EwlUnavailable(self.baseline_bmi));
        }
        points
            .iter()
            .map(|p| {
                // higher TWL means lower weight, so the band ends swap
                let f = |twl: f64| -> Result<f64, UnitError> {
                    Ok(match unit {
                        Unit::Twl => twl,
                        Unit::Kg => twl_to_weight(w0, twl)?,
                        Unit::Bmi => twl_to_weight(w0, twl)? / h2,
                        Unit::Ewl => compute_ewl(self.baseline_bmi, twl_to_weight(w0, twl)? / h2)?,
                    })
                };
                let (a, b) = (f(p.twl_lo)?, f(p.twl_hi)?);
                Ok(UnitPoint { month: p.month, value: f(p.twl)?, lo: a.min(b), hi: a.max(b) })
            })
            .collect()
    }

    /// Anchor and timepoint values in `unit`.
    pub fn knots(&self, unit: Unit) -> Result<Vec<UnitPoint>, UnitError> {
        self.convert(&self.points, unit)
    }

    /// Smoothed TWL curve converted pointwise to `unit`.
    pub fn smooth(&self, unit: Unit) -> Result<Vec<UnitPoint>, UnitError> {
        self.convert(&self.curve, unit)
    }
}

/// Predicts the TWL trajectory of one profile with its interquartile error band.
pub fn predict_profile(model: &TrajectoryModel, profile: &PatientProfile) -> Result<TrajectoryPrediction, ProfileError> {
    profile.validate()?;
    let baseline_bmi = compute_bmi(profile.weight_kg, profile.height_m).map_err(|e| ProfileError {
        fields: vec![FieldError { field: "weight_kg".into(), message: e.to_string() }],
    })?;
    let mut points = vec![TrajectoryPoint { month: 0.0, twl: 0.0, twl_lo: 0.0, twl_hi: 0.0 }];
    for ((&t, twl), q) in model.timepoints.iter().zip(model.predict_twl(profile)).zip(&model.residual_quantiles) {
        points.push(TrajectoryPoint { month: f64::from(t), twl, twl_lo: twl + q.q25, twl_hi: twl + q.q75 });
    }
    let curve = smooth_points(&points).expect("model timepoints are increasing and anchored");
    Ok(TrajectoryPrediction {
        baseline_weight_kg: profile.weight_kg,
        height_m: profile.height_m,
        baseline_bmi,
        points,
        curve,
        ewl_available: baseline_bmi > 25.0,
    })
}

/// Smooths TWL and both band edges independently. Between two knots where
/// the band brackets the prediction, samples are clamped so it keeps doing
/// so; the edges never cross. Knot values are left untouched.
fn smooth_points(points: &[TrajectoryPoint]) -> Result<Vec<TrajectoryPoint>, SmoothError> {
    let months: Vec<f64> = points.iter().map(|p| p.month).collect();
    let series = |f: fn(&TrajectoryPoint) -> f64| {
        smooth_trajectory(&months, &points.iter().map(f).collect::<Vec<_>>(), GRID_STEP)
    };
    let twl = series(|p| p.twl)?;
    let lo = series(|p| p.twl_lo)?;
    let hi = series(|p| p.twl_hi)?;
    Ok(twl
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(&(month, v), (&(_, l), &(_, h)))| {
            let k = months.partition_point(|m| *m <= month).clamp(1, months.len() - 1);
            let ends = [&points[k - 1], &points[k]];
            let (mut l, mut h) = (l.min(h), l.max(h));
            if ends.iter().all(|p| p.twl_lo <= p.twl) {
                l = l.min(v);
            }
            if ends.iter().all(|p| p.twl <= p.twl_hi) {
                h = h.max(v);
            }
            TrajectoryPoint { month, twl: v, twl_lo: l, twl_hi: h }
        })
        .collect())
}
