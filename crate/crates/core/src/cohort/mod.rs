//! Longitudinal data model, outcome conversions and cohort ingestion.
//!
//! A [`PatientRecord`] carries the baseline profile and the scheduled
//! postoperative visits that survived censoring. Outcomes are expressed as
//! weight, BMI, percent total weight loss (TWL, positive means loss) and
//! percent excess weight loss (EWL).

mod formulas;
mod load;
mod outcomes;

pub use formulas::{compute_bmi, compute_ewl, compute_twl, twl_to_weight, DomainError};
pub use load::{
    load_cohort, load_cohort_path, write_cohort_csv, ExclusionReason, ExclusionReport, LoadError,
    LoadOptions, LoadOutcome, RowError,
};
pub use outcomes::{derive_outcomes, OutcomeRow};

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

/// Scheduled postoperative visit months.
pub const SCHEDULED_MONTHS: [u32; 5] = [1, 3, 12, 24, 60];

pub const MIN_AGE_YEARS: f64 = 18.0;
pub const HEIGHT_RANGE_M: (f64, f64) = (1.0, 2.5);
pub const WEIGHT_RANGE_KG: (f64, f64) = (40.0, 400.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiabetesStatus {
    None,
    PreT2d,
    T2d,
}

impl DiabetesStatus {
    pub const ALL: [DiabetesStatus; 3] = [DiabetesStatus::None, DiabetesStatus::PreT2d, DiabetesStatus::T2d];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Code used in the CSV schema.
    pub fn code(self) -> &'static str {
        match self {
            DiabetesStatus::None => "none",
            DiabetesStatus::PreT2d => "pre",
            DiabetesStatus::T2d => "t2d",
        }
    }
}

impl FromStr for DiabetesStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "none" => Ok(DiabetesStatus::None),
            "pre" | "pre_t2d" => Ok(DiabetesStatus::PreT2d),
            "t2d" => Ok(DiabetesStatus::T2d),
            other => Err(format!("unknown diabetes status `{other}`")),
        }
    }
}

impl fmt::Display for DiabetesStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Bariatric intervention. Only the three modeled operations exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operation {
    #[serde(rename = "RYGB")]
    Rygb,
    #[serde(rename = "SG")]
    Sg,
    #[serde(rename = "AGB")]
    Agb,
}

impl Operation {
    pub const ALL: [Operation; 3] = [Operation::Rygb, Operation::Sg, Operation::Agb];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            Operation::Rygb => "RYGB",
            Operation::Sg => "SG",
            Operation::Agb => "AGB",
        }
    }
}

impl FromStr for Operation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "RYGB" => Ok(Operation::Rygb),
            "SG" => Ok(Operation::Sg),
            "AGB" => Ok(Operation::Agb),
            other => Err(format!("unsupported operation `{other}`")),
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub month: u32,
    pub weight_kg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub age_years: f64,
    pub weight_kg: f64,
    pub height_m: f64,
    pub sex: Sex,
    pub smoker: Option<bool>,
    pub diabetes_status: DiabetesStatus,
    pub diabetes_duration_years: f64,
    pub operation: Operation,
    pub prior_bariatric_surgery: bool,
    /// Uncensored visits, strictly increasing by month.
    pub visits: Vec<VisitRecord>,
    /// Last month with usable follow-up; `None` when every scheduled visit was completed.
    pub censored_after_months: Option<u32>,
}

impl PatientRecord {
    pub fn bmi(&self) -> f64 {
        self.weight_kg / (self.height_m * self.height_m)
    }

    pub fn visit(&self, month: u32) -> Option<&VisitRecord> {
        self.visits.iter().find(|v| v.month == month)
    }

    /// Observed TWL at `month`, if that visit is present and uncensored.
    pub fn twl_at(&self, month: u32) -> Option<f64> {
        self.visit(month)
            .and_then(|v| compute_twl(self.weight_kg, v.weight_kg).ok())
    }

    pub fn is_censored_at(&self, month: u32) -> bool {
        matches!(self.censored_after_months, Some(c) if month > c)
    }

    /// Checks the record invariants, returning every violated field.
    pub fn validate(&self) -> Result<(), Vec<(&'static str, String)>> {
        let mut problems = Vec::new();
        if !(self.age_years >= MIN_AGE_YEARS) {
            problems.push(("age", format!("must be at least {MIN_AGE_YEARS} years, got {}", self.age_years)));
        }
        if !(self.height_m > HEIGHT_RANGE_M.0 && self.height_m < HEIGHT_RANGE_M.1) {
            problems.push((
                "height_m",
                format!("must lie in ({}, {}) m, got {}", HEIGHT_RANGE_M.0, HEIGHT_RANGE_M.1, self.height_m),
            ));
        }
        if !(self.weight_kg >= WEIGHT_RANGE_KG.0 && self.weight_kg <= WEIGHT_RANGE_KG.1) {
            problems.push((
                "weight_kg",
                format!("must lie in [{}, {}] kg, got {}", WEIGHT_RANGE_KG.0, WEIGHT_RANGE_KG.1, self.weight_kg),
            ));
        }
        if !(self.diabetes_duration_years >= 0.0) {
            problems.push(("diabetes_years", "must be non-negative".to_string()));
        } else if self.diabetes_status != DiabetesStatus::T2d && self.diabetes_duration_years != 0.0 {
            problems.push(("diabetes_years", "must be 0 unless diabetes status is t2d".to_string()));
        }
        let mut last = 0;
        for v in &self.visits {
            if !SCHEDULED_MONTHS.contains(&v.month) || v.month <= last {
                problems.push(("visits", format!("month {} is not a scheduled, increasing visit", v.month)));
            }
            if !(v.weight_kg > 0.0) {
                problems.push(("visits", format!("month {} weight must be positive", v.month)));
            }
            last = v.month;
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }
}

/// One value of an additional baseline column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Numeric(f64),
    Categorical(String),
    Missing,
}

impl FeatureValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, FeatureValue::Missing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Boolean,
}

/// An additional baseline column, aligned with `Cohort::records`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<FeatureValue>,
}

impl FeatureColumn {
    pub fn missing_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let missing = self.values.iter().filter(|v| v.is_missing()).count();
        missing as f64 / self.values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub extra_features: Vec<FeatureColumn>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CohortError {
    #[error("duplicate patient id `{0}`")]
    DuplicateId(String),
    #[error("feature column `{name}` has {got} values for {expected} records")]
    RaggedColumn { name: String, expected: usize, got: usize },
}

impl Cohort {
    pub fn new(records: Vec<PatientRecord>, extra_features: Vec<FeatureColumn>) -> Result<Self, CohortError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(CohortError::DuplicateId(r.id.clone()));
            }
        }
        for c in &extra_features {
            if c.values.len() != records.len() {
                return Err(CohortError::RaggedColumn {
                    name: c.name.clone(),
                    expected: records.len(),
                    got: c.values.len(),
                });
            }
        }
        Ok(Self { records, extra_features })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&FeatureColumn> {
        self.extra_features.iter().find(|c| c.name == name)
    }

    /// Sub-cohort with the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Cohort {
        Cohort {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            extra_features: self
                .extra_features
                .iter()
                .map(|c| FeatureColumn {
                    name: c.name.clone(),
                    kind: c.kind,
                    values: indices.iter().map(|&i| c.values[i].clone()).collect(),
                })
                .collect(),
        }
    }

    /// Number of records with an uncensored visit at `month`.
    pub fn observed_at(&self, month: u32) -> usize {
        self.records.iter().filter(|r| r.visit(month).is_some()).count()
    }
}
