//! Missing-data screening and multiple imputation by predictive mean matching.
//!
//! Matching uses a linear predictor on the key baseline variables only:
//! weight, sex, age, operation, type 2 diabetes presence and its duration.

use crate::cohort::{Cohort, ColumnKind, DiabetesStatus, FeatureValue, Operation, Sex};
use crate::metrics::ols::{ols_dropping_dependent, OlsError};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const SMOKER_FEATURE: &str = "smoker";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    TooManyMissing { fraction: f64 },
    SingleLevel,
    FreeText { levels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub name: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScreenReport {
    pub retained: Vec<String>,
    pub dropped: Vec<DroppedFeature>,
}

impl ScreenReport {
    pub fn is_retained(&self, name: &str) -> bool {
        self.retained.iter().any(|r| r == name)
    }
}

/// A categorical column looks like free text when it has more than this many
/// distinct values and they make up over half of its observed cells.
const FREE_TEXT_MIN_LEVELS: usize = 20;

fn screen_one(missing: f64, levels: usize, observed: usize, categorical: bool, max_missing: f64) -> Option<DropReason> {
    if missing > max_missing {
        Some(DropReason::TooManyMissing { fraction: missing })
    } else if levels <= 1 {
        Some(DropReason::SingleLevel)
    } else if categorical && levels > FREE_TEXT_MIN_LEVELS && 2 * levels > observed {
        Some(DropReason::FreeText { levels })
    } else {
        None
    }
}

/// Drops the smoker flag and extra columns whose missing fraction strictly
/// exceeds `max_missing_fraction`, single-level columns and free-text columns.
pub fn screen_features(cohort: &Cohort, max_missing_fraction: f64) -> ScreenReport {
    let mut report = ScreenReport::default();
    let n = cohort.len().max(1);

    let smoker_obs: Vec<bool> = cohort.records.iter().filter_map(|r| r.smoker).collect();
    let smoker_levels = smoker_obs.iter().copied().collect::<BTreeSet<_>>().len();
    let smoker_missing = (cohort.len() - smoker_obs.len()) as f64 / n as f64;
    match screen_one(smoker_missing, smoker_levels, smoker_obs.len(), false, max_missing_fraction) {
        Some(reason) => report.dropped.push(DroppedFeature { name: SMOKER_FEATURE.into(), reason }),
        None => report.retained.push(SMOKER_FEATURE.into()),
    }

    for col in &cohort.extra_features {
        let observed: Vec<String> = col
            .values
            .iter()
            .filter_map(|v| match v {
                FeatureValue::Numeric(x) => Some(x.to_bits().to_string()),
                FeatureValue::Categorical(s) => Some(s.clone()),
                FeatureValue::Missing => None,
            })
            .collect();
        let levels = observed.iter().collect::<BTreeSet<_>>().len();
        let categorical = col.kind == ColumnKind::Categorical;
        match screen_one(col.missing_fraction(), levels, observed.len(), categorical, max_missing_fraction) {
            Some(reason) => report.dropped.push(DroppedFeature { name: col.name.clone(), reason }),
            None => report.retained.push(col.name.clone()),
        }
    }
    report
}

/// Removes the extra columns dropped by `report`. The smoker flag lives on
/// the record and is left untouched; callers exclude it from designs.
pub fn apply_screen(cohort: &Cohort, report: &ScreenReport) -> Cohort {
    Cohort {
        records: cohort.records.clone(),
        extra_features: cohort.extra_features.iter().filter(|c| report.is_retained(&c.name)).cloned().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImputationError {
    #[error("column `{column}` has {complete} complete cases, fewer than donor_k = {donor_k}")]
    TooFewDonors { column: String, complete: usize, donor_k: usize },
    #[error("m must be at least 1")]
    NoDatasets,
    #[error("donor_k must be at least 1")]
    NoDonors,
    #[error("matching model: {0}")]
    Model(#[from] OlsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationSet {
    pub m: usize,
    pub donor_k: usize,
    pub seed: u64,
    pub datasets: Vec<Cohort>,
}

/// Design of the key conditioning variables, intercept first.
fn key_design(cohort: &Cohort) -> DMatrix<f64> {
    let rows = &cohort.records;
    DMatrix::from_fn(rows.len(), 8, |i, j| {
        let r = &rows[i];
        match j {
            0 => 1.0,
            1 => r.weight_kg,
            2 => f64::from(u8::from(r.sex == Sex::Male)),
            3 => r.age_years,
            4 => f64::from(u8::from(r.operation == Operation::Sg)),
            5 => f64::from(u8::from(r.operation == Operation::Agb)),
            6 => f64::from(u8::from(r.diabetes_status == DiabetesStatus::T2d)),
            _ => r.diabetes_duration_years,
        }
    })
}

/// Observed value of a target column in a form donors can copy.
#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Flag(bool),
    Value(FeatureValue),
}

struct Target {
    /// Donor candidates (row indices) for each missing row, in ascending row order.
    pools: Vec<(usize, Vec<usize>)>,
}

/// Indicator or numeric encodings of the observed cells, one response per
/// matching dimension.
fn responses(cells: &[Option<Cell>]) -> Vec<Vec<f64>> {
    let observed: Vec<&Cell> = cells.iter().flatten().collect();
    match observed.first() {
        Some(Cell::Value(FeatureValue::Categorical(_))) => {
            let levels: BTreeSet<&str> = observed
                .iter()
                .filter_map(|c| match c {
                    Cell::Value(FeatureValue::Categorical(s)) => Some(s.as_str()),
                    _ => None,
                })
                .collect();
            levels
                .iter()
                .map(|lvl| {
                    observed
                        .iter()
                        .map(|c| matches!(c, Cell::Value(FeatureValue::Categorical(s)) if s == lvl) as u8 as f64)
                        .collect()
                })
                .collect()
        }
        _ => vec![observed
            .iter()
            .map(|c| match c {
                Cell::Flag(b) => f64::from(u8::from(*b)),
                Cell::Value(FeatureValue::Numeric(x)) => *x,
                _ => 0.0,
            })
            .collect()],
    }
}

fn build_target(name: &str, cells: &[Option<Cell>], design: &DMatrix<f64>, donor_k: usize) -> Result<Option<Target>, ImputationError> {
    let observed: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].is_some()).collect();
    let missing: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].is_none()).collect();
    if missing.is_empty() {
        return Ok(None);
    }
    if observed.len() < donor_k {
        return Err(ImputationError::TooFewDonors {
            column: name.to_string(),
            complete: observed.len(),
            donor_k,
        });
    }
    let obs_design = design.select_rows(&observed);
    // Predicted means for every row, one coordinate per response dimension.
    let mut predicted = vec![Vec::new(); cells.len()];
    for y in responses(cells) {
        let beta = ols_dropping_dependent(&obs_design, &y)?;
        for (i, p) in predicted.iter_mut().enumerate() {
            p.push(design.row(i).iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>());
        }
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let pools = missing
        .into_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = observed.iter().map(|&o| (dist(&predicted[i], &predicted[o]), o)).collect();
            cand.select_nth_unstable_by(donor_k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut pool: Vec<(f64, usize)> = cand[..donor_k].to_vec();
            pool.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            (i, pool.into_iter().map(|(_, o)| o).collect())
        })
        .collect();
    Ok(Some(Target { pools }))
}

/// Multiple imputation by predictive mean matching.
///
/// Each of the `m` datasets copies, for every missing cell, the observed
/// value of a donor drawn uniformly among the `donor_k` complete cases whose
/// predicted mean is nearest. Datasets use independent random streams derived
/// from `seed`, so the result does not depend on thread scheduling.
pub fn pmm_impute(cohort: &Cohort, m: usize, donor_k: usize, seed: u64) -> Result<ImputationSet, ImputationError> {
    if m == 0 {
        return Err(ImputationError::NoDatasets);
    }
    if donor_k == 0 {
        return Err(ImputationError::NoDonors);
    }
    let design = key_design(cohort);
    let mut targets = Vec::new();
    let smoker: Vec<Option<Cell>> = cohort.records.iter().map(|r| r.smoker.map(Cell::Flag)).collect();
    if let Some(t) = build_target(SMOKER_FEATURE, &smoker, &design, donor_k)? {
        targets.push((None, t));
    }
    for (c, col) in cohort.extra_features.iter().enumerate() {
        let cells: Vec<Option<Cell>> = col
            .values
            .iter()
            .map(|v| if v.is_missing() { None } else { Some(Cell::Value(v.clone())) })
            .collect();
        if let Some(t) = build_target(&col.name, &cells, &design, donor_k)? {
            targets.push((Some(c), t));
        }
    }

    let datasets = (0..m)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            let mut out = cohort.clone();
            for (column, target) in &targets {
                for (row, pool) in &target.pools {
                    let donor = pool[rng.random_range(0..pool.len())];
                    match column {
                        None => out.records[*row].smoker = cohort.records[donor].smoker,
                        Some(c) => out.extra_features[*c].values[*row] = cohort.extra_features[*c].values[donor].clone(),
                    }
                }
            }
            out
        })
        .collect();
    Ok(ImputationSet { m, donor_k, seed, datasets })
}
