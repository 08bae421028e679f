use super::{compute_prediction_intervals, IntervalError, ModelMetadata, PatientProfile, ProfileFeature, TrajectoryModel};
use crate::cart::{grow_tree, CartError, Dataset, FeatureDef, TreeParams};
use crate::cohort::{Cohort, SCHEDULED_MONTHS};
use crate::metrics::{evaluate_cohort, EvaluationOptions, MetricError, MetricReport};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub seed: u64,
    /// Fraction of patients in the training subset.
    pub split_ratio: f64,
    pub timepoints: Vec<u32>,
    pub params: TreeParams,
    pub evaluation: EvaluationOptions,
    pub created_at: Option<String>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            split_ratio: 0.8,
            timepoints: SCHEDULED_MONTHS.to_vec(),
            params: TreeParams::default(),
            evaluation: EvaluationOptions::default(),
            created_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("split ratio must lie in (0, 1], got {0}")]
    BadSplit(f64),
    #[error("month {0} is not a scheduled visit")]
    BadTimepoint(u32),
    #[error("no timepoints requested")]
    NoTimepoints,
    #[error("no model features")]
    NoFeatures,
    #[error("month {month}: {rows} uncensored training rows, fewer than minsplit = {minsplit}")]
    TooFewRows { month: u32, rows: usize, minsplit: usize },
    #[error("month {month}: {source}")]
    Tree { month: u32, source: CartError },
    #[error("prediction intervals: {0}")]
    Intervals(#[from] IntervalError),
    #[error("internal validation: {0}")]
    Metrics(#[from] MetricError),
}

/// TWL error of the model on the held-out patients at one month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutError {
    pub month: u32,
    pub n: usize,
    pub twl_rmse: f64,
    pub twl_mad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: TrajectoryModel,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub heldout: Vec<HeldOutError>,
    /// RMSE over every held-out (patient, month) pair.
    pub heldout_pooled_twl_rmse: Option<f64>,
    /// BMI-scale internal validation on the held-out patients.
    pub report: Option<MetricReport>,
}

/// Seeded patient-level split: a shuffled index list cut at
/// `round(ratio · n)`. Both halves are returned in ascending order.
pub fn split_patients(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(TrainError::BadSplit(ratio));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((ratio * n as f64).round() as usize).clamp(usize::from(n > 0), n);
    let (mut train, mut test) = (idx[..cut].to_vec(), idx[cut..].to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Rows of `rows` with an uncensored visit at `month`, as a tree dataset
/// over `features` with TWL as the response. `None` when no row qualifies.
pub fn training_dataset(
    cohort: &Cohort,
    rows: &[usize],
    features: &[ProfileFeature],
    month: u32,
) -> Option<(Dataset, Vec<usize>)> {
    let mut used = Vec::new();
    let mut response = Vec::new();
    for &i in rows {
        let r = &cohort.records[i];
        if r.is_censored_at(month) {
            continue;
        }
        if let Some(twl) = r.twl_at(month) {
            used.push(i);
            response.push(twl);
        }
    }
    if used.is_empty() {
        return None;
    }
    let profiles: Vec<PatientProfile> = used.iter().map(|&i| PatientProfile::from_record(&cohort.records[i])).collect();
    let defs: Vec<FeatureDef> = features.iter().map(|f| f.feature_def()).collect();
    let columns = features.iter().map(|f| profiles.iter().map(|p| f.value(p)).collect()).collect();
    let data = Dataset::new(defs, columns, response).expect("profile columns are aligned and responses finite");
    Some((data, used))
}

/// Splits the cohort, grows one tree per timepoint on the training
/// patients, derives the residual quantiles from training residuals and
/// validates on the held-out patients.
pub fn train_trajectory_model(
    cohort: &Cohort,
    features: &[ProfileFeature],
    opts: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    if cohort.is_empty() {
        return Err(TrainError::EmptyCohort);
    }
    if features.is_empty() {
        return Err(TrainError::NoFeatures);
    }
    if opts.timepoints.is_empty() {
        return Err(TrainError::NoTimepoints);
    }
    let mut timepoints = opts.timepoints.clone();
    timepoints.sort_unstable();
    timepoints.dedup();
    if let Some(&t) = timepoints.iter().find(|t| !SCHEDULED_MONTHS.contains(t)) {
        return Err(TrainError::BadTimepoint(t));
    }
    let mut features = features.to_vec();
    features.sort();
    features.dedup();
    let (train_rows, test_rows) = split_patients(cohort.len(), opts.split_ratio, opts.seed)?;

    let fitted: Vec<_> = timepoints
        .par_iter()
        .map(|&month| {
            let (data, _) = training_dataset(cohort, &train_rows, &features, month)
                .ok_or(TrainError::TooFewRows { month, rows: 0, minsplit: opts.params.minsplit })?;
            if data.n_rows() < opts.params.minsplit {
                return Err(TrainError::TooFewRows { month, rows: data.n_rows(), minsplit: opts.params.minsplit });
            }
            let tree = grow_tree(&data, &opts.params).map_err(|source| TrainError::Tree { month, source })?;
            let residuals: Vec<f64> = tree.predict(&data).iter().zip(&data.response).map(|(p, o)| o - p).collect();
            Ok((tree, residuals))
        })
        .collect::<Result<_, _>>()?;
    let (trees, residuals): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let residual_quantiles = compute_prediction_intervals(&residuals)?;
    let model = TrajectoryModel {
        timepoints: timepoints.clone(),
        trees,
        residual_quantiles,
        metadata: ModelMetadata {
            format_version: super::FORMAT_VERSION,
            seed: opts.seed,
            split_ratio: opts.split_ratio,
            features: features.clone(),
            n_train: train_rows.len(),
            n_test: test_rows.len(),
            created_at: opts.created_at.clone(),
        },
    };

    let mut heldout = Vec::new();
    let (mut pooled_sq, mut pooled_n) = (0.0, 0usize);
    for (k, &month) in timepoints.iter().enumerate() {
        let Some((data, _)) = training_dataset(cohort, &test_rows, &features, month) else { continue };
        let errors: Vec<f64> =
            model.trees[k].predict(&data).iter().zip(&data.response).map(|(p, o)| o - p).collect();
        let sq: f64 = errors.iter().map(|e| e * e).sum();
        pooled_sq += sq;
        pooled_n += errors.len();
        let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        heldout.push(HeldOutError {
            month,
            n: errors.len(),
            twl_rmse: (sq / errors.len() as f64).sqrt(),
            twl_mad: crate::metrics::median(&mut abs),
        });
    }
    let test_cohort = cohort.subset(&test_rows);
    let mut eval = opts.evaluation.clone();
    eval.timepoints.retain(|t| timepoints.contains(t));
    let report = if test_rows.is_empty() || eval.timepoints.is_empty() {
        None
    } else {
        match evaluate_cohort(&model, &test_cohort, &eval) {
            Ok(r) => Some(r),
            Err(MetricError::Empty) => None,
            Err(e) => return Err(e.into()),
        }
    };
    Ok(TrainOutcome {
        model,
        train_rows,
        test_rows,
        heldout,
        heldout_pooled_twl_rmse: (pooled_n > 0).then(|| (pooled_sq / pooled_n as f64).sqrt()),
        report,
    })
}
