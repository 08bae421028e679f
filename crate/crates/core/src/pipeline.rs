//! End-to-end model development: screening, multiple imputation, LASSO
//! selection pooled over imputations and visits, one CART per visit, and
//! held-out comparison against simpler and heavier models.

use crate::cart::{fit_bagged_ensemble, grow_tree, select_alpha_cv, CartError, Dataset, EnsembleOptions, FeatureKind, TreeParams};
use crate::cohort::{compute_bmi, Cohort, SCHEDULED_MONTHS};
use crate::imputation::{apply_screen, pmm_impute, screen_features, ImputationError, ScreenReport};
use crate::lasso::{baseline_design, fit_lasso, pool_selected_features, LassoError, LassoOptions, PooledSelection};
use crate::metrics::ols::{ols_dropping_dependent, OlsError};
use crate::metrics::{mad, rmse};
use crate::trajectory::{split_patients, train_trajectory_model, training_dataset, ProfileFeature, TrainError, TrainOptions, TrainOutcome};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    /// Columns missing in a larger fraction of patients are dropped.
    pub max_missing_fraction: f64,
    pub imputations: usize,
    pub donor_k: usize,
    pub lasso: LassoOptions,
    /// Visits at which a LASSO is fitted; a feature selected at any of them is kept.
    pub selection_timepoints: Vec<u32>,
    /// Skip selection and train on these features.
    pub features: Option<Vec<ProfileFeature>>,
    pub train: TrainOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            max_missing_fraction: 0.5,
            imputations: 10,
            donor_k: 5,
            lasso: LassoOptions::default(),
            selection_timepoints: SCHEDULED_MONTHS.to_vec(),
            features: None,
            train: TrainOptions::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("imputation: {0}")]
    Imputation(#[from] ImputationError),
    #[error("month {month}, imputation {imputation}: {source}")]
    Lasso { month: u32, imputation: usize, source: LassoError },
    #[error("pooling: {0}")]
    Pool(LassoError),
    #[error("month {0}: fewer than two training patients observed")]
    NoResponse(u32),
    #[error("month {0} is not a scheduled visit")]
    BadTimepoint(u32),
    #[error("no model feature was selected")]
    NothingSelected,
    #[error("training: {0}")]
    Train(#[from] TrainError),
    #[error("comparator `{model}` at month {month}: {message}")]
    Comparator { model: &'static str, month: u32, message: String },
}

/// Outcome of screening and selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub screen: ScreenReport,
    /// Selection frequencies over all imputation × visit fits.
    pub pooled: PooledSelection,
    pub per_timepoint: Vec<(u32, PooledSelection)>,
    /// Selected features that a patient profile carries, used by the model.
    pub model_features: Vec<ProfileFeature>,
    /// Selected features outside the profile, reported but not modelled.
    pub unused: Vec<String>,
}

impl SelectionReport {
    pub fn selected(&self) -> BTreeSet<String> {
        self.pooled.selected()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// `None` when the features were given.
    pub selection: Option<SelectionReport>,
    pub training: TrainOutcome,
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    seed ^ ((a << 32) | b).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Screens and imputes `cohort`, then fits one LASSO per (imputation,
/// visit) on TWL at that visit and pools the selections by union.
pub fn select_features(cohort: &Cohort, opts: &PipelineOptions) -> Result<SelectionReport, PipelineError> {
    if let Some(&t) = opts.selection_timepoints.iter().find(|t| !SCHEDULED_MONTHS.contains(t)) {
        return Err(PipelineError::BadTimepoint(t));
    }
    let screen = screen_features(cohort, opts.max_missing_fraction);
    let screened = apply_screen(cohort, &screen);
    let imputed = pmm_impute(&screened, opts.imputations, opts.donor_k, opts.train.seed)?;
    let designs: Vec<_> = imputed.datasets.iter().map(|d| baseline_design(d, &screen)).collect();

    let mut responses = Vec::new();
    for &month in &opts.selection_timepoints {
        let (rows, y): (Vec<usize>, Vec<f64>) = cohort
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.is_censored_at(month))
            .filter_map(|(i, r)| r.twl_at(month).map(|t| (i, t)))
            .unzip();
        if rows.len() < 2 {
            return Err(PipelineError::NoResponse(month));
        }
        responses.push((month, rows, y));
    }
    let jobs: Vec<(usize, usize)> =
        (0..designs.len()).flat_map(|k| (0..responses.len()).map(move |t| (k, t))).collect();
    let fits = jobs
        .par_iter()
        .map(|&(k, t)| {
            let (month, rows, y) = &responses[t];
            let design = designs[k].select_rows(rows);
            fit_lasso(&design, y, &opts.lasso, mix_seed(opts.train.seed, k as u64, u64::from(*month)))
                .map_err(|source| PipelineError::Lasso { month: *month, imputation: k, source })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let per_timepoint = responses
        .iter()
        .enumerate()
        .map(|(t, (month, _, _))| {
            let group: Vec<_> = jobs.iter().zip(&fits).filter(|((_, tt), _)| *tt == t).map(|(_, f)| f.clone()).collect();
            pool_selected_features(&group).map(|p| (*month, p)).map_err(PipelineError::Pool)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pooled = pool_selected_features(&fits).map_err(PipelineError::Pool)?;
    let (mut model_features, mut unused) = (Vec::new(), Vec::new());
    for name in pooled.selected() {
        match ProfileFeature::from_name(&name) {
            Some(f) => model_features.push(f),
            None => unused.push(name),
        }
    }
    model_features.sort();
    Ok(SelectionReport { screen, pooled, per_timepoint, model_features, unused })
}

/// Selection (unless features are given) followed by training.
pub fn run_pipeline(cohort: &Cohort, opts: &PipelineOptions) -> Result<PipelineOutcome, PipelineError> {
    let (selection, features) = match &opts.features {
        Some(f) => (None, f.clone()),
        None => {
            let (train_rows, _) = split_patients(cohort.len(), opts.train.split_ratio, opts.train.seed)?;
            let s = select_features(&cohort.subset(&train_rows), opts)?;
            let f = s.model_features.clone();
            (Some(s), f)
        }
    };
    if features.is_empty() {
        return Err(PipelineError::NothingSelected);
    }
    let training = train_trajectory_model(cohort, &features, &opts.train)?;
    Ok(PipelineOutcome { selection, training })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Cart,
    PrunedCart,
    RandomForest,
    SimpleRegression,
}

impl Comparator {
    pub const ALL: [Comparator; 4] =
        [Comparator::Cart, Comparator::PrunedCart, Comparator::RandomForest, Comparator::SimpleRegression];

    pub fn name(self) -> &'static str {
        match self {
            Comparator::Cart => "cart",
            Comparator::PrunedCart => "pruned_cart",
            Comparator::RandomForest => "random_forest",
            Comparator::SimpleRegression => "simple_regression",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorOptions {
    pub forest: EnsembleOptions,
    /// Pruned CART grows a full tree with these parameters and picks α by CV.
    pub full_tree: TreeParams,
    pub folds: usize,
}

impl Default for ComparatorOptions {
    fn default() -> Self {
        Self { forest: EnsembleOptions::default(), full_tree: TreeParams { cp: 0.0, ..TreeParams::default() }, folds: 10 }
    }
}

/// Held-out error of one model at one visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorRow {
    pub model: Comparator,
    pub month: u32,
    pub n: usize,
    pub bmi_mad: f64,
    pub bmi_rmse: f64,
    pub twl_mad: f64,
    pub twl_rmse: f64,
}

/// Intercept, numeric columns with NaN set to 0 plus a missing indicator
/// when needed, and treatment-coded categoricals (first level as reference).
fn ols_encode(data: &Dataset, with_missing: &[bool]) -> DMatrix<f64> {
    let n = data.n_rows();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for (j, f) in data.features.iter().enumerate() {
        let x = &data.columns[j];
        match &f.kind {
            FeatureKind::Numeric => {
                cols.push(x.iter().map(|v| if v.is_nan() { 0.0 } else { *v }).collect());
                if with_missing[j] {
                    cols.push(x.iter().map(|v| f64::from(u8::from(v.is_nan()))).collect());
                }
            }
            FeatureKind::Categorical { levels } => {
                for l in 1..levels.len() {
                    cols.push(x.iter().map(|v| f64::from(u8::from(*v == l as f64))).collect());
                }
            }
        }
    }
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

fn error_row(model: Comparator, month: u32, test: &Dataset, cohort: &Cohort, rows: &[usize], twl_hat: &[f64]) -> ComparatorRow {
    let obs_twl = &test.response;
    let bmi = |i: usize, twl: f64| {
        let r = &cohort.records[i];
        compute_bmi(r.weight_kg * (1.0 - twl / 100.0), r.height_m).unwrap_or(f64::NAN)
    };
    let pred_bmi: Vec<f64> = rows.iter().zip(twl_hat).map(|(&i, &t)| bmi(i, t)).collect();
    let obs_bmi: Vec<f64> = rows.iter().zip(obs_twl).map(|(&i, &t)| bmi(i, t)).collect();
    ComparatorRow {
        model,
        month,
        n: rows.len(),
        bmi_mad: mad(&pred_bmi, &obs_bmi).unwrap_or(f64::NAN),
        bmi_rmse: rmse(&pred_bmi, &obs_bmi).unwrap_or(f64::NAN),
        twl_mad: mad(twl_hat, obs_twl).unwrap_or(f64::NAN),
        twl_rmse: rmse(twl_hat, obs_twl).unwrap_or(f64::NAN),
    }
}

/// Refits every comparator on the training patients of `outcome` and
/// scores all of them, and the trained model itself, on its held-out patients.
pub fn compare_models(
    cohort: &Cohort,
    outcome: &TrainOutcome,
    opts: &ComparatorOptions,
) -> Result<Vec<ComparatorRow>, PipelineError> {
    let model = &outcome.model;
    let features = &model.metadata.features;
    let seed = model.metadata.seed;
    let per_month = model
        .timepoints
        .par_iter()
        .enumerate()
        .map(|(k, &month)| -> Result<Vec<ComparatorRow>, PipelineError> {
            let Some((train, _)) = training_dataset(cohort, &outcome.train_rows, features, month) else {
                return Ok(Vec::new());
            };
            let Some((test, rows)) = training_dataset(cohort, &outcome.test_rows, features, month) else {
                return Ok(Vec::new());
            };
            let fail = |model: Comparator, e: &dyn std::fmt::Display| PipelineError::Comparator {
                model: model.name(),
                month,
                message: e.to_string(),
            };
            let mut out = Vec::new();
            out.push(error_row(Comparator::Cart, month, &test, cohort, &rows, &model.trees[k].predict(&test)));

            let pruned = (|| -> Result<_, CartError> {
                let alpha = select_alpha_cv(&train, &opts.full_tree, opts.folds, mix_seed(seed, 1, u64::from(month)))?;
                Ok(grow_tree(&train, &opts.full_tree)?.pruned(alpha))
            })()
            .map_err(|e| fail(Comparator::PrunedCart, &e))?;
            out.push(error_row(Comparator::PrunedCart, month, &test, cohort, &rows, &pruned.predict(&test)));

            let forest = fit_bagged_ensemble(&train, &opts.forest, mix_seed(seed, 2, u64::from(month)))
                .map_err(|e| fail(Comparator::RandomForest, &e))?;
            out.push(error_row(Comparator::RandomForest, month, &test, cohort, &rows, &forest.predict(&test)));

            let with_missing: Vec<bool> = train.columns.iter().map(|c| c.iter().any(|v| v.is_nan())).collect();
            let beta = ols_dropping_dependent(&ols_encode(&train, &with_missing), &train.response)
                .map_err(|e: OlsError| fail(Comparator::SimpleRegression, &e))?;
            let x = ols_encode(&test, &with_missing);
            let ols_hat: Vec<f64> =
                (0..x.nrows()).map(|i| (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum()).collect();
            out.push(error_row(Comparator::SimpleRegression, month, &test, cohort, &rows, &ols_hat));
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_month.into_iter().flatten().collect())
}

/// Tab-separated comparator table, one row per model and visit.
pub fn comparators_tsv(rows: &[ComparatorRow]) -> String {
    let mut out = String::from("model\tmonth\tn\tbmi_mad\tbmi_rmse\ttwl_mad\ttwl_rmse\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\n",
            r.model.name(),
            r.month,
            r.n,
            r.bmi_mad,
            r.bmi_rmse,
            r.twl_mad,
            r.twl_rmse
        ));
    }
    out
}
