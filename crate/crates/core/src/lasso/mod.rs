//! L1-penalized least squares for feature selection.
//!
//! The objective on standardized columns is
//! `(1/2n)·‖y − Xβ‖² + λ·‖β‖₁`, minimized by cyclic coordinate descent with
//! covariance updates, an active-set inner loop and warm starts along a
//! decreasing λ path.

mod cv;
mod design;
mod path;

pub use cv::{cv_select_lambda, CvCurve, LambdaRule};
pub use design::{baseline_design, Design};
pub use path::{
    default_lambda_path, fit_lasso_path, kkt_violation, lambda_max, objective, soft_threshold, CdOptions, LassoPath,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LassoError {
    #[error("column {column} is not standardized (mean {mean:.3e}, sd {sd:.6})")]
    NotStandardized { column: usize, mean: f64, sd: f64 },
    #[error("response is not centered (mean {0:.3e})")]
    NotCentered(f64),
    #[error("non-finite value in design or response")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("lambda path must be positive and strictly decreasing")]
    BadPath,
    #[error("fold {fold} has {size} observations; at least 2 are required")]
    FoldTooSmall { fold: usize, size: usize },
    #[error("feature dictionaries differ between fits")]
    MismatchedFeatures,
    #[error("no fits to pool")]
    Empty,
}

/// Per-column centering and scaling (population standard deviation).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    pub fn fit(x: &DMatrix<f64>, rows: Option<&[usize]>) -> Self {
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..x.nrows()).collect();
                &all
            }
        };
        let n = rows.len() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut sds = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            let mean = rows.iter().map(|&i| col[i]).sum::<f64>() / n;
            let var = rows.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / n;
            means.push(mean);
            sds.push(var.sqrt());
        }
        Self { means, sds }
    }

    /// Columns with positive spread; constant columns cannot enter the model.
    pub fn usable_columns(&self) -> Vec<usize> {
        (0..self.sds.len()).filter(|&j| self.sds[j] > 1e-12 * (1.0 + self.means[j].abs())).collect()
    }

    /// Standardized copy of `columns` restricted to `rows`.
    pub fn transform(&self, x: &DMatrix<f64>, rows: &[usize], columns: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), columns.len(), |i, k| {
            let j = columns[k];
            (x[(rows[i], j)] - self.means[j]) / self.sds[j]
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LassoFit {
    pub feature_names: Vec<String>,
    pub column_names: Vec<String>,
    /// Index into `feature_names` for each design column.
    pub column_feature: Vec<usize>,
    pub standardization: Standardization,
    pub y_mean: f64,
    pub lambda_path: Vec<f64>,
    /// `lambda_path.len()` rows of standardized-scale coefficients, one per design column.
    pub coefficients: Vec<Vec<f64>>,
    /// Original-scale intercept at each λ.
    pub intercepts: Vec<f64>,
    pub cv: CvCurve,
    pub lambda_selected: f64,
    pub selected_index: usize,
    pub selected_features: BTreeSet<String>,
}

impl LassoFit {
    /// Original-scale coefficients at path index `k`.
    pub fn original_coefficients(&self, k: usize) -> Vec<f64> {
        self.coefficients[k]
            .iter()
            .zip(&self.standardization.sds)
            .map(|(b, sd)| if *sd > 0.0 { b / sd } else { 0.0 })
            .collect()
    }

    pub fn predict_row(&self, k: usize, row: &[f64]) -> f64 {
        self.intercepts[k] + self.original_coefficients(k).iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    pub folds: usize,
    pub rule: LambdaRule,
    pub path_length: usize,
    pub path_ratio: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { folds: 10, rule: LambdaRule::OneSe, path_length: 100, path_ratio: 1e-3 }
    }
}

/// Standardizes `design`, fits the λ path and selects λ by K-fold CV.
pub fn fit_lasso(design: &Design, y: &[f64], opts: &LassoOptions, seed: u64) -> Result<LassoFit, LassoError> {
    let x = &design.matrix;
    let n = x.nrows();
    if y.len() != n {
        return Err(LassoError::Dimension(format!("design has {n} rows, response {}", y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(LassoError::NonFinite);
    }
    let rows: Vec<usize> = (0..n).collect();
    let std = Standardization::fit(x, None);
    let usable = std.usable_columns();
    let xs = std.transform(x, &rows, &usable);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let lambdas = default_lambda_path(lambda_max(&xs, &yc), opts.path_length, opts.path_ratio);
    let path = fit_lasso_path(&xs, &yc, Some(&lambdas), &CdOptions::default())?;
    let cv = cv_select_lambda(x, y, &lambdas, opts.folds, seed, opts.rule)?;

    let p = x.ncols();
    let coefficients: Vec<Vec<f64>> = path
        .coefficients
        .iter()
        .map(|b| {
            let mut full = vec![0.0; p];
            for (k, &j) in usable.iter().enumerate() {
                full[j] = b[k];
            }
            full
        })
        .collect();
    let mut fit = LassoFit {
        feature_names: design.feature_names.clone(),
        column_names: design.column_names.clone(),
        column_feature: design.column_feature.clone(),
        standardization: std,
        y_mean,
        lambda_path: lambdas,
        coefficients,
        intercepts: Vec::new(),
        lambda_selected: cv.lambda_selected,
        selected_index: cv.selected_index,
        cv,
        selected_features: BTreeSet::new(),
    };
    fit.intercepts = (0..fit.lambda_path.len())
        .map(|k| {
            let b = fit.original_coefficients(k);
            y_mean - b.iter().zip(&fit.standardization.means).map(|(b, m)| b * m).sum::<f64>()
        })
        .collect();
    fit.selected_features = fit.coefficients[fit.selected_index]
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| fit.feature_names[fit.column_feature[j]].clone())
        .collect();
    Ok(fit)
}

/// Union of selections with the fraction of fits selecting each feature.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PooledSelection {
    pub fits: usize,
    pub frequency: BTreeMap<String, f64>,
}

impl PooledSelection {
    pub fn selected(&self) -> BTreeSet<String> {
        self.frequency.keys().cloned().collect()
    }

    pub fn merge(&mut self, other: &PooledSelection) {
        let total = self.fits + other.fits;
        let mut merged = BTreeMap::new();
        for name in self.frequency.keys().chain(other.frequency.keys()) {
            let a = self.frequency.get(name).copied().unwrap_or(0.0) * self.fits as f64;
            let b = other.frequency.get(name).copied().unwrap_or(0.0) * other.fits as f64;
            merged.insert(name.clone(), (a + b) / total as f64);
        }
        self.fits = total;
        self.frequency = merged;
    }
}

pub fn pool_selected_features(fits: &[LassoFit]) -> Result<PooledSelection, LassoError> {
    let first = fits.first().ok_or(LassoError::Empty)?;
    if fits.iter().any(|f| f.feature_names != first.feature_names) {
        return Err(LassoError::MismatchedFeatures);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for f in fits {
        for name in &f.selected_features {
            *counts.entry(name.clone()).or_default() += 1;
        }
    }
    Ok(PooledSelection {
        fits: fits.len(),
        frequency: counts.into_iter().map(|(k, c)| (k, c as f64 / fits.len() as f64)).collect(),
    })
}
