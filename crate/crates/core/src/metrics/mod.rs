//! Prediction-error statistics, bootstrap intervals, agreement analysis and
//! rank tests.

mod bootstrap;
pub mod ols;
mod rank;
mod report;

pub use bootstrap::{bca_interval, BcaInterval};
pub use rank::{kruskal_wallis, mann_whitney_u, KruskalWallis, MannWhitney, EXACT_LIMIT};
pub use report::{
    evaluate_cohort, evaluate_predictions, prediction_rows, render_table, weighted_mean_cell, CellMetrics, Estimate,
    EvaluationOptions, MetricCell, MetricReport, PredictionRow, Stratum, REPORT_TIMEPOINTS, TABLE_GROUPS,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("input is empty")]
    Empty,
    #[error("predicted has {predicted} values, observed has {observed}")]
    LengthMismatch { predicted: usize, observed: usize },
    #[error("observed value at index {0} is not positive")]
    NonPositiveObserved(usize),
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("non-finite input value")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

fn check_pair(predicted: &[f64], observed: &[f64]) -> Result<(), MetricError> {
    if predicted.len() != observed.len() {
        return Err(MetricError::LengthMismatch { predicted: predicted.len(), observed: observed.len() });
    }
    if predicted.is_empty() {
        return Err(MetricError::Empty);
    }
    if predicted.iter().chain(observed).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

/// Median; mean of the middle pair for even lengths. `values` is reordered.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Quantile with linear interpolation between order statistics
/// (`h = (n − 1)p`), on an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)).sqrt()
}

/// Median absolute prediction error, `median |observed − predicted|`.
pub fn mad(predicted: &[f64], observed: &[f64]) -> Result<f64, MetricError> {
    check_pair(predicted, observed)?;
    let mut e: Vec<f64> = predicted.iter().zip(observed).map(|(p, o)| (o - p).abs()).collect();
    Ok(median(&mut e))
}

/// Root mean squared prediction error.
pub fn rmse(predicted: &[f64], observed: &[f64]) -> Result<f64, MetricError> {
    check_pair(predicted, observed)?;
    let e: Vec<f64> = predicted.iter().zip(observed).map(|(p, o)| (o - p).powi(2)).collect();
    Ok(mean(&e).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Mad,
    Rmse,
}

/// Per-patient ratio errors `(observed − predicted) / observed`.
pub fn ratio_errors(predicted: &[f64], observed: &[f64]) -> Result<Vec<f64>, MetricError> {
    check_pair(predicted, observed)?;
    if let Some(i) = observed.iter().position(|o| !(*o > 0.0)) {
        return Err(MetricError::NonPositiveObserved(i));
    }
    Ok(predicted.iter().zip(observed).map(|(p, o)| (o - p) / o).collect())
}

/// MAD or RMSE of per-patient ratio errors, in percent of observed BMI.
pub fn normalized_metric(predicted: &[f64], observed: &[f64], kind: MetricKind) -> Result<f64, MetricError> {
    let mut e = ratio_errors(predicted, observed)?;
    Ok(100.0
        * match kind {
            MetricKind::Mad => {
                e.iter_mut().for_each(|v| *v = v.abs());
                median(&mut e)
            }
            MetricKind::Rmse => (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt(),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub bias: f64,
    pub sd: f64,
    pub loa_lo: f64,
    pub loa_hi: f64,
    /// `(mean of predicted and observed, predicted − observed)` per patient.
    pub pairs: Vec<(f64, f64)>,
}

/// `bias ± 1.96·sd`.
pub fn limits_of_agreement(bias: f64, sd: f64) -> (f64, f64) {
    (bias - 1.96 * sd, bias + 1.96 * sd)
}

/// Agreement of predicted with observed values; differences are
/// `predicted − observed`.
pub fn bland_altman(predicted: &[f64], observed: &[f64]) -> Result<BlandAltman, MetricError> {
    check_pair(predicted, observed)?;
    if predicted.len() < 2 {
        return Err(MetricError::TooFew { needed: 2, got: predicted.len() });
    }
    let d: Vec<f64> = predicted.iter().zip(observed).map(|(p, o)| p - o).collect();
    let bias = mean(&d);
    let sd = sample_sd(&d);
    let (loa_lo, loa_hi) = limits_of_agreement(bias, sd);
    let pairs = predicted.iter().zip(observed).map(|(p, o)| (0.5 * (p + o), p - o)).collect();
    Ok(BlandAltman { bias, sd, loa_lo, loa_hi, pairs })
}

impl BlandAltman {
    /// Two-column `mean<TAB>difference` table with a header row.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("mean\tdifference\n");
        for (m, d) in &self.pairs {
            s.push_str(&format!("{m}\t{d}\n"));
        }
        s
    }
}
