//! Ordinary least squares via Householder QR, the "simple regression" comparator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OlsError {
    #[error("need more rows ({n}) than columns ({p})")]
    TooFewRows { n: usize, p: usize },
    #[error("design is rank deficient: {0:?} collinear with preceding columns")]
    RankDeficient(Vec<String>),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in design or response")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
}

impl OlsFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let b = DVector::from_column_slice(&self.coefficients);
        (x * b).iter().copied().collect()
    }
}

/// Relative size below which an R diagonal entry marks a dependent column.
const RANK_TOL: f64 = 1e-10;

/// Least-squares fit of `y` on the columns of `x` (no implicit intercept).
pub fn ols_baseline(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<OlsFit, OlsError> {
    let (n, p) = x.shape();
    if y.len() != n || names.len() != p {
        return Err(OlsError::Dimension(format!(
            "x is {n}x{p}, y has {} entries, {} names",
            y.len(),
            names.len()
        )));
    }
    if n <= p {
        return Err(OlsError::TooFewRows { n, p });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(OlsError::NonFinite);
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| x.column(j).norm()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let dependent: Vec<String> = (0..p)
        .filter(|&j| r[(j, j)].abs() <= RANK_TOL * scale.max(x.column(j).norm()))
        .map(|j| names[j].clone())
        .collect();
    if !dependent.is_empty() {
        return Err(OlsError::RankDeficient(dependent));
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| OlsError::RankDeficient(vec!["<singular R>".into()]))?;
    Ok(OlsFit { names: names.to_vec(), coefficients: beta.iter().copied().collect() })
}

/// Like [`ols_baseline`] but silently drops dependent columns (their
/// coefficient is fixed at 0). Used where the design is data-driven.
pub fn ols_dropping_dependent(x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>, OlsError> {
    let p = x.ncols();
    let names: Vec<String> = (0..p).map(|j| j.to_string()).collect();
    let mut keep: Vec<usize> = (0..p).collect();
    loop {
        let sub = x.select_columns(&keep);
        let sub_names: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
        match ols_baseline(&sub, y, &sub_names) {
            Ok(fit) => {
                let mut full = vec![0.0; p];
                for (k, &j) in keep.iter().enumerate() {
                    full[j] = fit.coefficients[k];
                }
                return Ok(full);
            }
            Err(OlsError::RankDeficient(cols)) => {
                let drop: usize = cols[0].parse().map_err(|_| OlsError::RankDeficient(cols.clone()))?;
                keep.retain(|&j| j != drop);
                if keep.is_empty() {
                    return Ok(vec![0.0; p]);
                }
            }
            Err(e) => return Err(e),
        }
    }
}
