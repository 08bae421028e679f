use super::LassoError;
use nalgebra::{DMatrix, DVector};

/// `sign(z)·max(|z| − γ, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdOptions {
    pub max_sweeps: usize,
    /// Converged when no coefficient moves more than this in a full sweep.
    pub tolerance: f64,
    /// Sweeping continues past `tolerance` until the KKT residual is below this.
    pub kkt_tolerance: f64,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self { max_sweeps: 10_000, tolerance: 1e-7, kkt_tolerance: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    /// Full plus active-set sweeps used at each λ.
    pub sweeps: Vec<usize>,
}

/// Smallest λ for which the zero vector is optimal: `max_j |X_jᵀy| / n`.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|j| x.column(j).iter().zip(y).map(|(a, b)| a * b).sum::<f64>().abs() / n)
        .fold(0.0, f64::max)
}

/// `count` log-spaced values from `lambda_max` down to `ratio · lambda_max`.
pub fn default_lambda_path(lambda_max: f64, count: usize, ratio: f64) -> Vec<f64> {
    let top = if lambda_max > 0.0 { lambda_max } else { 1e-12 };
    if count == 1 {
        return vec![top];
    }
    let step = ratio.ln() / (count - 1) as f64;
    (0..count).map(|k| top * (step * k as f64).exp()).collect()
}

/// `(1/2n)‖y − Xβ‖² + λ‖β‖₁`, computed from residuals.
pub fn objective(x: &DMatrix<f64>, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let r = DVector::from_column_slice(y) - x * DVector::from_column_slice(beta);
    r.norm_squared() / (2.0 * x.nrows() as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Largest violation of the optimality conditions, computed from residuals:
/// `|X_jᵀr|/n ≤ λ` for zero coefficients and `X_jᵀr/n = λ·sign(β_j)` otherwise.
pub fn kkt_violation(x: &DMatrix<f64>, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let r = DVector::from_column_slice(y) - x * DVector::from_column_slice(beta);
    (0..x.ncols())
        .map(|j| {
            let g = x.column(j).dot(&r) / n;
            if beta[j] == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * beta[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Gram-form problem: `G = XᵀX/n`, `c = Xᵀy/n`.
pub(crate) struct Gram {
    g: DMatrix<f64>,
    c: Vec<f64>,
}

impl Gram {
    pub(crate) fn new(x: &DMatrix<f64>, y: &[f64]) -> Self {
        let n = x.nrows() as f64;
        let g = x.transpose() * x / n;
        let c = (x.transpose() * DVector::from_column_slice(y) / n).iter().copied().collect();
        Self { g, c }
    }

    fn p(&self) -> usize {
        self.c.len()
    }

    /// Objective minus the constant `yᵀy/2n`.
    pub(crate) fn reduced_objective(&self, beta: &[f64], lambda: f64) -> f64 {
        let b = DVector::from_column_slice(beta);
        let quad = 0.5 * b.dot(&(&self.g * &b));
        quad - self.c.iter().zip(beta).map(|(c, b)| c * b).sum::<f64>() + lambda * beta.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn kkt(&self, beta: &[f64], gb: &[f64], lambda: f64) -> f64 {
        (0..self.p())
            .map(|j| {
                let g = self.c[j] - gb[j];
                if beta[j] == 0.0 {
                    (g.abs() - lambda).max(0.0)
                } else {
                    (g - lambda * beta[j].signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// One coordinate update; returns the absolute change.
    fn update(&self, j: usize, beta: &mut [f64], gb: &mut [f64], lambda: f64) -> f64 {
        let gjj = self.g[(j, j)];
        if gjj <= 0.0 {
            return 0.0;
        }
        let z = self.c[j] - gb[j] + gjj * beta[j];
        let new = soft_threshold(z, lambda) / gjj;
        let delta = new - beta[j];
        if delta != 0.0 {
            beta[j] = new;
            for (k, v) in gb.iter_mut().enumerate() {
                *v += delta * self.g[(k, j)];
            }
        }
        delta.abs()
    }

    /// Coordinate descent at a single λ starting from `beta`. Returns the
    /// number of sweeps. `trace` receives the objective after each sweep.
    pub(crate) fn solve(&self, lambda: f64, beta: &mut [f64], opts: &CdOptions, mut trace: Option<&mut Vec<f64>>) -> usize {
        let p = self.p();
        let mut gb: Vec<f64> = (0..p).map(|k| (0..p).map(|j| self.g[(k, j)] * beta[j]).sum()).collect();
        let mut sweeps = 0;
        while sweeps < opts.max_sweeps {
            let mut max_delta = 0.0f64;
            for j in 0..p {
                max_delta = max_delta.max(self.update(j, beta, &mut gb, lambda));
            }
            sweeps += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.reduced_objective(beta, lambda));
            }
            if max_delta < opts.tolerance && self.kkt(beta, &gb, lambda) < opts.kkt_tolerance {
                break;
            }
            // Iterate on the active set until it settles, then re-check all coordinates.
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            while sweeps < opts.max_sweeps {
                let mut inner = 0.0f64;
                for &j in &active {
                    inner = inner.max(self.update(j, beta, &mut gb, lambda));
                }
                sweeps += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(self.reduced_objective(beta, lambda));
                }
                if inner < opts.tolerance {
                    break;
                }
            }
        }
        sweeps
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &[f64]) -> Result<(), LassoError> {
    let n = x.nrows();
    if y.len() != n {
        return Err(LassoError::Dimension(format!("design has {n} rows, response {}", y.len())));
    }
    if n == 0 {
        return Err(LassoError::Dimension("empty design".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(LassoError::NonFinite);
    }
    let nf = n as f64;
    for j in 0..x.ncols() {
        let col = x.column(j);
        let mean = col.sum() / nf;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
        if mean.abs() > 1e-6 || !(0.99..=1.01).contains(&sd) {
            return Err(LassoError::NotStandardized { column: j, mean, sd });
        }
    }
    let y_mean = y.iter().sum::<f64>() / nf;
    let y_scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if y_mean.abs() > 1e-9 * (1.0 + y_scale) {
        return Err(LassoError::NotCentered(y_mean));
    }
    Ok(())
}

/// Fits the LASSO path on a standardized design and centered response.
///
/// Without an explicit path, 100 log-spaced values from `lambda_max` down to
/// `1e-3 · lambda_max` are used. Each solution warm-starts the next.
pub fn fit_lasso_path(x: &DMatrix<f64>, y: &[f64], lambdas: Option<&[f64]>, opts: &CdOptions) -> Result<LassoPath, LassoError> {
    check_inputs(x, y)?;
    let lambdas = match lambdas {
        Some(l) => l.to_vec(),
        None => default_lambda_path(lambda_max(x, y), 100, 1e-3),
    };
    if lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LassoError::BadPath);
    }
    Ok(fit_path_unchecked(&Gram::new(x, y), &lambdas, opts))
}

pub(crate) fn fit_path_unchecked(gram: &Gram, lambdas: &[f64], opts: &CdOptions) -> LassoPath {
    let mut beta = vec![0.0; gram.p()];
    let mut coefficients = Vec::with_capacity(lambdas.len());
    let mut sweeps = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        sweeps.push(gram.solve(lambda, &mut beta, opts, None));
        coefficients.push(beta.clone());
    }
    LassoPath { lambdas: lambdas.to_vec(), coefficients, sweeps }
}
