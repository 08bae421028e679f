//! Shape-preserving piecewise-cubic Hermite interpolation (PCHIP).

use serde::{Deserialize, Serialize};

/// Month spacing of the dense trajectory samples.
pub const GRID_STEP: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SmoothError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("{0} points but {1} values")]
    LengthMismatch(usize, usize),
    #[error("duplicate month {0}")]
    DuplicateMonth(f64),
    #[error("months must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("month 0 anchor is missing")]
    MissingAnchor,
    #[error("non-finite knot")]
    NonFinite,
    #[error("grid step must be positive, got {0}")]
    BadStep(f64),
}

/// Monotone cubic interpolant through `(xs, ys)`.
///
/// Interior slopes are the weighted harmonic mean of the adjacent secant
/// slopes (zero at local extrema); end slopes use the one-sided three-point
/// formula, limited to keep the end intervals monotone. Outside the knot
/// range the end values are held constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

impl Pchip {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self, SmoothError> {
        if xs.len() != ys.len() {
            return Err(SmoothError::LengthMismatch(xs.len(), ys.len()));
        }
        let n = xs.len();
        if n < 2 {
            return Err(SmoothError::TooFewPoints(n));
        }
        if xs.iter().chain(ys).any(|v| !v.is_finite()) {
            return Err(SmoothError::NonFinite);
        }
        for k in 1..n {
            if xs[k] == xs[k - 1] {
                return Err(SmoothError::DuplicateMonth(xs[k]));
            }
            if xs[k] < xs[k - 1] {
                return Err(SmoothError::NotIncreasing(k));
            }
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes = vec![delta[0]; 2];
        } else {
            for k in 1..n - 1 {
                let (a, b) = (delta[k - 1], delta[k]);
                if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
                    continue;
                }
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                slopes[k] = (w1 + w2) / (w1 / a + w2 / b);
            }
            slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { xs: xs.to_vec(), ys: ys.to_vec(), slopes })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(k) => return self.ys[k],
            Err(k) => k - 1,
        };
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * self.slopes[k]
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * self.slopes[k + 1];
        // exact arithmetic keeps v within the interval's knot values; remove rounding excursions
        v.clamp(y0.min(y1), y0.max(y1))
    }
}

/// `0, step, 2·step, …, end`.
pub fn month_grid(end: f64, step: f64) -> Result<Vec<f64>, SmoothError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(SmoothError::BadStep(step));
    }
    let count = (end / step).round() as usize;
    Ok((0..=count).map(|k| k as f64 * step).collect())
}

/// Samples the PCHIP curve through anchored knots on a regular month grid
/// from 0 to the last knot.
pub fn smooth_trajectory(months: &[f64], values: &[f64], step: f64) -> Result<Vec<(f64, f64)>, SmoothError> {
    let p = Pchip::new(months, values)?;
    if months[0] != 0.0 {
        return Err(SmoothError::MissingAnchor);
    }
    Ok(month_grid(months[months.len() - 1], step)?.into_iter().map(|m| (m, p.eval(m))).collect())
}
