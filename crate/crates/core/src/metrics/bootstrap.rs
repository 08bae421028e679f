use super::{quantile_sorted, MetricError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcaInterval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    /// Bias correction.
    pub z0: f64,
    /// Jackknife acceleration.
    pub acceleration: f64,
    /// Adjusted percentile levels used for `lo` and `hi`.
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// Every bootstrap replicate equalled the estimate; `lo = hi = estimate`.
    pub degenerate: bool,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Bias-corrected and accelerated bootstrap interval for `statistic`.
///
/// Replicate `r` resamples with its own ChaCha8 stream of `seed`, so the
/// interval does not depend on the thread count. `z0` is the normal quantile
/// of the fraction of replicates below the estimate (ties count one half);
/// the acceleration comes from the leave-one-out jackknife.
pub fn bca_interval<F>(data: &[f64], statistic: F, b: usize, level: f64, seed: u64) -> Result<BcaInterval, MetricError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = data.len();
    if n < 2 {
        return Err(MetricError::TooFew { needed: 2, got: n });
    }
    if b < 100 {
        return Err(MetricError::Parameter(format!("B must be at least 100, got {b}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::Parameter(format!("level must be in (0, 1), got {level}")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let estimate = statistic(data);
    let mut reps: Vec<f64> = (0..b)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                for slot in buf.iter_mut() {
                    *slot = data[rng.random_range(0..n)];
                }
                statistic(buf)
            },
        )
        .collect();
    let point = |degenerate| BcaInterval {
        estimate,
        lo: estimate,
        hi: estimate,
        z0: 0.0,
        acceleration: 0.0,
        alpha_lo: 0.5,
        alpha_hi: 0.5,
        degenerate,
    };
    if reps.iter().all(|r| *r == estimate) {
        return Ok(point(true));
    }
    reps.sort_by(f64::total_cmp);

    let below = reps.iter().filter(|r| **r < estimate).count() as f64;
    let equal = reps.iter().filter(|r| **r == estimate).count() as f64;
    let frac = ((below + 0.5 * equal) / b as f64).clamp(0.5 / b as f64, 1.0 - 0.5 / b as f64);
    let norm = std_normal();
    let z0 = norm.inverse_cdf(frac);

    let jack: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n - 1),
            |buf, i| {
                buf.clear();
                buf.extend(data.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v));
                statistic(buf)
            },
        )
        .collect();
    let jbar = jack.iter().sum::<f64>() / n as f64;
    let num: f64 = jack.iter().map(|t| (jbar - t).powi(3)).sum();
    let den: f64 = jack.iter().map(|t| (jbar - t).powi(2)).sum();
    let acceleration = if den > 0.0 { num / (6.0 * den.powf(1.5)) } else { 0.0 };

    let tail = (1.0 - level) / 2.0;
    let adjust = |z: f64| {
        let s = z0 + z;
        norm.cdf(z0 + s / (1.0 - acceleration * s))
    };
    let alpha_lo = adjust(norm.inverse_cdf(tail));
    let alpha_hi = adjust(norm.inverse_cdf(1.0 - tail));
    Ok(BcaInterval {
        estimate,
        lo: quantile_sorted(&reps, alpha_lo),
        hi: quantile_sorted(&reps, alpha_hi),
        z0,
        acceleration,
        alpha_lo,
        alpha_hi,
        degenerate: false,
    })
}
