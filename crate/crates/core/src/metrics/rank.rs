use super::MetricError;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Exact p-values are computed when `n_a · n_b` is at most this.
pub const EXACT_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// `R_a − n_a(n_a + 1)/2`: pairs with a > b, plus half of ties.
    pub u: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: usize,
    pub p: f64,
}

/// Midranks (1-based) of `values` and the tie-group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

fn tie_term(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum()
}

fn check(values: &[f64]) -> Result<(), MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

/// Two-sided exact p for the doubled rank sum `obs2` of `n_a` items drawn
/// from `doubled` (integer doubled midranks), by dynamic programming over
/// subset sizes and sums.
fn exact_p(doubled: &[usize], n_a: usize, obs2: usize) -> f64 {
    let total: usize = doubled.iter().sum();
    // ways[k][s]: subsets of size k with doubled rank sum s
    let mut ways = vec![vec![0.0f64; total + 1]; n_a + 1];
    ways[0][0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        reach += r;
        for k in (1..=n_a).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (r..=reach).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    let n = doubled.len();
    // doubled expectation n_a(N + 1) is an integer
    let e2 = (n_a * (n + 1)) as i64;
    let dev = (obs2 as i64 - e2).abs();
    let all: f64 = ways[n_a].iter().sum();
    let extreme: f64 =
        ways[n_a].iter().enumerate().filter(|(s, _)| (*s as i64 - e2).abs() >= dev).map(|(_, w)| w).sum();
    (extreme / all).min(1.0)
}

/// Mann-Whitney U test with midranks for ties.
///
/// The p-value is exact (permutation distribution of the midrank sum) when
/// `n_a · n_b ≤ 400`, otherwise from the tie-corrected normal approximation
/// without continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, MetricError> {
    check(a)?;
    check(b)?;
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let ra: f64 = ranks[..na].iter().sum();
    let u = ra - (na * (na + 1)) as f64 / 2.0;
    if na * nb <= EXACT_LIMIT {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let obs2 = doubled[..na].iter().sum();
        return Ok(MannWhitney { u, p_two_sided: exact_p(&doubled, na, obs2), exact: true });
    }
    let n = (na + nb) as f64;
    let mu = (na * nb) as f64 / 2.0;
    let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - tie_term(&ties) / (n * (n - 1.0)));
    let p = if var > 0.0 {
        let z = (u - mu) / var.sqrt();
        (2.0 * Normal::new(0.0, 1.0).expect("standard normal").cdf(-z.abs())).min(1.0)
    } else {
        1.0
    };
    Ok(MannWhitney { u, p_two_sided: p, exact: false })
}

/// Kruskal-Wallis H with tie correction; p from χ² with k − 1 degrees of freedom.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KruskalWallis, MetricError> {
    if groups.len() < 2 {
        return Err(MetricError::TooFew { needed: 2, got: groups.len() });
    }
    for g in groups {
        check(g)?;
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let (ranks, ties) = midranks(&pooled);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let df = groups.len() - 1;
    let correction = 1.0 - tie_term(&ties) / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(KruskalWallis { h: 0.0, df, p: 1.0 });
    }
    let h = ((12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction).max(0.0);
    let p = 1.0 - ChiSquared::new(df as f64).expect("positive df").cdf(h);
    Ok(KruskalWallis { h, df, p })
}
