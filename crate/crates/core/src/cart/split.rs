use super::{Dataset, Direction, FeatureKind, SplitCondition};
use std::cmp::Ordering;

/// Best primary split at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub condition: SplitCondition,
    pub improvement: f64,
}

/// Candidates within this relative distance of the best are ties.
pub(crate) const TIE_TOLERANCE: f64 = 1e-10;

/// Up to this many observed levels every bipartition is scored; above it
/// only partitions contiguous in mean-response order.
const EXHAUSTIVE_LEVELS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
enum OrderKey {
    Threshold(f64),
    Subset(Vec<usize>),
}

impl OrderKey {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (OrderKey::Threshold(a), OrderKey::Threshold(b)) => a.total_cmp(b),
            (OrderKey::Subset(a), OrderKey::Subset(b)) => a.len().cmp(&b.len()).then_with(|| a.cmp(b)),
            _ => Ordering::Equal,
        }
    }
}

struct Candidate {
    feature: usize,
    key: OrderKey,
    improvement: f64,
    condition: SplitCondition,
}

/// A threshold strictly above `lo` and at most `hi`, so that `lo < t <= hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

fn numeric_candidates(x: &[f64], y: &[f64], rows: &[usize], feature: usize, minbucket: usize, out: &mut Vec<Candidate>) {
    let mut obs: Vec<(f64, f64)> = rows.iter().filter(|&&i| !x[i].is_nan()).map(|&i| (x[i], y[i])).collect();
    let m = obs.len();
    if m < 2 * minbucket || m < 2 {
        return;
    }
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mean = obs.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let mut s_left = 0.0;
    for i in 0..m - 1 {
        s_left += obs[i].1 - mean;
        let n_l = i + 1;
        let n_r = m - n_l;
        if n_l < minbucket {
            continue;
        }
        if n_r < minbucket {
            break;
        }
        if obs[i].0 >= obs[i + 1].0 {
            continue;
        }
        let improvement = s_left * s_left * m as f64 / (n_l as f64 * n_r as f64);
        let t = midpoint(obs[i].0, obs[i + 1].0);
        out.push(Candidate {
            feature,
            key: OrderKey::Threshold(t),
            improvement,
            condition: SplitCondition::Threshold { threshold: t, below: Direction::Left },
        });
    }
}

/// Orients a bipartition of levels: the smaller set goes left; on equal
/// sizes the set holding the lowest level code goes left.
pub(crate) fn orient(mut a: Vec<usize>, mut b: Vec<usize>) -> (Vec<usize>, Vec<usize>) {
    a.sort_unstable();
    b.sort_unstable();
    let a_left = match a.len().cmp(&b.len()) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a[0] < b[0],
    };
    if a_left {
        (a, b)
    } else {
        (b, a)
    }
}

fn categorical_candidates(
    x: &[f64],
    y: &[f64],
    rows: &[usize],
    feature: usize,
    n_levels: usize,
    minbucket: usize,
    out: &mut Vec<Candidate>,
) {
    let mut count = vec![0usize; n_levels];
    let mut sum = vec![0.0; n_levels];
    for &i in rows {
        if !x[i].is_nan() {
            let c = x[i] as usize;
            count[c] += 1;
            sum[c] += y[i];
        }
    }
    let m: usize = count.iter().sum();
    if m < 2 * minbucket || m < 2 {
        return;
    }
    let mean = sum.iter().sum::<f64>() / m as f64;
    let mut present: Vec<usize> = (0..n_levels).filter(|&c| count[c] > 0).collect();
    if present.len() < 2 {
        return;
    }
    let centered = |c: usize| sum[c] - mean * count[c] as f64;
    let mut push = |a: Vec<usize>, b: Vec<usize>, s_left: f64, n_l: usize| {
        let n_r = m - n_l;
        if n_l < minbucket || n_r < minbucket {
            return;
        }
        let improvement = s_left * s_left * m as f64 / (n_l as f64 * n_r as f64);
        let (left, right) = orient(a, b);
        out.push(Candidate {
            feature,
            key: OrderKey::Subset(left.clone()),
            improvement,
            condition: SplitCondition::Categories { left, right },
        });
    };
    let k = present.len();
    if k <= EXHAUSTIVE_LEVELS {
        // every bipartition once: the first present level stays on side `a`
        for mask in 0u32..(1 << (k - 1)) - 1 {
            let mut a = vec![present[0]];
            let mut b = Vec::new();
            for (bit, &c) in present[1..].iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    a.push(c);
                } else {
                    b.push(c);
                }
            }
            let s_left: f64 = a.iter().map(|&c| centered(c)).sum();
            let n_l = a.iter().map(|&c| count[c]).sum();
            push(a, b, s_left, n_l);
        }
    } else {
        let level_mean = |c: usize| sum[c] / count[c] as f64;
        present.sort_by(|&a, &b| level_mean(a).total_cmp(&level_mean(b)).then(a.cmp(&b)));
        let mut s_left = 0.0;
        let mut n_l = 0;
        for j in 0..k - 1 {
            s_left += centered(present[j]);
            n_l += count[present[j]];
            push(present[..=j].to_vec(), present[j + 1..].to_vec(), s_left, n_l);
        }
    }
}

/// Searches `features` for the split of `rows` with the largest SSE
/// reduction, each feature scored on the rows where it is observed.
///
/// Ties (within a relative 1e-10) go to the lowest feature index, then the
/// lowest threshold, then the categorical left set with fewest levels.
/// Returns `None` when no split leaves `minbucket` observed rows on each
/// side or no split reduces the SSE.
pub fn find_best_split(data: &Dataset, rows: &[usize], features: &[usize], minbucket: usize) -> Option<SplitCandidate> {
    let mut candidates = Vec::new();
    for &f in features {
        let x = &data.columns[f];
        match &data.features[f].kind {
            FeatureKind::Numeric => numeric_candidates(x, &data.response, rows, f, minbucket.max(1), &mut candidates),
            FeatureKind::Categorical { levels } => {
                categorical_candidates(x, &data.response, rows, f, levels.len(), minbucket.max(1), &mut candidates)
            }
        }
    }
    let best = candidates.iter().map(|c| c.improvement).fold(0.0, f64::max);
    if !(best > 0.0) {
        return None;
    }
    let floor = best * (1.0 - TIE_TOLERANCE);
    candidates
        .into_iter()
        .filter(|c| c.improvement >= floor)
        .min_by(|a, b| a.feature.cmp(&b.feature).then_with(|| a.key.cmp(&b.key)))
        .map(|c| SplitCandidate { feature: c.feature, condition: c.condition, improvement: c.improvement })
}
