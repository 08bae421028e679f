use crate::Verdict;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::BTreeSet;
use wtraj_core::cart::{
    find_best_split, grow_tree, Dataset, Direction, FeatureDef, FeatureKind, RegressionTree, SplitCondition, TreeParams,
};

const DATASETS: u64 = 500;
const TIE: f64 = 1e-10;

fn sse(y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean) * (v - mean)).sum()
}

fn random_dataset(seed: u64) -> (Dataset, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(8..=50);
    let p = rng.random_range(1..=5);
    let missing = if seed % 2 == 1 { 0.15 } else { 0.0 };
    let mut features = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for j in 0..p {
        let name = format!("f{j}");
        let col: Vec<f64> = match rng.random_range(0..3) {
            0 => {
                features.push(FeatureDef::numeric(&name));
                (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()
            }
            1 => {
                features.push(FeatureDef::numeric(&name));
                (0..n).map(|_| f64::from(rng.random_range(0..6))).collect()
            }
            _ => {
                let k = rng.random_range(2..=6);
                let levels: Vec<String> = (0..k).map(|l| format!("L{l}")).collect();
                let refs: Vec<&str> = levels.iter().map(String::as_str).collect();
                features.push(FeatureDef::categorical(&name, &refs));
                (0..n).map(|_| f64::from(rng.random_range(0..k as u32))).collect()
            }
        };
        columns.push(col.into_iter().map(|v| if rng.random_bool(missing) { f64::NAN } else { v }).collect());
    }
    let integer_y = rng.random_bool(0.3);
    let response: Vec<f64> = (0..n)
        .map(|i| {
            if integer_y {
                f64::from(rng.random_range(0..5))
            } else {
                let step = if columns[0][i] < 0.5 { 2.0 } else { 0.0 };
                step + rng.sample::<f64, _>(StandardNormal)
            }
        })
        .collect();
    let minbucket = rng.random_range(1..=4);
    (Dataset::new(features, columns, response).unwrap(), minbucket)
}

#[derive(Debug, Clone, PartialEq)]
enum Oracle {
    /// Consecutive distinct values the threshold separates.
    Threshold(f64, f64),
    Subset(Vec<usize>, Vec<usize>),
}

struct Scored {
    feature: usize,
    split: Oracle,
    improvement: f64,
}

fn tie_order(a: &Scored, b: &Scored) -> Ordering {
    a.feature.cmp(&b.feature).then_with(|| match (&a.split, &b.split) {
        (Oracle::Threshold(x, _), Oracle::Threshold(y, _)) => x.total_cmp(y),
        (Oracle::Subset(x, _), Oracle::Subset(y, _)) => x.len().cmp(&y.len()).then_with(|| x.cmp(y)),
        _ => Ordering::Equal,
    })
}

/// Brute force: every threshold between consecutive distinct observed
/// values and every bipartition of the observed levels, each scored by
/// direct SSE differences on the rows observed for that feature.
fn exhaustive(data: &Dataset, minbucket: usize) -> Option<Scored> {
    let y = &data.response;
    let mut all = Vec::new();
    for (f, def) in data.features.iter().enumerate() {
        let x = &data.columns[f];
        let obs: Vec<usize> = (0..y.len()).filter(|&i| !x[i].is_nan()).collect();
        let parent = sse(&obs.iter().map(|&i| y[i]).collect::<Vec<_>>());
        let mut score = |left: Vec<usize>, right: Vec<usize>, split: Oracle| {
            if left.len() < minbucket || right.len() < minbucket || left.is_empty() || right.is_empty() {
                return;
            }
            let sl = sse(&left.iter().map(|&i| y[i]).collect::<Vec<_>>());
            let sr = sse(&right.iter().map(|&i| y[i]).collect::<Vec<_>>());
            all.push(Scored { feature: f, split, improvement: parent - sl - sr });
        };
        match &def.kind {
            FeatureKind::Numeric => {
                let values: BTreeSet<u64> = obs.iter().map(|&i| x[i].to_bits()).collect();
                let mut sorted: Vec<f64> = values.into_iter().map(f64::from_bits).collect();
                sorted.sort_by(f64::total_cmp);
                for w in sorted.windows(2) {
                    let (l, r): (Vec<usize>, Vec<usize>) = obs.iter().partition(|&&i| x[i] <= w[0]);
                    score(l, r, Oracle::Threshold(w[0], w[1]));
                }
            }
            FeatureKind::Categorical { .. } => {
                let present: Vec<usize> =
                    obs.iter().map(|&i| x[i] as usize).collect::<BTreeSet<_>>().into_iter().collect();
                let k = present.len();
                for mask in 1u32..(1 << k) - 1 {
                    let a: Vec<usize> = (0..k).filter(|b| mask >> b & 1 == 1).map(|b| present[b]).collect();
                    let b: Vec<usize> = (0..k).filter(|b| mask >> b & 1 == 0).map(|b| present[b]).collect();
                    // each bipartition once, oriented: fewer levels left, then the lowest code left
                    let a_left = a.len() < b.len() || (a.len() == b.len() && a[0] < b[0]);
                    if !a_left {
                        continue;
                    }
                    let (l, r): (Vec<usize>, Vec<usize>) = obs.iter().partition(|&&i| a.contains(&(x[i] as usize)));
                    score(l, r, Oracle::Subset(a, b));
                }
            }
        }
    }
    let best = all.iter().map(|s| s.improvement).fold(0.0, f64::max);
    if !(best > 0.0) {
        return None;
    }
    all.into_iter().filter(|s| s.improvement >= best * (1.0 - TIE)).min_by(tie_order)
}

fn compare_split(seed: u64, data: &Dataset, minbucket: usize) -> Option<String> {
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    let features: Vec<usize> = (0..data.n_features()).collect();
    let got = find_best_split(data, &rows, &features, minbucket);
    let want = exhaustive(data, minbucket);
    match (got, want) {
        (None, None) => None,
        (Some(g), None) => Some(format!("dataset {seed}: split on f{} but the oracle finds none", g.feature)),
        (None, Some(w)) => Some(format!("dataset {seed}: no split but the oracle finds f{}", w.feature)),
        (Some(g), Some(w)) => {
            let same = g.feature == w.feature
                && match (&g.condition, &w.split) {
                    (SplitCondition::Threshold { threshold, below }, Oracle::Threshold(a, b)) => {
                        let mid = (a + b) / 2.0;
                        *below == Direction::Left
                            && *a < *threshold
                            && *threshold <= *b
                            && (threshold - mid).abs() <= 1e-12 * mid.abs().max(1.0)
                    }
                    (SplitCondition::Categories { left, right }, Oracle::Subset(a, b)) => left == a && right == b,
                    _ => false,
                }
                && (g.improvement - w.improvement).abs() <= 1e-9 * w.improvement;
            (!same).then(|| {
                format!(
                    "dataset {seed}: got f{} {:?} ({}), oracle f{} {:?} ({})",
                    g.feature, g.condition, g.improvement, w.feature, w.split, w.improvement
                )
            })
        }
    }
}

/// Rows reaching each node when every value is observed.
fn node_rows(tree: &RegressionTree, data: &Dataset) -> Vec<Vec<usize>> {
    let mut rows = vec![Vec::new(); tree.nodes.len()];
    for i in 0..data.n_rows() {
        let row = data.row(i);
        let mut k = 0;
        loop {
            rows[k].push(i);
            match (&tree.nodes[k].split, tree.nodes[k].children) {
                (Some(rule), Some((l, r))) => k = if rule.route(&row) == Direction::Left { l } else { r },
                _ => break,
            }
        }
    }
    rows
}

/// Minimal `SSE + α·leaves` over all pruned subtrees, by recursion.
fn best_cost(tree: &RegressionTree, k: usize, alpha: f64) -> f64 {
    let node = &tree.nodes[k];
    let collapsed = node.sse + alpha;
    match node.children {
        Some((l, r)) => collapsed.min(best_cost(tree, l, alpha) + best_cost(tree, r, alpha)),
        None => collapsed,
    }
}

fn check_tree(seed: u64, data: &Dataset, complete: bool) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
    let mut params = TreeParams::with_minsplit(rng.random_range(2..=10));
    params.cp = 0.0;
    let tree = match grow_tree(data, &params) {
        Ok(t) => t,
        Err(e) => return vec![format!("dataset {seed}: grow failed: {e}")],
    };
    let mut out = Vec::new();
    if let Err(e) = tree.check_invariants() {
        out.push(format!("dataset {seed}: {e}"));
    }
    if complete {
        let y = &data.response;
        let root = tree.nodes[0].sse.max(1e-300);
        for (k, rows) in node_rows(&tree, data).iter().enumerate() {
            let node = &tree.nodes[k];
            let direct = sse(&rows.iter().map(|&i| y[i]).collect::<Vec<_>>());
            if rows.len() != node.n || (direct - node.sse).abs() > 1e-9 * root {
                out.push(format!("dataset {seed} node {k}: stored n={} sse={} vs direct n={} sse={direct}", node.n, node.sse, rows.len()));
            }
            if let (Some(rule), Some((l, r))) = (&node.split, node.children) {
                let drop = node.sse - tree.nodes[l].sse - tree.nodes[r].sse;
                if (drop - rule.improvement).abs() > 1e-9 * node.sse.max(1e-300) {
                    out.push(format!("dataset {seed} node {k}: SSE drop {drop} vs improvement {}", rule.improvement));
                }
            }
        }
    }

    let alphas = tree.pruning.alphas();
    if alphas.first() != Some(&0.0) || alphas.windows(2).any(|w| w[1] <= w[0]) {
        out.push(format!("dataset {seed}: breakpoints not strictly increasing from 0: {alphas:?}"));
    }
    if tree.pruning.entries.last().map(|e| e.n_leaves) != Some(1) {
        out.push(format!("dataset {seed}: pruning sequence does not end at the root"));
    }
    let mut probes: Vec<f64> = alphas.clone();
    probes.extend(alphas.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    probes.extend((0..5).map(|_| rng.random_range(0.0..=alphas.last().copied().unwrap_or(0.0) * 1.5 + 1.0)));
    probes.sort_by(f64::total_cmp);
    let mut previous: Option<BTreeSet<usize>> = None;
    for &a in &probes {
        let kept: BTreeSet<usize> = tree.subtree_nodes(a).into_iter().collect();
        if let Some(prev) = &previous {
            if !kept.is_subset(prev) {
                out.push(format!("dataset {seed}: subtree at alpha {a} is not nested in the previous one"));
            }
        }
        let leaves: Vec<usize> = kept
            .iter()
            .copied()
            .filter(|&k| tree.nodes[k].children.is_none_or(|(l, _)| !kept.contains(&l)))
            .collect();
        let cost = leaves.iter().map(|&k| tree.nodes[k].sse).sum::<f64>() + a * leaves.len() as f64;
        let best = best_cost(&tree, 0, a);
        if cost > best + 1e-9 * best.max(1e-300) {
            out.push(format!("dataset {seed}: subtree at alpha {a} costs {cost}, optimum {best}"));
        }
        previous = Some(kept);
    }
    out
}

pub fn run() -> Verdict {
    let mut v = Verdict::new();
    let results: Vec<(bool, Vec<String>)> = (0..DATASETS)
        .into_par_iter()
        .map(|seed| {
            let (data, minbucket) = random_dataset(seed);
            let mut out: Vec<String> = compare_split(seed, &data, minbucket).into_iter().collect();
            out.extend(check_tree(seed, &data, seed % 2 == 0));
            (data.columns.iter().any(|c| c.iter().any(|x| x.is_nan())), out)
        })
        .collect();
    let with_missing = results.iter().filter(|r| r.0).count();
    v.failures.extend(results.into_iter().flat_map(|r| r.1));
    v.note(format!(
        "{DATASETS} datasets ({with_missing} with missing values): best split vs brute force, \
         SSE decomposition on complete data, nested and cost-optimal pruning"
    ));
    v
}
