use super::tree::{grow_tree_on, Node};
use super::{CartError, Dataset, TreeParams};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One step of the weakest-link sequence: the subtree that is optimal for
/// complexity parameters in `[alpha, next alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpEntry {
    pub alpha: f64,
    /// `alpha` relative to the root SSE.
    pub cp: f64,
    pub n_leaves: usize,
    pub sse: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PruningSequence {
    pub entries: Vec<CpEntry>,
}

impl PruningSequence {
    pub fn alphas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.alpha).collect()
    }
}

/// Weakest-link pruning. Sets each internal node's `collapse_alpha` to the
/// complexity at which it becomes a leaf and returns the sequence of
/// breakpoints, strictly increasing from 0 (the full tree) to the root-only tree.
pub fn cost_complexity_prune(nodes: &mut [Node]) -> PruningSequence {
    let m = nodes.len();
    let root_sse = nodes.first().map_or(0.0, |n| n.sse);
    let cp_of = |a: f64| if root_sse > 0.0 { a / root_sse } else { 0.0 };
    let mut alive: Vec<bool> = nodes.iter().map(|n| n.children.is_some()).collect();
    for n in nodes.iter_mut() {
        n.collapse_alpha = 0.0;
    }
    let mut leaves = vec![0usize; m];
    let mut subtree_sse = vec![0.0; m];
    let mut entries: Vec<CpEntry> = Vec::new();
    let mut alpha = 0.0f64;
    loop {
        for i in (0..m).rev() {
            match nodes[i].children {
                Some((l, r)) if alive[i] => {
                    leaves[i] = leaves[l] + leaves[r];
                    subtree_sse[i] = subtree_sse[l] + subtree_sse[r];
                }
                _ => {
                    leaves[i] = 1;
                    subtree_sse[i] = nodes[i].sse;
                }
            }
        }
        let entry = CpEntry { alpha, cp: cp_of(alpha), n_leaves: leaves[0], sse: subtree_sse[0] };
        match entries.last_mut() {
            Some(last) if alpha <= last.alpha * (1.0 + 1e-10) => *last = CpEntry { alpha: last.alpha, cp: last.cp, ..entry },
            _ => entries.push(entry),
        }
        if m == 0 || !alive[0] {
            break;
        }
        let g = |i: usize| ((nodes[i].sse - subtree_sse[i]) / (leaves[i] - 1) as f64).max(0.0);
        let gmin = (0..m).filter(|&i| alive[i]).map(g).fold(f64::INFINITY, f64::min);
        alpha = alpha.max(gmin);
        let cutoff = gmin + 1e-10 * gmin.abs().max(f64::MIN_POSITIVE);
        let weakest: Vec<usize> = (0..m).filter(|&i| alive[i] && g(i) <= cutoff).collect();
        for t in weakest {
            let mut stack = vec![t];
            while let Some(i) = stack.pop() {
                if !alive[i] {
                    continue;
                }
                alive[i] = false;
                nodes[i].collapse_alpha = alpha;
                if let Some((l, r)) = nodes[i].children {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
    }
    PruningSequence { entries }
}

/// Chooses the pruning complexity by K-fold cross-validation.
///
/// Candidates are the geometric midpoints of the full tree's breakpoints;
/// each fold grows a tree on its training rows and scores the subtree at
/// every candidate. Returns the candidate with the lowest validation MSE,
/// the largest on ties.
pub fn select_alpha_cv(data: &Dataset, params: &TreeParams, folds: usize, seed: u64) -> Result<f64, CartError> {
    let n = data.n_rows();
    if folds < 2 || n < folds {
        return Err(CartError::Hyperparameter(format!("cannot run {folds}-fold CV on {n} rows")));
    }
    let all: Vec<usize> = (0..n).collect();
    let full = grow_tree_on(data, &all, params, None)?;
    let alphas = full.pruning.alphas();
    let mut candidates: Vec<f64> = alphas.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
    candidates.push(*alphas.last().unwrap_or(&0.0));
    // rescale: breakpoints are SSE units on n rows, fold trees see fewer rows
    let mut order = all.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut err = vec![0.0; candidates.len()];
    for k in 0..folds {
        let valid: Vec<usize> = order.iter().copied().skip(k).step_by(folds).collect();
        let train: Vec<usize> = order.iter().enumerate().filter(|(p, _)| p % folds != k).map(|(_, &i)| i).collect();
        let scale = train.len() as f64 / n as f64;
        let tree = grow_tree_on(data, &train, params, None)?;
        for (c, &a) in candidates.iter().enumerate() {
            err[c] += valid
                .iter()
                .map(|&i| (data.response[i] - tree.predict_row_at(&data.row(i), a * scale)).powi(2))
                .sum::<f64>();
        }
    }
    let mut best = 0;
    for c in 1..candidates.len() {
        if err[c] <= err[best] {
            best = c;
        }
    }
    Ok(candidates[best])
}
