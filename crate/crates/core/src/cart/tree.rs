use super::prune::{cost_complexity_prune, PruningSequence};
use super::{
    compute_surrogates, find_best_split, mean_sse, CartError, Dataset, Direction, FeatureDef, SplitRule, TreeParams,
};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub n: usize,
    pub mean: f64,
    pub sse: f64,
    pub depth: usize,
    pub split: Option<SplitRule>,
    pub children: Option<(usize, usize)>,
    /// The node is internal in the pruned subtree at α iff `collapse_alpha > α`.
    pub collapse_alpha: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Regression tree in a preorder arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub features: Vec<FeatureDef>,
    pub params: TreeParams,
    pub nodes: Vec<Node>,
    pub pruning: PruningSequence,
}

struct Grower<'a> {
    data: &'a Dataset,
    params: TreeParams,
    min_improvement: f64,
    nodes: Vec<Node>,
    sampler: Option<(&'a mut ChaCha8Rng, usize)>,
}

impl Grower<'_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.data.n_features();
        match &mut self.sampler {
            Some((rng, mtry)) if *mtry < p => {
                let mut v = sample(*rng, p, *mtry).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..p).collect(),
        }
    }

    fn build(&mut self, rows: &[usize], depth: usize) -> usize {
        let y = &self.data.response;
        let (n, mean, sse) = mean_sse(rows.iter().map(|&i| y[i]));
        let idx = self.nodes.len();
        self.nodes.push(Node { n, mean, sse, depth, split: None, children: None, collapse_alpha: 0.0 });
        if n < self.params.minsplit || depth >= self.params.max_depth || !(sse > 0.0) {
            return idx;
        }
        let features = self.candidate_features();
        let Some(best) = find_best_split(self.data, rows, &features, self.params.minbucket) else {
            return idx;
        };
        if best.improvement < self.min_improvement {
            return idx;
        }
        let xp = &self.data.columns[best.feature];
        let (mut n_left, mut n_obs) = (0usize, 0usize);
        for &i in rows {
            if let Some(d) = best.condition.route(xp[i]) {
                n_obs += 1;
                n_left += usize::from(d == Direction::Left);
            }
        }
        let majority = if 2 * n_left >= n_obs { Direction::Left } else { Direction::Right };
        let surrogates = compute_surrogates(
            self.data,
            rows,
            best.feature,
            &best.condition,
            majority,
            self.params.max_surrogates,
        );
        let rule = SplitRule {
            feature: best.feature,
            condition: best.condition,
            improvement: best.improvement,
            surrogates,
            majority,
        };
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &i in rows {
            let dir = rule.condition.route(xp[i]).unwrap_or_else(|| rule.route(&self.data.row(i)));
            match dir {
                Direction::Left => left.push(i),
                Direction::Right => right.push(i),
            }
        }
        if left.is_empty() || right.is_empty() {
            return idx;
        }
        self.nodes[idx].split = Some(rule);
        let l = self.build(&left, depth + 1);
        let r = self.build(&right, depth + 1);
        self.nodes[idx].children = Some((l, r));
        idx
    }
}

/// Grows a tree on every row of `data`.
pub fn grow_tree(data: &Dataset, params: &TreeParams) -> Result<RegressionTree, CartError> {
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    grow_tree_on(data, &rows, params, None)
}

/// Grows a tree on `rows` (repeats allowed). With a sampler, each node
/// searches a fresh uniform subset of `mtry` features.
pub fn grow_tree_on(
    data: &Dataset,
    rows: &[usize],
    params: &TreeParams,
    sampler: Option<(&mut ChaCha8Rng, usize)>,
) -> Result<RegressionTree, CartError> {
    params.validate()?;
    if rows.is_empty() {
        return Err(CartError::Empty);
    }
    let root_sse = mean_sse(rows.iter().map(|&i| data.response[i])).2;
    let mut g = Grower { data, params: *params, min_improvement: params.cp * root_sse, nodes: Vec::new(), sampler };
    g.build(rows, 0);
    let mut nodes = g.nodes;
    let pruning = cost_complexity_prune(&mut nodes);
    Ok(RegressionTree { features: data.features.clone(), params: *params, nodes, pruning })
}

impl RegressionTree {
    /// Leaf reached by a full feature row in the subtree pruned at `alpha`.
    pub fn leaf_at(&self, row: &[f64], alpha: f64) -> usize {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            match (&node.split, node.children) {
                (Some(rule), Some((l, r))) if node.collapse_alpha > alpha => {
                    i = match rule.route(row) {
                        Direction::Left => l,
                        Direction::Right => r,
                    }
                }
                _ => return i,
            }
        }
    }

    pub fn leaf_for(&self, row: &[f64]) -> usize {
        self.leaf_at(row, -1.0)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.nodes[self.leaf_for(row)].mean
    }

    pub fn predict_row_at(&self, row: &[f64], alpha: f64) -> f64 {
        self.nodes[self.leaf_at(row, alpha)].mean
    }

    pub fn predict(&self, data: &Dataset) -> Vec<f64> {
        (0..data.n_rows()).map(|i| self.predict_row(&data.row(i))).collect()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf()).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Feature of the root split, `None` for a stump.
    pub fn root_feature(&self) -> Option<&str> {
        self.nodes.first()?.split.as_ref().map(|s| self.features[s.feature].name.as_str())
    }

    /// Names of features used in primary splits.
    pub fn features_used(&self) -> BTreeSet<String> {
        self.nodes
            .iter()
            .filter_map(|n| n.split.as_ref())
            .map(|s| self.features[s.feature].name.clone())
            .collect()
    }

    /// Indices of the nodes kept in the subtree pruned at `alpha`.
    pub fn subtree_nodes(&self, alpha: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            out.push(i);
            let node = &self.nodes[i];
            if let Some((l, r)) = node.children {
                if node.collapse_alpha > alpha {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The subtree pruned at `alpha` as a standalone tree.
    pub fn pruned(&self, alpha: f64) -> RegressionTree {
        let mut nodes = Vec::new();
        self.copy_pruned(0, alpha, &mut nodes);
        let pruning = cost_complexity_prune(&mut nodes);
        RegressionTree { features: self.features.clone(), params: self.params, nodes, pruning }
    }

    fn copy_pruned(&self, i: usize, alpha: f64, out: &mut Vec<Node>) -> usize {
        let src = &self.nodes[i];
        let idx = out.len();
        let keep = src.children.is_some() && src.collapse_alpha > alpha;
        out.push(Node {
            split: if keep { src.split.clone() } else { None },
            children: None,
            collapse_alpha: 0.0,
            ..src.clone()
        });
        if keep {
            let (l, r) = src.children.unwrap();
            let nl = self.copy_pruned(l, alpha, out);
            let nr = self.copy_pruned(r, alpha, out);
            out[idx].children = Some((nl, nr));
        }
        idx
    }

    /// Checks the structural invariants of a grown tree.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.mean.is_finite() || !(node.sse >= 0.0) {
                return Err(format!("node {i} has a non-finite mean or negative SSE"));
            }
            match (&node.split, node.children) {
                (Some(rule), Some((l, r))) => {
                    if l <= i || r <= i || l >= self.nodes.len() || r >= self.nodes.len() {
                        return Err(format!("node {i} has out-of-order children"));
                    }
                    if self.nodes[l].n + self.nodes[r].n != node.n {
                        return Err(format!("node {i} children do not partition its rows"));
                    }
                    if rule.feature >= self.features.len() {
                        return Err(format!("node {i} splits on an unknown feature"));
                    }
                }
                (None, None) => {
                    if node.n < self.params.minbucket && i != 0 {
                        return Err(format!("leaf {i} has {} rows, below minbucket", node.n));
                    }
                }
                _ => return Err(format!("node {i} has a split without children or vice versa")),
            }
        }
        Ok(())
    }
}
