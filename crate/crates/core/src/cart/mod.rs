//! CART regression trees.
//!
//! Splits maximize the reduction in within-node sum of squared errors over
//! numeric thresholds and categorical subsets. Every internal node keeps a
//! ranked list of surrogate splits used to route rows whose primary feature
//! is missing. Trees carry their weakest-link pruning sequence.

mod data;
mod forest;
mod prune;
mod render;
mod split;
mod surrogate;
mod tree;

pub use data::{Dataset, FeatureDef, FeatureKind};
pub use forest::{fit_bagged_ensemble, BaggedEnsemble, EnsembleOptions};
pub use prune::{cost_complexity_prune, select_alpha_cv, CpEntry, PruningSequence};
pub use render::render_tree;
pub use split::{find_best_split, SplitCandidate};
pub use surrogate::compute_surrogates;
pub use tree::{grow_tree, grow_tree_on, Node, RegressionTree};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CartError {
    #[error("dataset is empty")]
    Empty,
    #[error("column `{name}` has {got} rows, expected {expected}")]
    Ragged { name: String, expected: usize, got: usize },
    #[error("response contains a missing or non-finite value at row {0}")]
    BadResponse(usize),
    #[error("categorical feature `{name}` has an out-of-range level code {code}")]
    BadLevel { name: String, code: f64 },
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

/// How a split sends an observed value left or right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitCondition {
    /// Values strictly below `threshold` go `below`, the rest the other way.
    Threshold { threshold: f64, below: Direction },
    /// Level codes in `left` go left, those in `right` go right; any other
    /// level is treated as missing.
    Categories { left: Vec<usize>, right: Vec<usize> },
}

impl SplitCondition {
    /// `None` when the value is missing (NaN) or an unseen level.
    pub fn route(&self, value: f64) -> Option<Direction> {
        if value.is_nan() {
            return None;
        }
        match self {
            SplitCondition::Threshold { threshold, below } => {
                Some(if value < *threshold { *below } else { below.flip() })
            }
            SplitCondition::Categories { left, right } => {
                let code = value as usize;
                if left.contains(&code) {
                    Some(Direction::Left)
                } else if right.contains(&code) {
                    Some(Direction::Right)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub feature: usize,
    pub condition: SplitCondition,
    /// Fraction of rows (observed on both features) routed like the primary split.
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub feature: usize,
    pub condition: SplitCondition,
    /// SSE reduction over the rows observed on `feature`.
    pub improvement: f64,
    pub surrogates: Vec<Surrogate>,
    /// Direction for rows missing the primary feature and every surrogate.
    pub majority: Direction,
}

impl SplitRule {
    /// Direction for a full feature row: primary, then surrogates, then majority.
    pub fn route(&self, row: &[f64]) -> Direction {
        if let Some(d) = self.condition.route(row[self.feature]) {
            return d;
        }
        self.surrogates
            .iter()
            .find_map(|s| s.condition.route(row[s.feature]))
            .unwrap_or(self.majority)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub minsplit: usize,
    pub minbucket: usize,
    pub cp: f64,
    pub max_depth: usize,
    pub max_surrogates: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { minsplit: 20, minbucket: 7, cp: 0.01, max_depth: 30, max_surrogates: 5 }
    }
}

impl TreeParams {
    /// `minbucket = ⌈minsplit / 3⌉`.
    pub fn with_minsplit(minsplit: usize) -> Self {
        Self { minsplit, minbucket: minsplit.div_ceil(3).max(1), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), CartError> {
        if self.minbucket == 0 {
            return Err(CartError::Hyperparameter("minbucket must be at least 1".into()));
        }
        if self.minsplit < 2 {
            return Err(CartError::Hyperparameter("minsplit must be at least 2".into()));
        }
        if !(self.cp >= 0.0) {
            return Err(CartError::Hyperparameter("cp must be non-negative".into()));
        }
        Ok(())
    }
}

/// Sum of squared deviations from the mean, two-pass.
pub(crate) fn mean_sse(values: impl Iterator<Item = f64> + Clone) -> (usize, f64, f64) {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return (0, 0.0, 0.0);
    }
    let mean = sum / n as f64;
    let sse = values.map(|v| (v - mean) * (v - mean)).sum();
    (n, mean, sse)
}
