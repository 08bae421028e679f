use super::tree::{grow_tree_on, RegressionTree};
use super::{CartError, Dataset, TreeParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub n_trees: usize,
    /// Draw each tree's rows with replacement; otherwise use every row once.
    pub bootstrap: bool,
    /// Features searched per node; `None` means `⌈p/3⌉`.
    pub mtry: Option<usize>,
    pub params: TreeParams,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            n_trees: 200,
            bootstrap: true,
            mtry: None,
            params: TreeParams { minsplit: 10, minbucket: 5, cp: 0.0, max_surrogates: 0, ..TreeParams::default() },
        }
    }
}

impl EnsembleOptions {
    /// No bootstrap and every feature searched at every node.
    pub fn without_resampling(n_trees: usize, params: TreeParams) -> Self {
        Self { n_trees, bootstrap: false, mtry: Some(usize::MAX), params }
    }
}

/// Bagged regression trees with per-node feature subsampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedEnsemble {
    pub trees: Vec<RegressionTree>,
    pub mtry: usize,
}

impl BaggedEnsemble {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, data: &Dataset) -> Vec<f64> {
        (0..data.n_rows()).map(|i| self.predict_row(&data.row(i))).collect()
    }
}

/// Fits `n_trees` trees in parallel. Tree `t` draws from its own ChaCha8
/// stream of `seed`, so results do not depend on the thread count.
pub fn fit_bagged_ensemble(data: &Dataset, opts: &EnsembleOptions, seed: u64) -> Result<BaggedEnsemble, CartError> {
    if opts.n_trees == 0 {
        return Err(CartError::Hyperparameter("n_trees must be at least 1".into()));
    }
    let p = data.n_features();
    let n = data.n_rows();
    let mtry = opts.mtry.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1));
    let trees = (0..opts.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> =
                if opts.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
            grow_tree_on(data, &rows, &opts.params, Some((&mut rng, mtry)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BaggedEnsemble { trees, mtry })
}
