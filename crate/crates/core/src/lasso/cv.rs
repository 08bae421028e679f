use super::path::{fit_path_unchecked, CdOptions, Gram};
use super::{LassoError, Standardization};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How λ is chosen from the cross-validation curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// The λ with the lowest mean validation MSE.
    Min,
    /// The largest λ whose mean MSE is within one standard error of the minimum.
    #[default]
    OneSe,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CvCurve {
    pub lambdas: Vec<f64>,
    pub mse: Vec<f64>,
    pub se: Vec<f64>,
    pub min_index: usize,
    pub rule: LambdaRule,
    pub selected_index: usize,
    pub lambda_selected: f64,
}

/// Fold label per row: a seeded permutation dealt round-robin into `folds` groups.
fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// K-fold cross-validation of the LASSO over a shared λ path, on the raw
/// (unstandardized) design. Each training fold is standardized with its own
/// statistics; λ is then picked from the mean validation MSE curve by `rule`,
/// the largest λ on ties.
pub fn cv_select_lambda(
    x: &DMatrix<f64>,
    y: &[f64],
    lambdas: &[f64],
    folds: usize,
    seed: u64,
    rule: LambdaRule,
) -> Result<CvCurve, LassoError> {
    let n = x.nrows();
    if y.len() != n {
        return Err(LassoError::Dimension(format!("design has {n} rows, response {}", y.len())));
    }
    if folds < 2 {
        return Err(LassoError::Dimension("at least 2 folds are required".into()));
    }
    if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] >= w[0]) || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(LassoError::BadPath);
    }
    let assignment = fold_assignment(n, folds, seed);
    let mut fold_mse = vec![vec![0.0; lambdas.len()]; folds];
    for (k, fold_row) in fold_mse.iter_mut().enumerate() {
        let valid: Vec<usize> = (0..n).filter(|&i| assignment[i] == k).collect();
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != k).collect();
        if valid.len() < 2 {
            return Err(LassoError::FoldTooSmall { fold: k, size: valid.len() });
        }
        let st = Standardization::fit(x, Some(&train));
        let usable = st.usable_columns();
        let xs = st.transform(x, &train, &usable);
        let y_mean = train.iter().map(|&i| y[i]).sum::<f64>() / train.len() as f64;
        let yc: Vec<f64> = train.iter().map(|&i| y[i] - y_mean).collect();
        let path = fit_path_unchecked(&Gram::new(&xs, &yc), lambdas, &CdOptions::default());
        for (l, beta) in path.coefficients.iter().enumerate() {
            let sse: f64 = valid
                .iter()
                .map(|&i| {
                    let pred = y_mean
                        + usable
                            .iter()
                            .zip(beta)
                            .map(|(&j, b)| b * (x[(i, j)] - st.means[j]) / st.sds[j])
                            .sum::<f64>();
                    (y[i] - pred).powi(2)
                })
                .sum();
            fold_row[l] = sse / valid.len() as f64;
        }
    }
    let kf = folds as f64;
    let mse: Vec<f64> = (0..lambdas.len()).map(|l| fold_mse.iter().map(|f| f[l]).sum::<f64>() / kf).collect();
    let se: Vec<f64> = (0..lambdas.len())
        .map(|l| {
            let var = fold_mse.iter().map(|f| (f[l] - mse[l]).powi(2)).sum::<f64>() / (kf - 1.0);
            (var / kf).sqrt()
        })
        .collect();
    let mut best = 0;
    for l in 1..mse.len() {
        if mse[l] < mse[best] {
            best = l;
        }
    }
    let selected = match rule {
        LambdaRule::Min => best,
        LambdaRule::OneSe => {
            let bound = mse[best] + se[best];
            (0..=best).find(|&l| mse[l] <= bound).unwrap_or(best)
        }
    };
    Ok(CvCurve {
        lambdas: lambdas.to_vec(),
        lambda_selected: lambdas[selected],
        selected_index: selected,
        min_index: best,
        rule,
        mse,
        se,
    })
}
