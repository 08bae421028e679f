use crate::Verdict;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use wtraj_core::lasso::{fit_lasso_path, CdOptions};

const INSTANCES: u64 = 200;
const ORTHONORMAL_INSTANCES: u64 = 50;
/// Path positions compared with the slow oracle.
const ORACLE_POSITIONS: [usize; 8] = [0, 5, 15, 30, 50, 70, 90, 99];

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Centers and scales every column to population sd 1; centers `y`.
fn standardize(x: &mut DMatrix<f64>, y: &mut [f64]) {
    let n = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n).sqrt();
        col /= sd;
    }
    let my = y.iter().sum::<f64>() / n;
    y.iter_mut().for_each(|v| *v -= my);
}

fn objective(x: &DMatrix<f64>, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let mut r2 = 0.0;
    for i in 0..x.nrows() {
        let fit: f64 = (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum();
        r2 += (y[i] - fit).powi(2);
    }
    r2 / (2.0 * x.nrows() as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Largest violation of the stationarity conditions, from scratch.
fn kkt(x: &DMatrix<f64>, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = x.nrows();
    let r: Vec<f64> = (0..n).map(|i| y[i] - (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum::<f64>()).collect();
    (0..x.ncols())
        .map(|j| {
            let g = (0..n).map(|i| x[(i, j)] * r[i]).sum::<f64>() / n as f64;
            if beta[j] == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * beta[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Slow oracle: accelerated projected gradient on the split form
/// `β = u − v`, `u, v ≥ 0`, where the penalty becomes linear and the only
/// constraint is nonnegativity. Restarts momentum when the objective rises.
fn projected_oracle(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Vec<f64> {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let g = x.transpose() * x / n;
    let c = x.transpose() * DVector::from_column_slice(y) / n;
    let top = SymmetricEigen::new(g.clone()).eigenvalues.max();
    let step = 1.0 / (2.0 * top.max(1e-12));
    let smooth = |w: &[f64]| -> f64 {
        let b = DVector::from_fn(p, |j, _| w[j] - w[p + j]);
        0.5 * b.dot(&(&g * &b)) - c.dot(&b) + lambda * w.iter().sum::<f64>()
    };
    let grad = |w: &[f64]| -> Vec<f64> {
        let b = DVector::from_fn(p, |j, _| w[j] - w[p + j]);
        let gb = &g * &b - &c;
        (0..2 * p).map(|k| if k < p { gb[k] + lambda } else { -gb[k - p] + lambda }).collect()
    };
    let mut w = vec![0.0; 2 * p];
    let mut z = w.clone();
    let mut t = 1.0f64;
    let mut f_prev = smooth(&w);
    let mut restarted = false;
    for _ in 0..400_000 {
        let gz = grad(&z);
        let next: Vec<f64> = z.iter().zip(&gz).map(|(zi, gi)| (zi - step * gi).max(0.0)).collect();
        let f_next = smooth(&next);
        let moved = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if f_next > f_prev {
            if restarted {
                // a plain projected step no longer descends
                break;
            }
            z = w.clone();
            t = 1.0;
            restarted = true;
            continue;
        }
        restarted = false;
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        z = next.iter().zip(&w).map(|(a, b)| a + beta * (a - b)).collect();
        w = next;
        t = t_next;
        f_prev = f_next;
        if moved < 1e-15 {
            break;
        }
    }
    (0..p).map(|j| w[j] - w[p + j]).collect()
}

struct Instance {
    kkt: f64,
    rel_gap: f64,
    failures: Vec<String>,
}

fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.random_range(2..=10);
    let n = rng.random_range(12..=60);
    let rho = rng.random_range(0.0..2.0);
    let z0: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let mut x = DMatrix::from_fn(n, p, |i, _| z0[i] * rho);
    for v in x.iter_mut() {
        *v += normal(&mut rng);
    }
    let truth: Vec<f64> = (0..p).map(|_| if rng.random_bool(0.5) { rng.random_range(-3.0..3.0) } else { 0.0 }).collect();
    let sigma = rng.random_range(0.1..3.0);
    let mut y: Vec<f64> = (0..n).map(|i| (0..p).map(|j| x[(i, j)] * truth[j]).sum::<f64>() + sigma * normal(&mut rng)).collect();
    standardize(&mut x, &mut y);

    let mut failures = Vec::new();
    let path = match fit_lasso_path(&x, &y, None, &CdOptions::default()) {
        Ok(p) => p,
        Err(e) => {
            return Instance { kkt: f64::INFINITY, rel_gap: f64::INFINITY, failures: vec![format!("instance {seed}: {e}")] }
        }
    };
    if path.coefficients[0].iter().any(|b| *b != 0.0) {
        failures.push(format!("instance {seed}: nonzero coefficient at lambda_max"));
    }
    let mut worst_kkt = 0.0f64;
    for (lambda, beta) in path.lambdas.iter().zip(&path.coefficients) {
        worst_kkt = worst_kkt.max(kkt(&x, &y, beta, *lambda));
    }
    if worst_kkt > 1e-6 {
        failures.push(format!("instance {seed} (n={n}, p={p}): KKT residual {worst_kkt:e}"));
    }
    let mut worst_gap = 0.0f64;
    for &k in &ORACLE_POSITIONS {
        let lambda = path.lambdas[k];
        let f_cd = objective(&x, &y, &path.coefficients[k], lambda);
        let f_or = objective(&x, &y, &projected_oracle(&x, &y, lambda), lambda);
        let gap = (f_cd - f_or).abs() / f_or.abs().max(1e-300);
        worst_gap = worst_gap.max(gap);
        if gap > 1e-6 {
            failures.push(format!("instance {seed} (n={n}, p={p}) lambda #{k}: objective {f_cd} vs oracle {f_or}"));
        }
    }
    Instance { kkt: worst_kkt, rel_gap: worst_gap, failures }
}

/// Columns `sqrt(n)·Q` with `Q` orthonormal and orthogonal to the ones
/// vector, so `XᵀX/n = I` and the design is already standardized.
fn orthonormal_instance(seed: u64) -> (f64, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
    let p = rng.random_range(2..=10);
    let n = rng.random_range(p + 2..=60);
    let mut raw = DMatrix::from_fn(n, p, |_, _| normal(&mut rng));
    for mut col in raw.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    let x = raw.qr().q() * (n as f64).sqrt();
    let mut y: Vec<f64> = (0..n).map(|i| 2.0 * x[(i, 0)] - x[(i, p - 1)] + normal(&mut rng)).collect();
    let my = y.iter().sum::<f64>() / n as f64;
    y.iter_mut().for_each(|v| *v -= my);
    let path = match fit_lasso_path(&x, &y, None, &CdOptions::default()) {
        Ok(p) => p,
        Err(e) => return (f64::INFINITY, vec![format!("orthonormal instance {seed}: {e}")]),
    };
    let ls: Vec<f64> = (0..p).map(|j| (0..n).map(|i| x[(i, j)] * y[i]).sum::<f64>() / n as f64).collect();
    let mut worst = 0.0f64;
    for (lambda, beta) in path.lambdas.iter().zip(&path.coefficients) {
        for j in 0..p {
            let closed = ls[j].signum() * (ls[j].abs() - lambda).max(0.0);
            worst = worst.max((beta[j] - closed).abs());
        }
    }
    let failures =
        if worst > 1e-8 { vec![format!("orthonormal instance {seed}: max deviation {worst:e}")] } else { Vec::new() };
    (worst, failures)
}

pub fn run() -> Verdict {
    let mut v = Verdict::new();
    let random: Vec<Instance> = (0..INSTANCES).into_par_iter().map(random_instance).collect();
    let kkt = random.iter().map(|r| r.kkt).fold(0.0, f64::max);
    let gap = random.iter().map(|r| r.rel_gap).fold(0.0, f64::max);
    v.failures.extend(random.into_iter().flat_map(|r| r.failures));
    let ortho: Vec<(f64, Vec<String>)> = (0..ORTHONORMAL_INSTANCES).into_par_iter().map(orthonormal_instance).collect();
    let closed = ortho.iter().map(|o| o.0).fold(0.0, f64::max);
    v.failures.extend(ortho.into_iter().flat_map(|o| o.1));
    v.note(format!(
        "{INSTANCES} instances: max KKT {kkt:.1e}, max objective gap {gap:.1e}; \
         {ORTHONORMAL_INSTANCES} orthonormal: max deviation {closed:.1e}"
    ));
    v
}
