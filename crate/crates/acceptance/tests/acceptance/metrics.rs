use crate::Verdict;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use wtraj_core::metrics::{
    bca_interval, bland_altman, limits_of_agreement, mad, mann_whitney_u, normalized_metric, rmse, MetricKind,
};

const SIMULATIONS: u64 = 1000;
const SAMPLE: usize = 100;

fn hand_values(v: &mut Verdict) {
    let mut exact = |label: &str, got: f64, want: f64| v.check(got == want, || format!("{label} = {got}, expected {want}"));
    exact("mad({10,20,30}, {12,18,33})", mad(&[10.0, 20.0, 30.0], &[12.0, 18.0, 33.0]).unwrap(), 2.0);
    exact("mad(x, x)", mad(&[3.5, 7.25, 1.0], &[3.5, 7.25, 1.0]).unwrap(), 0.0);
    exact("mad({5}, {9})", mad(&[5.0], &[9.0]).unwrap(), 4.0);
    exact("rmse(x, x)", rmse(&[3.5, 7.25], &[3.5, 7.25]).unwrap(), 0.0);
    exact("rmse with constant error 2.5", rmse(&[1.0, 4.0, 10.0], &[3.5, 6.5, 12.5]).unwrap(), 2.5);
    exact("normalized MAD({27,33}, {30,30})", normalized_metric(&[27.0, 33.0], &[30.0, 30.0], MetricKind::Mad).unwrap(), 10.0);
    exact("normalized RMSE({36}, {40})", normalized_metric(&[36.0], &[40.0], MetricKind::Rmse).unwrap(), 10.0);
    exact("normalized MAD(x, x)", normalized_metric(&[31.0, 29.5], &[31.0, 29.5], MetricKind::Mad).unwrap(), 0.0);
    let same = bland_altman(&[30.0, 25.5, 41.0], &[30.0, 25.5, 41.0]).unwrap();
    exact("Bland-Altman identity bias", same.bias, 0.0);
    exact("Bland-Altman identity lower limit", same.loa_lo, 0.0);
    exact("Bland-Altman identity upper limit", same.loa_hi, 0.0);
    let offset = bland_altman(&[31.0, 26.0, 41.0], &[30.0, 25.0, 40.0]).unwrap();
    exact("Bland-Altman offset bias", offset.bias, 1.0);
    exact("Bland-Altman offset sd", offset.sd, 0.0);
    exact("Bland-Altman offset lower limit", offset.loa_lo, 1.0);
    exact("Bland-Altman offset upper limit", offset.loa_hi, 1.0);
    exact("U({1,2,3}, {1,2,3})", mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().u, 4.5);
    exact("U({1,2}, {10,20})", mann_whitney_u(&[1.0, 2.0], &[10.0, 20.0]).unwrap().u, 0.0);
    let e = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
    v.check(format!("{e:.4}") == "3.5355", || format!("rmse of errors {{3, 4}} = {e}, expected 3.5355"));
    let (lo, hi) = limits_of_agreement(-0.3, 4.7);
    v.check(format!("{lo:.2}") == "-9.51" && format!("{hi:.2}") == "8.91", || {
        format!("limits for bias -0.3, sd 4.7 = ({lo}, {hi}), expected (-9.51, 8.91)")
    });
}

/// Two-sided permutation p of U by listing every assignment of the pooled
/// values to group a.
fn enumerated_p(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (na, n) = (a.len(), pooled.len());
    let doubled_u = |ga: &[f64], gb: &[f64]| -> i64 {
        ga.iter().flat_map(|x| gb.iter().map(move |y| if x > y { 2 } else if x == y { 1 } else { 0 })).sum()
    };
    let center = (na * (n - na)) as i64;
    let observed = (doubled_u(a, b) - center).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let (ga, gb): (Vec<f64>, Vec<f64>) = {
            let (x, y): (Vec<(usize, f64)>, Vec<(usize, f64)>) =
                pooled.iter().copied().enumerate().partition(|(i, _)| mask >> i & 1 == 1);
            (x.into_iter().map(|p| p.1).collect(), y.into_iter().map(|p| p.1).collect())
        };
        total += 1;
        if (doubled_u(&ga, &gb) - center).abs() >= observed {
            extreme += 1;
        }
    }
    (doubled_u(a, b) as f64 / 2.0, extreme as f64 / total as f64)
}

fn mann_whitney_cases(v: &mut Verdict) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut cases = 0;
    for case in 0..300 {
        let na = rng.random_range(1..=7);
        let nb = rng.random_range(1..=7);
        let ties = case % 2 == 0;
        let mut draw = |n: usize, shift: f64| -> Vec<f64> {
            (0..n)
                .map(|_| if ties { f64::from(rng.random_range(0..4)) } else { rng.random_range(0.0..10.0) + shift })
                .collect()
        };
        let a = draw(na, 0.0);
        let b = draw(nb, if case % 3 == 0 { 3.0 } else { 0.0 });
        let got = mann_whitney_u(&a, &b).unwrap();
        let (u, p) = enumerated_p(&a, &b);
        cases += 1;
        v.check(got.exact && got.u == u && (got.p_two_sided - p).abs() <= 1e-10, || {
            format!("Mann-Whitney {a:?} vs {b:?}: U {} p {} (exact {}), enumeration U {u} p {p}", got.u, got.p_two_sided, got.exact)
        });
    }
    cases
}

/// Empirical coverage of the 95% BCa interval for the mean of standard
/// normal samples.
fn coverage(v: &mut Verdict, b: usize) -> f64 {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let results: Vec<(bool, bool)> = (0..SIMULATIONS)
        .into_par_iter()
        .map(|sim| {
            let mut rng = ChaCha8Rng::seed_from_u64(9_000 + sim);
            let data: Vec<f64> = (0..SAMPLE).map(|_| rng.sample(StandardNormal)).collect();
            let ci = bca_interval(&data, mean, b, 0.95, sim).unwrap();
            (ci.lo <= 0.0 && 0.0 <= ci.hi, ci.lo <= ci.estimate && ci.estimate <= ci.hi)
        })
        .collect();
    let covered = results.iter().filter(|r| r.0).count() as f64 / SIMULATIONS as f64;
    let contains = results.iter().filter(|r| r.1).count();
    v.check(contains == results.len(), || format!("{} intervals exclude their estimate", results.len() - contains));
    v.check((0.92..=0.97).contains(&covered), || format!("coverage {covered:.3} outside [0.92, 0.97] at B = {b}"));
    covered
}

pub fn run() -> Verdict {
    let mut v = Verdict::new();
    hand_values(&mut v);
    let flat = bca_interval(&[4.0; 10], |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64, 200, 0.95, 1).unwrap();
    v.check(flat.degenerate && flat.lo == 4.0 && flat.hi == 4.0, || "constant data does not give a flagged point interval".into());
    let cases = mann_whitney_cases(&mut v);
    let covered = coverage(&mut v, 2000);
    v.note(format!(
        "hand values exact; {cases} Mann-Whitney cases vs enumeration; BCa coverage {covered:.3} over {SIMULATIONS} simulations (B = 2000)"
    ));
    v
}

pub fn run_full_b() -> Verdict {
    let mut v = Verdict::new();
    let covered = coverage(&mut v, 10_000);
    v.note(format!("BCa coverage {covered:.3} over {SIMULATIONS} simulations (B = 10000)"));
    v
}
