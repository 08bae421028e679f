use crate::Verdict;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::collections::BTreeSet;
use wtraj_core::cohort::{Cohort, ColumnKind, DiabetesStatus, FeatureColumn, FeatureValue, Operation, Sex};
use wtraj_core::imputation::pmm_impute;
use wtraj_core::synth::{generate_cohort, GeneratorSpec};

const PATTERNS: u64 = 100;
const M: usize = 10;
const DONOR_K: usize = 5;

/// A cohort whose smoker flag and four extra columns (continuous,
/// categorical, boolean) are missing in a random pattern.
fn random_cohort(seed: u64) -> Cohort {
    let base = generate_cohort(&GeneratorSpec { n: 300, seed: 500 + seed, ..Default::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = base.records;
    let smoker_missing = rng.random_range(0.0..0.5);
    for r in &mut records {
        r.smoker = if rng.random_bool(smoker_missing) { None } else { Some(rng.random_bool(0.2)) };
    }
    let column = |name: &str, kind: ColumnKind, rng: &mut ChaCha8Rng| {
        let missing = rng.random_range(0.02..0.5);
        let values = records
            .iter()
            .map(|r| {
                if rng.random_bool(missing) {
                    return FeatureValue::Missing;
                }
                let z: f64 = rng.sample(StandardNormal);
                match kind {
                    ColumnKind::Continuous => FeatureValue::Numeric(((r.weight_kg / 10.0 + z) * 100.0).round() / 100.0),
                    ColumnKind::Boolean => FeatureValue::Numeric(f64::from(u8::from(r.age_years / 20.0 + z > 3.0))),
                    ColumnKind::Categorical => {
                        FeatureValue::Categorical(["low", "mid", "high", "other"][((z + 1.5).clamp(0.0, 3.0)) as usize].into())
                    }
                }
            })
            .collect();
        FeatureColumn { name: name.into(), kind, values }
    };
    let extra = vec![
        column("x_ldl", ColumnKind::Continuous, &mut rng),
        column("x_crp", ColumnKind::Continuous, &mut rng),
        column("x_site", ColumnKind::Categorical, &mut rng),
        column("x_apnea", ColumnKind::Boolean, &mut rng),
    ];
    Cohort::new(records, extra).unwrap()
}

/// The six conditioning variables with an intercept.
fn key_design(c: &Cohort) -> DMatrix<f64> {
    DMatrix::from_fn(c.len(), 8, |i, j| {
        let r = &c.records[i];
        let flag = |b: bool| f64::from(u8::from(b));
        match j {
            0 => 1.0,
            1 => r.weight_kg,
            2 => flag(r.sex == Sex::Male),
            3 => r.age_years,
            4 => flag(r.operation == Operation::Sg),
            5 => flag(r.operation == Operation::Agb),
            6 => flag(r.diabetes_status == DiabetesStatus::T2d),
            _ => r.diabetes_duration_years,
        }
    })
}

#[derive(Clone, PartialEq)]
enum Value {
    Num(f64),
    Cat(String),
}

/// Observed cells of one column as `(row, value)`; `None` for missing.
fn cells(c: &Cohort, column: Option<usize>) -> Vec<Option<Value>> {
    match column {
        None => c.records.iter().map(|r| r.smoker.map(|b| Value::Num(f64::from(u8::from(b))))).collect(),
        Some(k) => c.extra_features[k]
            .values
            .iter()
            .map(|v| match v {
                FeatureValue::Numeric(x) => Some(Value::Num(*x)),
                FeatureValue::Categorical(s) => Some(Value::Cat(s.clone())),
                FeatureValue::Missing => None,
            })
            .collect(),
    }
}

/// Predicted means from least squares on the observed rows, one
/// coordinate per response (one per level for categorical columns).
fn predicted_means(design: &DMatrix<f64>, observed: &[Option<Value>]) -> Vec<Vec<f64>> {
    let rows: Vec<usize> = (0..observed.len()).filter(|&i| observed[i].is_some()).collect();
    let obs_design = design.select_rows(&rows);
    let levels: BTreeSet<String> =
        observed.iter().flatten().filter_map(|v| if let Value::Cat(s) = v { Some(s.clone()) } else { None }).collect();
    let responses: Vec<Vec<f64>> = if levels.is_empty() {
        vec![rows.iter().map(|&i| if let Some(Value::Num(x)) = &observed[i] { *x } else { 0.0 }).collect()]
    } else {
        levels
            .iter()
            .map(|l| rows.iter().map(|&i| f64::from(u8::from(observed[i] == Some(Value::Cat(l.clone()))))).collect())
            .collect()
    };
    // columns scaled to unit norm keep the SVD well conditioned
    let scale: Vec<f64> = (0..obs_design.ncols()).map(|j| obs_design.column(j).norm().max(1e-300)).collect();
    let scaled = DMatrix::from_fn(obs_design.nrows(), obs_design.ncols(), |i, j| obs_design[(i, j)] / scale[j]);
    let svd = scaled.clone().svd(true, true);
    let mut out = vec![Vec::new(); observed.len()];
    for y in responses {
        let yv = DVector::from_vec(y);
        let mut beta = svd.solve(&yv, 1e-10).unwrap();
        for (b, s) in beta.iter_mut().zip(&scale) {
            *b /= s;
        }
        let fitted = design * &beta;
        for (i, o) in out.iter_mut().enumerate() {
            o.push(fitted[i]);
        }
    }
    out
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_pattern(seed: u64) -> (usize, Vec<String>) {
    let cohort = random_cohort(seed);
    let mut out = Vec::new();
    let set = match pmm_impute(&cohort, M, DONOR_K, seed) {
        Ok(s) => s,
        Err(e) => return (0, vec![format!("pattern {seed}: {e}")]),
    };
    if set.m != M || set.datasets.len() != M {
        out.push(format!("pattern {seed}: {} datasets, expected {M}", set.datasets.len()));
    }
    match pmm_impute(&cohort, M, DONOR_K, seed) {
        Ok(again) if again == set => {}
        _ => out.push(format!("pattern {seed}: rerun with the same seed differs")),
    }
    let design = key_design(&cohort);
    let mut imputed = 0;
    let columns: Vec<Option<usize>> = std::iter::once(None).chain((0..cohort.extra_features.len()).map(Some)).collect();
    for column in columns {
        let original = cells(&cohort, column);
        let observed_rows: Vec<usize> = (0..original.len()).filter(|&i| original[i].is_some()).collect();
        let means = predicted_means(&design, &original);
        let name = column.map_or("smoker".to_string(), |k| cohort.extra_features[k].name.clone());
        for (d, data) in set.datasets.iter().enumerate() {
            let filled = cells(data, column);
            for i in 0..original.len() {
                match (&original[i], &filled[i]) {
                    (Some(a), Some(b)) if a == b => {}
                    (Some(_), _) => out.push(format!("pattern {seed} dataset {d}: observed {name} of row {i} changed")),
                    (None, None) => out.push(format!("pattern {seed} dataset {d}: {name} of row {i} left missing")),
                    (None, Some(value)) => {
                        imputed += 1;
                        let mut dists: Vec<f64> = observed_rows.iter().map(|&o| dist(&means[i], &means[o])).collect();
                        dists.sort_by(f64::total_cmp);
                        let kth = dists[DONOR_K - 1];
                        let donor = observed_rows
                            .iter()
                            .filter(|&&o| original[o].as_ref() == Some(value))
                            .map(|&o| dist(&means[i], &means[o]))
                            .fold(f64::INFINITY, f64::min);
                        if donor.is_infinite() {
                            out.push(format!("pattern {seed} dataset {d}: {name} of row {i} is not an observed value"));
                        } else if donor > kth * (1.0 + 1e-8) + 1e-12 {
                            out.push(format!("pattern {seed} dataset {d}: {name} of row {i} copied from outside the {DONOR_K} nearest (distance {donor:e}, fifth nearest {kth:e}, rank {})", dists.partition_point(|&x| x < donor) + 1));
                        }
                    }
                }
            }
        }
    }
    let distinct = set.datasets.windows(2).any(|w| w[0] != w[1]);
    if imputed > 0 && !distinct {
        out.push(format!("pattern {seed}: all {M} imputed datasets are identical"));
    }
    (imputed, out)
}

pub fn run() -> Verdict {
    let mut v = Verdict::new();
    let results: Vec<(usize, Vec<String>)> = (0..PATTERNS).into_par_iter().map(check_pattern).collect();
    let cells: usize = results.iter().map(|r| r.0).sum();
    v.failures.extend(results.into_iter().flat_map(|r| r.1));
    v.note(format!(
        "{PATTERNS} patterns, m={M}, donor_k={DONOR_K}: {cells} imputed cells all copied from one of the nearest donors; reruns identical"
    ));
    v
}
