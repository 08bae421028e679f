use crate::Verdict;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wtraj_core::cohort::{compute_bmi, compute_ewl, compute_twl, twl_to_weight};

/// Formats `value` with as many decimals as `expected` has, so that an
/// example printed as "46.30" is matched at two decimals.
fn matches_printed(value: f64, expected: &str) -> bool {
    let decimals = expected.split_once('.').map_or(0, |(_, d)| d.len());
    let got = format!("{value:.decimals$}");
    got == expected || (got == format!("-{expected}") && expected.trim_start_matches(['0', '.']).is_empty())
}

pub fn run() -> Verdict {
    let mut v = Verdict::new();
    type F = fn(f64, f64) -> f64;
    let examples: [(&str, F, f64, f64, &str); 12] = [
        ("compute_bmi", |a, b| compute_bmi(a, b).unwrap(), 150.0, 1.80, "46.30"),
        ("compute_bmi", |a, b| compute_bmi(a, b).unwrap(), 100.0, 2.00, "25.0"),
        ("compute_bmi", |a, b| compute_bmi(a, b).unwrap(), 81.0, 1.80, "25.0"),
        ("compute_twl", |a, b| compute_twl(a, b).unwrap(), 150.0, 105.0, "30.0"),
        ("compute_twl", |a, b| compute_twl(a, b).unwrap(), 150.0, 150.0, "0.0"),
        ("compute_twl", |a, b| compute_twl(a, b).unwrap(), 100.0, 113.3, "-13.3"),
        ("compute_ewl", |a, b| compute_ewl(a, b).unwrap(), 40.0, 32.0, "53.33"),
        ("compute_ewl", |a, b| compute_ewl(a, b).unwrap(), 40.0, 40.0, "0.0"),
        ("compute_ewl", |a, b| compute_ewl(a, b).unwrap(), 30.0, 25.0, "100.0"),
        ("twl_to_weight", |a, b| twl_to_weight(a, b).unwrap(), 150.0, 30.0, "105.0"),
        ("twl_to_weight", |a, b| twl_to_weight(a, b).unwrap(), 150.0, 0.0, "150.0"),
        ("twl_to_weight", |a, b| twl_to_weight(a, b).unwrap(), 150.0, -10.0, "165.0"),
    ];
    for (name, f, a, b, expected) in examples {
        let got = f(a, b);
        v.check(matches_printed(got, expected), || format!("{name}({a}, {b}) = {got}, expected {expected}"));
    }
    v.check(compute_bmi(0.0, 1.8).is_err() && compute_bmi(80.0, -1.0).is_err(), || "compute_bmi accepts non-positive input".into());
    v.check(compute_twl(0.0, 100.0).is_err(), || "compute_twl accepts a zero preoperative weight".into());
    v.check(compute_ewl(25.0, 20.0).is_err() && compute_ewl(24.0, 20.0).is_err(), || "compute_ewl accepts BMI <= 25".into());
    v.check(twl_to_weight(150.0, 100.0).is_err() && twl_to_weight(150.0, 120.0).is_err(), || "twl_to_weight accepts TWL >= 100".into());

    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst = 0.0f64;
    for _ in 0..1_000_000 {
        let w = 10f64.powf(rng.random_range(0.0..3.0));
        let visit = w * 10f64.powf(rng.random_range(-2.0..2.0));
        let back = twl_to_weight(w, compute_twl(w, visit).unwrap()).unwrap();
        worst = worst.max((back - visit).abs() / visit);
    }
    v.check(worst <= 1e-9, || format!("round trip relative error {worst:e} > 1e-9"));

    let mut ewl_bad = 0;
    for _ in 0..10_000 {
        let b = 25.0 + 10f64.powf(rng.random_range(-3.0..2.0));
        if compute_ewl(b, b).unwrap() != 0.0 || (compute_ewl(b, 25.0).unwrap() - 100.0).abs() > 1e-9 {
            ewl_bad += 1;
        }
    }
    v.check(ewl_bad == 0, || format!("{ewl_bad} EWL identity violations"));
    v.note(format!("12 examples; 10^6 round trips, worst relative error {worst:.1e}"));
    v
}
