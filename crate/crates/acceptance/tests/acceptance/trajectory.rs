use crate::Verdict;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wtraj_core::cohort::{DiabetesStatus, Operation};
use wtraj_core::metrics::EvaluationOptions;
use wtraj_core::synth::{generate_cohort, GeneratorSpec};
use wtraj_core::trajectory::{
    load_model, predict_profile, read_model, save_model, smooth_trajectory, train_trajectory_model, write_model,
    PatientProfile, Pchip, ProfileFeature, TrainOptions, TrajectoryModel, Unit, GRID_STEP,
};

const PROFILES: u64 = 100;
const KNOT_SETS: u64 = 10_000;

fn model() -> TrajectoryModel {
    let cohort = generate_cohort(&GeneratorSpec { n: 2000, seed: 7, ..Default::default() }).unwrap();
    let opts = TrainOptions { seed: 7, evaluation: EvaluationOptions { bootstrap: 0, ..Default::default() }, ..Default::default() };
    train_trajectory_model(&cohort, &ProfileFeature::ALL, &opts).unwrap().model
}

fn random_profile(rng: &mut ChaCha8Rng) -> PatientProfile {
    let diabetes_status = DiabetesStatus::ALL[rng.random_range(0..3)];
    PatientProfile {
        age_years: rng.random_range(18.0..75.0),
        weight_kg: rng.random_range(65.0..295.0),
        height_m: rng.random_range(1.45..2.05),
        smoker: [None, Some(false), Some(true)][rng.random_range(0..3)],
        diabetes_status,
        diabetes_duration_years: if diabetes_status == DiabetesStatus::T2d { rng.random_range(0.0..30.0) } else { 0.0 },
        operation: Operation::ALL[rng.random_range(0..3)],
    }
}

fn anchoring_and_order(v: &mut Verdict, model: &TrajectoryModel) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut samples = 0;
    for k in 0..PROFILES {
        let profile = random_profile(&mut rng);
        let pred = match predict_profile(model, &profile) {
            Ok(p) => p,
            Err(e) => {
                v.failures.push(format!("profile {k}: {e}"));
                continue;
            }
        };
        let bmi = profile.weight_kg / (profile.height_m * profile.height_m);
        let mut units = vec![(Unit::Kg, profile.weight_kg), (Unit::Bmi, bmi), (Unit::Twl, 0.0)];
        if bmi > 25.0 {
            units.push((Unit::Ewl, 0.0));
        }
        for (unit, anchor) in units {
            for (label, series) in [("knots", pred.knots(unit).unwrap()), ("curve", pred.smooth(unit).unwrap())] {
                let first = series[0];
                v.check(first.month == 0.0 && first.value == anchor && first.lo == anchor && first.hi == anchor, || {
                    format!("profile {k} {unit} {label}: month 0 is {first:?}, expected {anchor}")
                });
                for p in &series {
                    samples += 1;
                    v.check(p.lo <= p.value && p.value <= p.hi, || format!("profile {k} {unit} {label}: unordered band {p:?}"));
                }
            }
        }
        for p in pred.points.iter().chain(&pred.curve) {
            v.check(p.twl_lo <= p.twl && p.twl <= p.twl_hi, || format!("profile {k}: unordered TWL band {p:?}"));
        }
    }
    samples
}

fn within(value: f64, a: f64, b: f64) -> bool {
    a.min(b) <= value && value <= a.max(b)
}

fn smoothing(v: &mut Verdict) {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for set in 0..KNOT_SETS {
        let count = rng.random_range(2..=8);
        let values: Vec<f64> = (0..count).map(|_| rng.random_range(-20.0..50.0)).collect();
        if set % 2 == 0 {
            // anchored integer months: knots lie on the sampling grid
            let mut months: Vec<f64> = vec![0.0];
            while months.len() < count {
                let m = f64::from(rng.random_range(1..=60));
                if !months.contains(&m) {
                    months.push(m);
                }
            }
            months.sort_by(f64::total_cmp);
            let curve = smooth_trajectory(&months, &values, GRID_STEP).unwrap();
            for &(m, y) in &curve {
                let k = months.partition_point(|&x| x <= m) - 1;
                let ok = if months[k] == m { y == values[k] } else { within(y, values[k], values[k + 1]) };
                v.check(ok, || format!("knot set {set}: sample ({m}, {y}) vs knots {months:?} {values:?}"));
            }
        } else {
            let mut xs: Vec<f64> = Vec::with_capacity(count);
            let mut x = rng.random_range(-10.0..10.0);
            for _ in 0..count {
                xs.push(x);
                x += rng.random_range(0.01..15.0);
            }
            let p = Pchip::new(&xs, &values).unwrap();
            for k in 0..count {
                v.check(p.eval(xs[k]) == values[k], || format!("knot set {set}: misses knot {k}"));
                if k + 1 < count {
                    for s in 1..64 {
                        let t = xs[k] + (xs[k + 1] - xs[k]) * f64::from(s) / 64.0;
                        let y = p.eval(t);
                        v.check(within(y, values[k], values[k + 1]), || {
                            format!("knot set {set}: overshoot {y} at {t} between {} and {}", values[k], values[k + 1])
                        });
                    }
                }
            }
        }
    }
}

fn round_trip(v: &mut Verdict, model: &TrajectoryModel) {
    let mut bytes = Vec::new();
    write_model(model, &mut bytes).unwrap();
    let back = read_model(bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    write_model(&back, &mut again).unwrap();
    v.check(bytes == again, || "artifact bytes change after a read/write cycle".into());
    v.check(&back == model, || "loaded model differs from the saved one".into());
    let path = std::env::temp_dir().join(format!("wtraj-acceptance-{}.wtm", std::process::id()));
    save_model(model, &path).unwrap();
    let from_file = load_model(&path).unwrap();
    v.check(std::fs::read(&path).unwrap() == bytes, || "saved file differs from the written bytes".into());
    let _ = std::fs::remove_file(&path);
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    for k in 0..PROFILES {
        let profile = random_profile(&mut rng);
        let (a, b) = (predict_profile(model, &profile).unwrap(), predict_profile(&from_file, &profile).unwrap());
        let bits = |p: &wtraj_core::trajectory::TrajectoryPrediction| -> Vec<u64> {
            p.points.iter().chain(&p.curve).flat_map(|q| [q.month, q.twl, q.twl_lo, q.twl_hi]).map(f64::to_bits).collect()
        };
        v.check(bits(&a) == bits(&b), || format!("profile {k}: prediction changes after save/load"));
    }
}

pub fn run() -> Verdict {
    let mut v = Verdict::new();
    let model = model();
    let samples = anchoring_and_order(&mut v, &model);
    smoothing(&mut v);
    round_trip(&mut v, &model);
    v.note(format!(
        "{PROFILES} profiles anchored with ordered bands ({samples} samples); {KNOT_SETS} knot sets interpolated without overshoot; \
         save/load bit-exact on {PROFILES} profiles"
    ));
    v
}
