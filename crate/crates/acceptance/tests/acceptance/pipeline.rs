use crate::Verdict;
use wtraj_core::cohort::Operation;
use wtraj_core::metrics::EvaluationOptions;
use wtraj_core::pipeline::{run_pipeline, PipelineOptions};
use wtraj_core::synth::{generate_cohort, GeneratorSpec};
use wtraj_core::trajectory::{ProfileFeature, TrainOptions};

const RUNS: u64 = 20;
/// Median 5-year TWL reported for RYGB, SG and AGB.
const MEDIAN_TWL_60: [f64; 3] = [28.2, 23.6, 14.9];

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn run() -> Verdict {
    let mut v = Verdict::new();
    let mut rooted_runs = 0;
    let mut rmse_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut max_noise = 0;
    let mut worst_median = 0.0f64;
    for seed in 1..=RUNS {
        let cohort = generate_cohort(&GeneratorSpec { n: 5000, seed, noise_sd: 4.0, ..Default::default() }).unwrap();
        for (k, op) in Operation::ALL.into_iter().enumerate() {
            let twl: Vec<f64> = cohort
                .records
                .iter()
                .filter(|r| r.operation == op && !r.is_censored_at(60))
                .filter_map(|r| r.twl_at(60))
                .collect();
            let m = median(twl);
            worst_median = worst_median.max((m - MEDIAN_TWL_60[k]).abs());
            v.check((m - MEDIAN_TWL_60[k]).abs() <= 2.0, || {
                format!("run {seed}: {op:?} median 5-year TWL {m:.2}, expected {} ± 2", MEDIAN_TWL_60[k])
            });
        }
        let opts = PipelineOptions {
            train: TrainOptions {
                seed,
                evaluation: EvaluationOptions { bootstrap: 0, ..Default::default() },
                ..Default::default()
            },
            ..Default::default()
        };
        let outcome = match run_pipeline(&cohort, &opts) {
            Ok(o) => o,
            Err(e) => {
                v.failures.push(format!("run {seed}: {e}"));
                continue;
            }
        };
        let selection = outcome.selection.expect("selection ran");
        let missing: Vec<&str> =
            ProfileFeature::ALL.iter().filter(|f| !selection.model_features.contains(f)).map(|f| f.name()).collect();
        v.check(missing.is_empty(), || format!("run {seed}: planted features not selected: {missing:?}"));
        // noise = the generator's unrelated x_ columns
        let noise: Vec<&String> = selection.unused.iter().filter(|u| u.starts_with("x_")).collect();
        max_noise = max_noise.max(noise.len());
        v.check(noise.len() <= 2, || format!("run {seed}: {} noise features selected: {noise:?} (all unused: {:?})", noise.len(), selection.unused));
        let model = &outcome.training.model;
        if model.trees.iter().all(|t| t.root_feature() == Some("operation")) {
            rooted_runs += 1;
        }
        match outcome.training.heldout_pooled_twl_rmse {
            Some(r) => {
                rmse_range = (rmse_range.0.min(r), rmse_range.1.max(r));
                v.check((4.0..=5.5).contains(&r), || format!("run {seed}: held-out TWL RMSE {r:.3} outside [4.0, 5.5]"));
            }
            None => v.failures.push(format!("run {seed}: no held-out patients")),
        }
    }
    let needed = (0.95 * RUNS as f64).ceil() as u64;
    v.check(rooted_runs >= needed, || format!("every tree rooted at operation in {rooted_runs}/{RUNS} runs, need {needed}"));
    v.note(format!(
        "{RUNS} runs at n=5000, noise sd 4: all-operation roots in {rooted_runs}/{RUNS}; held-out TWL RMSE {:.2}-{:.2}; \
         at most {max_noise} noise features; 5-year medians within {worst_median:.2} of target",
        rmse_range.0, rmse_range.1
    ));
    v
}
