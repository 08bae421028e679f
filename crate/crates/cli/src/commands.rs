//! Subcommand implementations.

use crate::config::Config;
use crate::{
    Command, InspectArgs, PredictArgs, ReportArgs, ServeArgs, SimulateArgs, SmokerArg, TableKind, TrainArgs,
    ValidateArgs,
};
use anyhow::{anyhow, bail, Context};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;
use wtraj_core::cart::{render_tree, EnsembleOptions};
use wtraj_core::cohort::{load_cohort_path, write_cohort_csv, Cohort, LoadOptions};
use wtraj_core::metrics::{evaluate_cohort, render_table, weighted_mean_cell, EvaluationOptions, MetricCell, MetricReport, Stratum};
use wtraj_core::pipeline::{compare_models, comparators_tsv, run_pipeline, ComparatorOptions, ComparatorRow, PipelineOptions, SelectionReport};
use wtraj_core::synth::{generate_cohort, GeneratorSpec};
use wtraj_core::trajectory::{load_model, save_model, HeldOutError, PatientProfile, ProfileFeature, TrainOptions};
use wtraj_service::{handle_predict, LoadedModel, PredictRequest, ServiceConfig};

pub fn dispatch(command: Command, config: &Config) -> anyhow::Result<()> {
    match command {
        Command::Simulate(a) => simulate(a, config),
        Command::Train(a) => train(a, config),
        Command::Inspect(a) => inspect(a),
        Command::Validate(a) => validate(a, config),
        Command::Report(a) => report(a),
        Command::Predict(a) => predict(a),
        Command::Serve(a) => serve(a, config),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn read_structured<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
    } else {
        toml::from_str(&text).map_err(|e| anyhow!("invalid TOML in {}: {}", path.display(), e.message()))
    }
}

fn load_cohort_file(path: &Path) -> anyhow::Result<Cohort> {
    let outcome = load_cohort_path(path, &LoadOptions::default())
        .with_context(|| format!("cannot load cohort {}", path.display()))?;
    let excluded = outcome.report.total_excluded();
    if excluded > 0 {
        eprintln!("{}: {} retained, {} excluded", path.display(), outcome.report.retained, excluded);
    }
    Ok(outcome.cohort)
}

fn simulate(a: SimulateArgs, config: &Config) -> anyhow::Result<()> {
    let c = &config.simulate;
    let mut spec = match a.spec.as_ref().or(c.spec.as_ref()) {
        Some(p) => read_structured::<GeneratorSpec>(p)?,
        None => GeneratorSpec::default(),
    };
    if let Some(n) = a.n.or(c.n) {
        spec.n = n;
    }
    if let Some(s) = a.seed.or(c.seed) {
        spec.seed = s;
    }
    if let Some(sd) = a.noise_sd.or(c.noise_sd) {
        spec.noise_sd = sd;
    }
    let cohort = generate_cohort(&spec)?;
    let mut bytes = Vec::new();
    write_cohort_csv(&cohort, &mut bytes)?;
    write_file(&a.out, &bytes)?;
    println!("wrote {} patients to {}", cohort.len(), a.out.display());
    Ok(())
}

fn parse_features(names: &[String]) -> anyhow::Result<Vec<ProfileFeature>> {
    names
        .iter()
        .map(|n| {
            ProfileFeature::from_name(n.trim()).ok_or_else(|| {
                let known: Vec<&str> = ProfileFeature::ALL.iter().map(|f| f.name()).collect();
                anyhow!("unknown feature `{n}` (expected one of {})", known.join(", "))
            })
        })
        .collect()
}

/// Everything `train` learned besides the artifact and metric report.
#[derive(Debug, Serialize)]
struct TrainSummary<'a> {
    selection: Option<&'a SelectionReport>,
    features: Vec<&'static str>,
    n_train: usize,
    n_test: usize,
    heldout: &'a [HeldOutError],
    heldout_pooled_twl_rmse: Option<f64>,
    comparators: Option<&'a [ComparatorRow]>,
}

fn default_report_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".report.json");
    out.with_file_name(name)
}

fn train(a: TrainArgs, config: &Config) -> anyhow::Result<()> {
    let c = &config.train;
    let cohort = load_cohort_file(&a.cohort)?;
    let mut opts = PipelineOptions::default();
    let mut topts = TrainOptions::default();
    topts.seed = a.seed.or(c.seed).unwrap_or(topts.seed);
    topts.split_ratio = a.split.or(c.split).unwrap_or(topts.split_ratio);
    if let Some(t) = a.timepoints.clone().or_else(|| c.timepoints.clone()) {
        topts.timepoints = t.clone();
        opts.selection_timepoints = t;
    }
    topts.evaluation = EvaluationOptions {
        bootstrap: a.bootstrap.or(c.bootstrap).unwrap_or(EvaluationOptions::default().bootstrap),
        seed: topts.seed,
        ..EvaluationOptions::default()
    };
    topts.created_at = a.created_at.clone();
    opts.train = topts;
    opts.imputations = a.imputations.or(c.imputations).unwrap_or(opts.imputations);
    if let Some(f) = a.features.as_ref().or(c.features.as_ref()) {
        opts.features = Some(parse_features(f)?);
    }
    let outcome = run_pipeline(&cohort, &opts)?;
    let training = &outcome.training;
    let model = &training.model;

    let comparators = if a.compare || c.compare.unwrap_or(false) {
        let mut copts = ComparatorOptions::default();
        if let Some(n) = a.forest_trees.or(c.forest_trees) {
            copts.forest = EnsembleOptions { n_trees: n, ..copts.forest };
        }
        Some(compare_models(&cohort, training, &copts)?)
    } else {
        None
    };

    save_model(model, &a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    let report_path = a.report.clone().unwrap_or_else(|| default_report_path(&a.out));
    if let Some(r) = &training.report {
        write_file(&report_path, serde_json::to_string_pretty(r)?.as_bytes())?;
    }
    let summary = TrainSummary {
        selection: outcome.selection.as_ref(),
        features: model.features().iter().map(|f| f.name()).collect(),
        n_train: training.train_rows.len(),
        n_test: training.test_rows.len(),
        heldout: &training.heldout,
        heldout_pooled_twl_rmse: training.heldout_pooled_twl_rmse,
        comparators: comparators.as_deref(),
    };
    let summary_path = report_path.with_file_name(
        report_path.file_name().unwrap_or_default().to_string_lossy().replace(".report.json", "") + ".summary.json",
    );
    write_file(&summary_path, serde_json::to_string_pretty(&summary)?.as_bytes())?;

    let mut out = std::io::stdout().lock();
    if let Some(s) = &outcome.selection {
        for d in &s.screen.dropped {
            writeln!(out, "screened out\t{}\t{}", d.name, serde_json::to_string(&d.reason)?)?;
        }
        for (name, freq) in &s.pooled.frequency {
            writeln!(out, "selected\t{name}\t{freq:.2}")?;
        }
    }
    writeln!(out, "model features\t{}", summary.features.join(","))?;
    writeln!(out, "patients\ttrain {}\ttest {}", summary.n_train, summary.n_test)?;
    for h in &training.heldout {
        writeln!(out, "held-out month {}\tn {}\tTWL RMSE {:.3}\tTWL MAD {:.3}", h.month, h.n, h.twl_rmse, h.twl_mad)?;
    }
    if let Some(r) = training.heldout_pooled_twl_rmse {
        writeln!(out, "held-out pooled TWL RMSE\t{r:.3}")?;
    }
    if let Some(rows) = &comparators {
        write!(out, "{}", comparators_tsv(rows))?;
    }
    writeln!(out, "artifact\t{}", a.out.display())?;
    if training.report.is_some() {
        writeln!(out, "report\t{}", report_path.display())?;
    }
    writeln!(out, "summary\t{}", summary_path.display())?;
    Ok(())
}

fn inspect(a: InspectArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model).with_context(|| format!("cannot load model {}", a.model.display()))?;
    if let Some(m) = a.month {
        if !model.timepoints.contains(&m) {
            bail!("model has no tree for month {m} (months: {:?})", model.timepoints);
        }
    }
    let mut out = std::io::stdout().lock();
    for (t, tree) in model.timepoints.iter().zip(&model.trees) {
        if a.month.is_some_and(|m| m != *t) {
            continue;
        }
        writeln!(out, "== month {t}: TWL (%), {} leaves ==", tree.n_leaves())?;
        write!(out, "{}", render_tree(tree, a.surrogates))?;
        writeln!(out)?;
    }
    Ok(())
}

fn validate(a: ValidateArgs, config: &Config) -> anyhow::Result<()> {
    let c = &config.validate;
    let model = load_model(&a.model).with_context(|| format!("cannot load model {}", a.model.display()))?;
    let cohort = load_cohort_file(&a.cohort)?;
    let mut opts = EvaluationOptions::default();
    opts.bootstrap = a.bootstrap.or(c.bootstrap).unwrap_or(opts.bootstrap);
    opts.seed = a.seed.or(c.seed).unwrap_or(opts.seed);
    opts.timepoints.retain(|t| model.timepoints.contains(t));
    let report = evaluate_cohort(&model, &cohort, &opts)?;
    if let Some(p) = &a.out {
        write_file(p, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    if let Some(p) = &a.bland_altman {
        let mut s = String::from("month\tmean\tdifference\n");
        for (t, ba) in &report.bland_altman {
            for (m, d) in &ba.pairs {
                s.push_str(&format!("{t}\t{m}\t{d}\n"));
            }
        }
        write_file(p, s.as_bytes())?;
    }
    print!("{}", report.to_tsv());
    let mut out = std::io::stdout().lock();
    for (t, ba) in &report.bland_altman {
        writeln!(out, "bland-altman month {t}\tbias {:.3}\tlimits {:.3} to {:.3}", ba.bias, ba.loa_lo, ba.loa_hi)?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> anyhow::Result<()> {
    let mut reports = Vec::new();
    for spec in &a.reports {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_name().unwrap_or_default().to_string_lossy();
                let name = stem.trim_end_matches(".json").trim_end_matches(".report").to_string();
                (name, p)
            }
        };
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let r: MetricReport =
            serde_json::from_str(&text).with_context(|| format!("{} is not a metric report", path.display()))?;
        reports.push((name, r));
    }
    let timepoints = reports[0].1.timepoints.clone();
    if let Some((name, _)) = reports.iter().find(|(_, r)| r.timepoints != timepoints) {
        bail!("report `{name}` covers months other than {timepoints:?}");
    }
    let text = match a.table {
        TableKind::Tsv => reports.iter().map(|(n, r)| format!("# {n}\n{}", r.to_tsv())).collect::<String>(),
        TableKind::Operations => {
            let many = reports.len() > 1;
            let rows: Vec<(String, Vec<Option<&MetricCell>>)> = reports
                .iter()
                .flat_map(|(n, r)| {
                    r.operation_rows().into_iter().map(move |(label, cells)| {
                        (if many { format!("{n}: {label}") } else { label }, cells)
                    })
                })
                .collect();
            render_table(&rows, &timepoints)
        }
        TableKind::Cohorts => {
            let mut rows: Vec<(String, Vec<Option<&MetricCell>>)> =
                reports.iter().map(|(n, r)| r.cohort_row(n)).collect();
            let weighted: Vec<MetricCell> = timepoints
                .iter()
                .map(|&t| {
                    let cells: Vec<&MetricCell> = reports.iter().filter_map(|(_, r)| r.cell(t, Stratum::Overall)).collect();
                    weighted_mean_cell(&cells, t)
                })
                .collect();
            if reports.len() > 1 {
                rows.push(("Weighted mean".to_string(), weighted.iter().map(Some).collect()));
            }
            render_table(&rows, &timepoints)
        }
    };
    print!("{text}");
    Ok(())
}

fn predict(a: PredictArgs) -> anyhow::Result<()> {
    let loaded = LoadedModel::from_path(&a.model).with_context(|| format!("cannot load model {}", a.model.display()))?;
    let profile = PatientProfile {
        age_years: a.age,
        weight_kg: a.weight,
        height_m: a.height,
        smoker: match a.smoker {
            SmokerArg::Yes => Some(true),
            SmokerArg::No => Some(false),
            SmokerArg::Unknown => None,
        },
        diabetes_status: a.diabetes.parse().map_err(|e: String| anyhow!(e))?,
        diabetes_duration_years: a.diabetes_years,
        operation: a.operation.parse().map_err(|e: String| anyhow!(e))?,
    };
    let request = PredictRequest { units: a.units.parse().map_err(|e: String| anyhow!(e))?, scenarios: vec![profile] };
    let response = handle_predict(&loaded, &request).map_err(|e| {
        let body = e.body();
        let details: Vec<String> = body.fields.iter().map(|f| format!("{}: {}", f.field, f.message)).collect();
        if details.is_empty() {
            anyhow!(body.message)
        } else {
            anyhow!("{}: {}", body.message, details.join("; "))
        }
    })?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&response)?);
        return Ok(());
    }
    let s = &response.scenarios[0];
    let mut out = std::io::stdout().lock();
    writeln!(out, "month\t{u}\t{u}_q25\t{u}_q75", u = response.units)?;
    for p in if a.curve { &s.curve } else { &s.points } {
        writeln!(out, "{}\t{:.2}\t{:.2}\t{:.2}", p.month, p.value, p.lo, p.hi)?;
    }
    Ok(())
}

fn serve(a: ServeArgs, config: &Config) -> anyhow::Result<()> {
    let c = &config.serve;
    let bind = a.bind.clone().or_else(|| c.bind.clone()).unwrap_or_else(|| "127.0.0.1:8080".into());
    let bind = bind.parse().with_context(|| format!("invalid bind address `{bind}`"))?;
    let cors_origins = if a.cors_origins.is_empty() { c.cors_origins.clone().unwrap_or_default() } else { a.cors_origins };
    let reload = a.reload_secs.or(c.reload_secs).unwrap_or(5);
    let config = ServiceConfig {
        model_path: a.model,
        bind,
        cors_origins,
        reload_interval: (reload > 0).then(|| Duration::from_secs(reload)),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(wtraj_service::serve(config, async {
        let _ = tokio::signal::ctrl_c().await;
    }))?;
    Ok(())
}
