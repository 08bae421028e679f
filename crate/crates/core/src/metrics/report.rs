//! Per-timepoint, per-stratum validation tables.

use super::{bca_interval, bland_altman, mean, median, sample_sd, BlandAltman, MetricError};
use crate::cohort::{Cohort, Operation};
use crate::trajectory::{PatientProfile, TrajectoryModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Months reported in the validation tables.
pub const REPORT_TIMEPOINTS: [u32; 3] = [12, 24, 60];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOptions {
    /// Bootstrap replications per interval; 0 skips the intervals.
    pub bootstrap: usize,
    pub level: f64,
    pub seed: u64,
    pub timepoints: Vec<u32>,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self { bootstrap: 10_000, level: 0.95, seed: 1, timepoints: REPORT_TIMEPOINTS.to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Stratum {
    Overall,
    Operation(Operation),
    /// Stratum-size-weighted mean of other rows.
    Weighted,
}

impl Stratum {
    pub const ALL: [Stratum; 4] = [
        Stratum::Overall,
        Stratum::Operation(Operation::Rygb),
        Stratum::Operation(Operation::Sg),
        Stratum::Operation(Operation::Agb),
    ];

    fn contains(self, op: Operation) -> bool {
        match self {
            Stratum::Overall => true,
            Stratum::Operation(o) => o == op,
            Stratum::Weighted => false,
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stratum::Overall => f.write_str("overall"),
            Stratum::Operation(o) => f.write_str(o.code()),
            Stratum::Weighted => f.write_str("weighted"),
        }
    }
}

impl From<Stratum> for String {
    fn from(s: Stratum) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Stratum {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        match s.as_str() {
            "overall" => Ok(Stratum::Overall),
            "weighted" => Ok(Stratum::Weighted),
            other => other.parse().map(Stratum::Operation),
        }
    }
}

/// A statistic with an optional bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    /// Mean of predicted − observed BMI.
    pub bmi_diff_mean: f64,
    pub bmi_diff_sd: Option<f64>,
    pub mad: Estimate,
    pub rmse: Estimate,
    /// Percent of observed BMI.
    pub normalized_mad: Estimate,
    pub normalized_rmse: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub timepoint: u32,
    pub stratum: Stratum,
    pub n: usize,
    /// `None` marks an unavailable cell (no patients).
    pub metrics: Option<CellMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub timepoints: Vec<u32>,
    pub bootstrap: usize,
    pub level: f64,
    /// Overall and per-operation cells for every timepoint.
    pub cells: Vec<MetricCell>,
    /// Per timepoint, the operation strata weighted by their sizes.
    pub weighted: Vec<MetricCell>,
    /// Agreement of predicted with observed BMI over all patients.
    pub bland_altman: Vec<(u32, BlandAltman)>,
}

/// Predicted and observed BMI of one patient at one visit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub timepoint: u32,
    pub operation: Operation,
    pub predicted_bmi: f64,
    pub observed_bmi: f64,
}

fn rmse_stat(e: &[f64]) -> f64 {
    (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt()
}

fn median_stat(v: &[f64]) -> f64 {
    median(&mut v.to_vec())
}

fn derived_seed(seed: u64, timepoint: u32, stratum: usize, metric: usize) -> u64 {
    let key = (u64::from(timepoint) << 16) | ((stratum as u64) << 8) | metric as u64;
    seed ^ key.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn cell_metrics(rows: &[&PredictionRow], opts: &EvaluationOptions, tp: u32, stratum: usize) -> Result<CellMetrics, MetricError> {
    let diffs: Vec<f64> = rows.iter().map(|r| r.predicted_bmi - r.observed_bmi).collect();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let mut ratio = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if !(r.observed_bmi > 0.0) {
            return Err(MetricError::NonPositiveObserved(i));
        }
        ratio.push(100.0 * (r.observed_bmi - r.predicted_bmi) / r.observed_bmi);
    }
    let abs_ratio: Vec<f64> = ratio.iter().map(|v| v.abs()).collect();
    let with_ci = opts.bootstrap > 0 && rows.len() >= 2;
    let estimate = |data: &[f64], stat: fn(&[f64]) -> f64, metric: usize| -> Result<Estimate, MetricError> {
        let value = stat(data);
        if !with_ci {
            return Ok(Estimate { value, lo: None, hi: None });
        }
        let ci = bca_interval(data, stat, opts.bootstrap, opts.level, derived_seed(opts.seed, tp, stratum, metric))?;
        Ok(Estimate { value, lo: Some(ci.lo), hi: Some(ci.hi) })
    };
    Ok(CellMetrics {
        bmi_diff_mean: mean(&diffs),
        bmi_diff_sd: (diffs.len() >= 2).then(|| sample_sd(&diffs)),
        mad: estimate(&abs, median_stat, 0)?,
        rmse: estimate(&diffs, rmse_stat, 1)?,
        normalized_mad: estimate(&abs_ratio, median_stat, 2)?,
        normalized_rmse: estimate(&ratio, rmse_stat, 3)?,
    })
}

/// Size-weighted mean `Σ nᵢ·vᵢ / Σ nᵢ` of available cells, applied to every
/// estimate and interval bound (a bound is kept only if every cell has it).
pub fn weighted_mean_cell(cells: &[&MetricCell], timepoint: u32) -> MetricCell {
    let avail: Vec<(&CellMetrics, f64)> =
        cells.iter().filter_map(|c| c.metrics.as_ref().map(|m| (m, c.n as f64))).collect();
    let n: usize = cells.iter().filter(|c| c.metrics.is_some()).map(|c| c.n).sum();
    if avail.is_empty() || n == 0 {
        return MetricCell { timepoint, stratum: Stratum::Weighted, n: 0, metrics: None };
    }
    let total = n as f64;
    let wmean = |f: &dyn Fn(&CellMetrics) -> Option<f64>| -> Option<f64> {
        let mut s = 0.0;
        for (m, w) in &avail {
            s += w * f(m)?;
        }
        Some(s / total)
    };
    let west = |f: fn(&CellMetrics) -> Estimate| Estimate {
        value: wmean(&|m| Some(f(m).value)).expect("values always present"),
        lo: wmean(&|m| f(m).lo),
        hi: wmean(&|m| f(m).hi),
    };
    MetricCell {
        timepoint,
        stratum: Stratum::Weighted,
        n,
        metrics: Some(CellMetrics {
            bmi_diff_mean: wmean(&|m| Some(m.bmi_diff_mean)).expect("present"),
            bmi_diff_sd: wmean(&|m| m.bmi_diff_sd),
            mad: west(|m| m.mad),
            rmse: west(|m| m.rmse),
            normalized_mad: west(|m| m.normalized_mad),
            normalized_rmse: west(|m| m.normalized_rmse),
        }),
    }
}

/// Builds the report from prediction rows. Cells parallelize; each interval
/// uses its own seed derived from (timepoint, stratum, metric).
pub fn evaluate_predictions(rows: &[PredictionRow], opts: &EvaluationOptions) -> Result<MetricReport, MetricError> {
    if rows.is_empty() {
        return Err(MetricError::Empty);
    }
    if rows.iter().any(|r| !r.predicted_bmi.is_finite() || !r.observed_bmi.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let jobs: Vec<(u32, usize, Stratum)> = opts
        .timepoints
        .iter()
        .flat_map(|&t| Stratum::ALL.iter().enumerate().map(move |(k, &s)| (t, k, s)))
        .collect();
    let cells: Vec<MetricCell> = jobs
        .par_iter()
        .map(|&(t, k, stratum)| {
            let sel: Vec<&PredictionRow> =
                rows.iter().filter(|r| r.timepoint == t && stratum.contains(r.operation)).collect();
            let metrics = if sel.is_empty() { None } else { Some(cell_metrics(&sel, opts, t, k)?) };
            Ok(MetricCell { timepoint: t, stratum, n: sel.len(), metrics })
        })
        .collect::<Result<_, MetricError>>()?;
    let weighted = opts
        .timepoints
        .iter()
        .map(|&t| {
            let ops: Vec<&MetricCell> =
                cells.iter().filter(|c| c.timepoint == t && matches!(c.stratum, Stratum::Operation(_))).collect();
            weighted_mean_cell(&ops, t)
        })
        .collect();
    let mut agreement = Vec::new();
    for &t in &opts.timepoints {
        let (p, o): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.timepoint == t).map(|r| (r.predicted_bmi, r.observed_bmi)).unzip();
        if p.len() >= 2 {
            agreement.push((t, bland_altman(&p, &o)?));
        }
    }
    Ok(MetricReport {
        timepoints: opts.timepoints.clone(),
        bootstrap: opts.bootstrap,
        level: opts.level,
        cells,
        weighted,
        bland_altman: agreement,
    })
}

/// Predicted vs observed BMI for every uncensored visit of `cohort` at the
/// requested timepoints.
pub fn prediction_rows(model: &TrajectoryModel, cohort: &Cohort, timepoints: &[u32]) -> Result<Vec<PredictionRow>, MetricError> {
    let mut index = Vec::new();
    for &t in timepoints {
        let k = model
            .timepoints
            .iter()
            .position(|m| *m == t)
            .ok_or_else(|| MetricError::Parameter(format!("model has no month {t} tree")))?;
        index.push((t, k));
    }
    let mut rows = Vec::new();
    for r in &cohort.records {
        let twl = model.predict_twl(&PatientProfile::from_record(r));
        let h2 = r.height_m * r.height_m;
        for &(t, k) in &index {
            if r.is_censored_at(t) {
                continue;
            }
            if let Some(v) = r.visit(t) {
                rows.push(PredictionRow {
                    timepoint: t,
                    operation: r.operation,
                    predicted_bmi: r.weight_kg * (1.0 - twl[k] / 100.0) / h2,
                    observed_bmi: v.weight_kg / h2,
                });
            }
        }
    }
    Ok(rows)
}

/// Validation report of `model` on `cohort`.
pub fn evaluate_cohort(model: &TrajectoryModel, cohort: &Cohort, opts: &EvaluationOptions) -> Result<MetricReport, MetricError> {
    evaluate_predictions(&prediction_rows(model, cohort, &opts.timepoints)?, opts)
}

fn na() -> String {
    "NA".into()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(na, |x| x.to_string())
}

impl MetricReport {
    pub fn cell(&self, timepoint: u32, stratum: Stratum) -> Option<&MetricCell> {
        if stratum == Stratum::Weighted {
            return self.weighted.iter().find(|c| c.timepoint == timepoint);
        }
        self.cells.iter().find(|c| c.timepoint == timepoint && c.stratum == stratum)
    }

    /// One row per cell, every statistic and bound in its own column.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("timepoint\tstratum\tn\tbmi_diff_mean\tbmi_diff_sd");
        for m in ["mad", "rmse", "normalized_mad", "normalized_rmse"] {
            s.push_str(&format!("\t{m}\t{m}_lo\t{m}_hi"));
        }
        s.push('\n');
        for c in self.cells.iter().chain(&self.weighted) {
            s.push_str(&format!("{}\t{}\t{}", c.timepoint, c.stratum, c.n));
            match &c.metrics {
                None => s.push_str(&"\tNA".repeat(14)),
                Some(m) => {
                    s.push_str(&format!("\t{}\t{}", m.bmi_diff_mean, opt(m.bmi_diff_sd)));
                    for e in [m.mad, m.rmse, m.normalized_mad, m.normalized_rmse] {
                        s.push_str(&format!("\t{}\t{}\t{}", e.value, opt(e.lo), opt(e.hi)));
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Column groups of the published comparison tables.
pub const TABLE_GROUPS: [&str; 3] = [
    "BMI difference in kg/m² (SD)",
    "RMSE in kg/m² (95% CI)",
    "Normalised RMSE in percentage of BMI (95% CI)",
];

fn fmt_estimate(e: &Estimate) -> String {
    match (e.lo, e.hi) {
        (Some(lo), Some(hi)) => format!("{:.1} ({:.1}-{:.1})", e.value, lo, hi),
        _ => format!("{:.1}", e.value),
    }
}

/// Tab-separated table with the BMI difference, RMSE and normalised RMSE
/// groups across `timepoints`; one line per labelled row of cells.
pub fn render_table(rows: &[(String, Vec<Option<&MetricCell>>)], timepoints: &[u32]) -> String {
    let mut s = String::new();
    for g in TABLE_GROUPS {
        s.push('\t');
        s.push_str(g);
        s.push_str(&"\t".repeat(timepoints.len() - 1));
    }
    s.push('\n');
    for _ in TABLE_GROUPS {
        for t in timepoints {
            s.push_str(&format!("\tMonth {t}"));
        }
    }
    s.push('\n');
    for (label, cells) in rows {
        s.push_str(label);
        for group in 0..TABLE_GROUPS.len() {
            for c in cells {
                let text = match c.and_then(|c| c.metrics.as_ref()) {
                    None => na(),
                    Some(m) => match group {
                        0 => match m.bmi_diff_sd {
                            Some(sd) => format!("{:.1} ({:.1})", m.bmi_diff_mean, sd),
                            None => format!("{:.1}", m.bmi_diff_mean),
                        },
                        1 => fmt_estimate(&m.rmse),
                        _ => fmt_estimate(&m.normalized_rmse),
                    },
                };
                s.push('\t');
                s.push_str(&text);
            }
        }
        s.push('\n');
    }
    s
}

impl MetricReport {
    /// Overall row of one cohort, labelled `name, n=…` (n at the last timepoint).
    pub fn cohort_row(&self, name: &str) -> (String, Vec<Option<&MetricCell>>) {
        let cells: Vec<Option<&MetricCell>> = self.timepoints.iter().map(|&t| self.cell(t, Stratum::Overall)).collect();
        let n = cells.iter().rev().flatten().next().map_or(0, |c| c.n);
        (format!("{name}, n={n}"), cells)
    }

    /// Per-operation rows.
    pub fn operation_rows(&self) -> Vec<(String, Vec<Option<&MetricCell>>)> {
        Operation::ALL
            .iter()
            .map(|&o| {
                let label = match o {
                    Operation::Rygb => "Roux-en-Y gastric bypass",
                    Operation::Sg => "Sleeve gastrectomy",
                    Operation::Agb => "Adjusted gastric banding",
                };
                (label.to_string(), self.timepoints.iter().map(|&t| self.cell(t, Stratum::Operation(o))).collect())
            })
            .collect()
    }
}
