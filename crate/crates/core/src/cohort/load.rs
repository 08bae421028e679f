//! CSV ingestion with eligibility and censoring rules.
//!
//! Header columns (UTF-8, comma separated):
//! `id, age, weight_kg, height_m, sex, smoker, diabetes, diabetes_years,
//! operation, prior_surgery, weight_m1, weight_m3, weight_m12, weight_m24,
//! weight_m60`. Optional `month_m1` .. `month_m60` columns carry the actual
//! month each visit took place; a visit outside the tolerance window of its
//! scheduled month counts as missing. Columns prefixed `x_` become extra
//! baseline features. An empty cell or `NA` is a missing value.

use super::{
    Cohort, ColumnKind, DiabetesStatus, FeatureColumn, FeatureValue, Operation, PatientRecord, Sex,
    VisitRecord, HEIGHT_RANGE_M, MIN_AGE_YEARS, SCHEDULED_MONTHS, WEIGHT_RANGE_KG,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

const REQUIRED: [&str; 10] = [
    "id",
    "age",
    "weight_kg",
    "height_m",
    "sex",
    "smoker",
    "diabetes",
    "diabetes_years",
    "operation",
    "prior_surgery",
];

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// A visit maps to scheduled month `m` when within `fraction * m` months of it...
    pub visit_window_fraction: f64,
    /// ...or within this many months, whichever is larger.
    pub visit_window_min_months: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { visit_window_fraction: 0.25, visit_window_min_months: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Malformed,
    DuplicateId,
    Underage,
    PriorBariatricSurgery,
    OutOfRange,
}

impl ExclusionReason {
    pub const ALL: [ExclusionReason; 5] = [
        ExclusionReason::Malformed,
        ExclusionReason::DuplicateId,
        ExclusionReason::Underage,
        ExclusionReason::PriorBariatricSurgery,
        ExclusionReason::OutOfRange,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ExclusionReason::Malformed => "malformed",
            ExclusionReason::DuplicateId => "duplicate_id",
            ExclusionReason::Underage => "age_under_18",
            ExclusionReason::PriorBariatricSurgery => "prior_bariatric_surgery",
            ExclusionReason::OutOfRange => "out_of_range",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number in the source, header being line 1.
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub rows_read: usize,
    pub retained: usize,
    pub excluded: BTreeMap<ExclusionReason, usize>,
    /// Retained records censored before month 60.
    pub censored: usize,
    /// Visits dropped because they fell outside the scheduling window.
    pub out_of_window_visits: usize,
}

impl ExclusionReport {
    pub fn total_excluded(&self) -> usize {
        self.excluded.values().sum()
    }
}

impl fmt::Display for ExclusionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows_read: {}", self.rows_read)?;
        writeln!(f, "retained: {}", self.retained)?;
        for reason in ExclusionReason::ALL {
            writeln!(f, "excluded.{}: {}", reason.key(), self.excluded.get(&reason).copied().unwrap_or(0))?;
        }
        writeln!(f, "censored: {}", self.censored)?;
        writeln!(f, "out_of_window_visits: {}", self.out_of_window_visits)
    }
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub cohort: Cohort,
    pub report: ExclusionReport,
    pub row_errors: Vec<RowError>,
}

struct Columns {
    required: [usize; REQUIRED.len()],
    weights: [usize; 5],
    months: [Option<usize>; 5],
    extras: Vec<(String, usize)>,
}

fn resolve_columns(headers: &csv::StringRecord) -> Result<Columns, LoadError> {
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    if index.len() != headers.len() {
        return Err(LoadError::Schema("duplicate column names in header".into()));
    }
    let find = |name: &str| {
        index.get(name).copied().ok_or_else(|| LoadError::Schema(format!("missing column `{name}`")))
    };
    let mut required = [0; REQUIRED.len()];
    for (slot, name) in required.iter_mut().zip(REQUIRED) {
        *slot = find(name)?;
    }
    let mut weights = [0; 5];
    let mut months = [None; 5];
    for (k, m) in SCHEDULED_MONTHS.iter().enumerate() {
        weights[k] = find(&format!("weight_m{m}"))?;
        months[k] = index.get(format!("month_m{m}").as_str()).copied();
    }
    let known: HashSet<String> = REQUIRED
        .iter()
        .map(|s| s.to_string())
        .chain(SCHEDULED_MONTHS.iter().flat_map(|m| [format!("weight_m{m}"), format!("month_m{m}")]))
        .collect();
    let mut extras = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if h.starts_with("x_") {
            extras.push((h.to_string(), i));
        } else if !known.contains(h) {
            return Err(LoadError::Schema(format!("unexpected column `{h}`")));
        }
    }
    Ok(Columns { required, weights, months, extras })
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "NA"
}

fn parse_f64(cell: &str, name: &str) -> Result<f64, String> {
    let v: f64 = cell.trim().parse().map_err(|_| format!("{name}: cannot parse `{}` as a number", cell.trim()))?;
    if !v.is_finite() {
        return Err(format!("{name}: value is not finite"));
    }
    Ok(v)
}

fn parse_flag(cell: &str, name: &str) -> Result<bool, String> {
    match cell.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("{name}: expected 0 or 1, got `{other}`")),
    }
}

struct ParsedRow {
    record: PatientRecord,
    out_of_window: usize,
}

fn parse_row(row: &csv::StringRecord, cols: &Columns, opts: &LoadOptions) -> Result<ParsedRow, String> {
    let get = |i: usize| row.get(i).unwrap_or("");
    let [c_id, c_age, c_w, c_h, c_sex, c_smk, c_dm, c_dmy, c_op, c_prior] = cols.required;
    let id = get(c_id).trim().to_string();
    if id.is_empty() {
        return Err("id: empty".into());
    }
    let age_years = parse_f64(get(c_age), "age")?;
    let weight_kg = parse_f64(get(c_w), "weight_kg")?;
    let height_m = parse_f64(get(c_h), "height_m")?;
    let sex = match get(c_sex).trim() {
        "F" => Sex::Female,
        "M" => Sex::Male,
        other => return Err(format!("sex: expected F or M, got `{other}`")),
    };
    let smoker = if is_missing(get(c_smk)) { None } else { Some(parse_flag(get(c_smk), "smoker")?) };
    let diabetes_status: DiabetesStatus = get(c_dm).parse().map_err(|e| format!("diabetes: {e}"))?;
    let diabetes_duration_years = if is_missing(get(c_dmy)) {
        if diabetes_status == DiabetesStatus::T2d {
            return Err("diabetes_years: required when diabetes is t2d".into());
        }
        0.0
    } else {
        parse_f64(get(c_dmy), "diabetes_years")?
    };
    if diabetes_duration_years < 0.0 {
        return Err("diabetes_years: negative".into());
    }
    if diabetes_status != DiabetesStatus::T2d && diabetes_duration_years != 0.0 {
        return Err("diabetes_years: must be 0 unless diabetes is t2d".into());
    }
    let operation: Operation = get(c_op).parse().map_err(|e| format!("operation: {e}"))?;
    let prior_bariatric_surgery = parse_flag(get(c_prior), "prior_surgery")?;

    let mut visits = Vec::new();
    let mut censored_after_months = None;
    let mut out_of_window = 0;
    let mut previous = 0;
    for (k, &m) in SCHEDULED_MONTHS.iter().enumerate() {
        let cell = get(cols.weights[k]);
        let mut present = !is_missing(cell);
        let weight = if present { parse_f64(cell, &format!("weight_m{m}"))? } else { f64::NAN };
        if present && weight <= 0.0 {
            return Err(format!("weight_m{m}: must be positive"));
        }
        if present {
            if let Some(mc) = cols.months[k] {
                let cell = get(mc);
                if !is_missing(cell) {
                    let actual = parse_f64(cell, &format!("month_m{m}"))?;
                    let tol = (opts.visit_window_fraction * m as f64).max(opts.visit_window_min_months);
                    if (actual - m as f64).abs() > tol {
                        present = false;
                        out_of_window += 1;
                    }
                }
            }
        }
        if !present {
            censored_after_months = Some(previous);
            break;
        }
        visits.push(VisitRecord { month: m, weight_kg: weight });
        previous = m;
    }

    Ok(ParsedRow {
        record: PatientRecord {
            id,
            age_years,
            weight_kg,
            height_m,
            sex,
            smoker,
            diabetes_status,
            diabetes_duration_years,
            operation,
            prior_bariatric_surgery,
            visits,
            censored_after_months,
        },
        out_of_window,
    })
}

fn infer_column(name: String, raw: Vec<Option<String>>) -> FeatureColumn {
    let observed: Vec<&str> = raw.iter().flatten().map(|s| s.as_str()).collect();
    let numeric: Option<Vec<f64>> = observed.iter().map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
    let kind = match &numeric {
        Some(vals) if vals.iter().all(|&v| v == 0.0 || v == 1.0) && !vals.is_empty() => ColumnKind::Boolean,
        Some(_) => ColumnKind::Continuous,
        None => ColumnKind::Categorical,
    };
    let values = raw
        .into_iter()
        .map(|cell| match (cell, kind) {
            (None, _) => FeatureValue::Missing,
            (Some(s), ColumnKind::Categorical) => FeatureValue::Categorical(s),
            (Some(s), _) => FeatureValue::Numeric(s.parse().expect("checked numeric")),
        })
        .collect();
    FeatureColumn { name, kind, values }
}

/// Reads a cohort, applying eligibility and censoring rules.
///
/// Malformed rows are collected into `row_errors` and counted in the
/// exclusion report; only a header that does not match the schema is fatal.
pub fn load_cohort<R: Read>(source: R, opts: &LoadOptions) -> Result<LoadOutcome, LoadError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let cols = resolve_columns(&headers)?;

    let mut excluded: BTreeMap<ExclusionReason, usize> = ExclusionReason::ALL.iter().map(|&r| (r, 0)).collect();
    let mut row_errors = Vec::new();
    let mut records = Vec::new();
    let mut extra_raw: Vec<Vec<Option<String>>> = vec![Vec::new(); cols.extras.len()];
    let mut seen = HashSet::new();
    let mut rows_read = 0;
    let mut out_of_window_visits = 0;

    for (i, row) in reader.records().enumerate() {
        rows_read += 1;
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                *excluded.get_mut(&ExclusionReason::Malformed).unwrap() += 1;
                row_errors.push(RowError { line, id: None, message: e.to_string() });
                continue;
            }
        };
        if row.len() != headers.len() {
            *excluded.get_mut(&ExclusionReason::Malformed).unwrap() += 1;
            row_errors.push(RowError {
                line,
                id: row.get(cols.required[0]).map(|s| s.trim().to_string()),
                message: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
            continue;
        }
        let parsed = match parse_row(&row, &cols, opts) {
            Ok(p) => p,
            Err(message) => {
                *excluded.get_mut(&ExclusionReason::Malformed).unwrap() += 1;
                row_errors.push(RowError {
                    line,
                    id: row.get(cols.required[0]).map(|s| s.trim().to_string()),
                    message,
                });
                continue;
            }
        };
        let rec = parsed.record;
        let reason = if !seen.insert(rec.id.clone()) {
            Some(ExclusionReason::DuplicateId)
        } else if rec.age_years < MIN_AGE_YEARS {
            Some(ExclusionReason::Underage)
        } else if rec.prior_bariatric_surgery {
            Some(ExclusionReason::PriorBariatricSurgery)
        } else if !(rec.height_m > HEIGHT_RANGE_M.0 && rec.height_m < HEIGHT_RANGE_M.1)
            || !(rec.weight_kg >= WEIGHT_RANGE_KG.0 && rec.weight_kg <= WEIGHT_RANGE_KG.1)
        {
            Some(ExclusionReason::OutOfRange)
        } else {
            None
        };
        if let Some(reason) = reason {
            *excluded.get_mut(&reason).unwrap() += 1;
            continue;
        }
        out_of_window_visits += parsed.out_of_window;
        for (slot, (_, idx)) in extra_raw.iter_mut().zip(&cols.extras) {
            let cell = row.get(*idx).unwrap_or("");
            slot.push(if is_missing(cell) { None } else { Some(cell.trim().to_string()) });
        }
        records.push(rec);
    }

    let extra_features = cols
        .extras
        .iter()
        .zip(extra_raw)
        .map(|((name, _), raw)| infer_column(name.clone(), raw))
        .collect();
    let censored = records.iter().filter(|r| r.censored_after_months.is_some()).count();
    let report = ExclusionReport {
        rows_read,
        retained: records.len(),
        excluded,
        censored,
        out_of_window_visits,
    };
    let cohort = Cohort::new(records, extra_features).expect("ids deduplicated and columns aligned during load");
    Ok(LoadOutcome { cohort, report, row_errors })
}

pub fn load_cohort_path(path: &Path, opts: &LoadOptions) -> Result<LoadOutcome, LoadError> {
    let file = std::fs::File::open(path)?;
    load_cohort(std::io::BufReader::new(file), opts)
}

fn fmt_num(v: f64) -> String {
    // Shortest round-trip representation keeps written cohorts lossless.
    format!("{v}")
}

/// Writes a cohort in the ingestion schema. Censored visits are left empty.
pub fn write_cohort_csv<W: Write>(cohort: &Cohort, sink: W) -> Result<(), LoadError> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    header.extend(SCHEDULED_MONTHS.iter().map(|m| format!("weight_m{m}")));
    header.extend(cohort.extra_features.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    for (i, r) in cohort.records.iter().enumerate() {
        let mut row = vec![
            r.id.clone(),
            fmt_num(r.age_years),
            fmt_num(r.weight_kg),
            fmt_num(r.height_m),
            match r.sex {
                Sex::Female => "F".into(),
                Sex::Male => "M".into(),
            },
            match r.smoker {
                None => "NA".into(),
                Some(true) => "1".into(),
                Some(false) => "0".into(),
            },
            r.diabetes_status.code().into(),
            fmt_num(r.diabetes_duration_years),
            r.operation.code().into(),
            if r.prior_bariatric_surgery { "1".into() } else { "0".into() },
        ];
        for m in SCHEDULED_MONTHS {
            row.push(r.visit(m).map(|v| fmt_num(v.weight_kg)).unwrap_or_default());
        }
        for c in &cohort.extra_features {
            row.push(match &c.values[i] {
                FeatureValue::Missing => String::new(),
                FeatureValue::Numeric(v) => fmt_num(*v),
                FeatureValue::Categorical(s) => s.clone(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
