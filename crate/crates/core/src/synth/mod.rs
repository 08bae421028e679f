//! Synthetic cohorts with calibrated baseline marginals and a planted,
//! tree-structured TWL surface.

use crate::cohort::{
    Cohort, ColumnKind, DiabetesStatus, FeatureColumn, FeatureValue, Operation, PatientRecord, Sex, VisitRecord,
    SCHEDULED_MONTHS,
};
use crate::trajectory::PatientProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Patients generated per random stream.
const BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    Invalid(String),
    #[error("cannot match mean {mean} and sd {sd} on [{lo}, {hi}]")]
    Infeasible { mean: f64, sd: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Marginals {
    pub age: MeanSd,
    pub age_range: (f64, f64),
    pub bmi: MeanSd,
    pub bmi_range: (f64, f64),
    pub weight_range: (f64, f64),
    pub female_height_m: MeanSd,
    pub male_height_m: MeanSd,
    pub female_fraction: f64,
    /// RYGB, SG, AGB.
    pub operation_mix: [f64; 3],
    /// none, pre, t2d.
    pub diabetes_mix: [f64; 3],
    pub smoker_fraction: f64,
    /// Years since diagnosis among t2d patients (gamma distributed).
    pub t2d_duration_years: MeanSd,
}

impl Default for Marginals {
    fn default() -> Self {
        Self {
            age: MeanSd { mean: 42.1, sd: 11.8 },
            age_range: (18.0, 74.0),
            bmi: MeanSd { mean: 47.0, sd: 7.4 },
            bmi_range: (32.0, 80.0),
            weight_range: (65.0, 295.0),
            female_height_m: MeanSd { mean: 1.63, sd: 0.065 },
            male_height_m: MeanSd { mean: 1.76, sd: 0.07 },
            female_fraction: 0.739,
            operation_mix: [0.614, 0.192, 0.194],
            diabetes_mix: [0.258, 0.396, 0.346],
            smoker_fraction: 0.105,
            t2d_duration_years: MeanSd { mean: 21.0, sd: 23.1 },
        }
    }
}

/// Planted TWL surface. Arrays are indexed by scheduled month
/// (1, 3, 12, 24, 60); penalties are subtracted, bonuses added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EffectParams {
    /// Reference-profile TWL per operation (RYGB, SG, AGB): no t2d, age at
    /// or below the threshold, non-smoker, BMI below the threshold.
    pub base: [[f64; 5]; 3],
    pub t2d_penalty: [f64; 5],
    /// Each duration threshold reached adds `duration_penalty`.
    pub duration_thresholds_years: Vec<f64>,
    pub duration_penalty: [f64; 5],
    pub age_threshold_years: f64,
    pub age_penalty: [f64; 5],
    pub smoking_bonus: [f64; 5],
    pub bmi_threshold: f64,
    pub bmi_bonus: [f64; 5],
}

impl Default for EffectParams {
    fn default() -> Self {
        Self {
            base: [
                [10.5, 21.0, 33.5, 34.8, 29.6],
                [10.0, 20.0, 31.8, 31.0, 25.0],
                [5.0, 9.5, 19.5, 22.6, 16.3],
            ],
            t2d_penalty: [0.5, 1.0, 2.0, 2.5, 2.5],
            duration_thresholds_years: vec![5.0, 20.0],
            duration_penalty: [0.3, 0.6, 1.2, 1.5, 1.5],
            age_threshold_years: 51.0,
            age_penalty: [0.5, 1.0, 2.5, 2.5, 2.5],
            smoking_bonus: [1.0, 1.5, 2.0, 0.0, 0.0],
            bmi_threshold: 50.0,
            bmi_bonus: [0.5, 1.0, 2.0, 2.0, 2.0],
        }
    }
}

fn month_index(month: u32) -> usize {
    SCHEDULED_MONTHS
        .iter()
        .position(|m| *m == month)
        .unwrap_or_else(|| panic!("month {month} is not a scheduled visit"))
}

impl EffectParams {
    /// Noiseless TWL of `profile` at a scheduled month. An unknown smoking
    /// status counts as non-smoking.
    ///
    /// # Panics
    /// When `month` is not one of the scheduled visits.
    pub fn oracle_twl(&self, profile: &PatientProfile, month: u32) -> f64 {
        let k = month_index(month);
        let mut twl = self.base[profile.operation.index()][k];
        if profile.diabetes_status == DiabetesStatus::T2d {
            twl -= self.t2d_penalty[k];
        }
        let crossed =
            self.duration_thresholds_years.iter().filter(|&&t| profile.diabetes_duration_years >= t).count() as f64;
        twl -= crossed * self.duration_penalty[k];
        if profile.age_years > self.age_threshold_years {
            twl -= self.age_penalty[k];
        }
        if profile.smoker == Some(true) {
            twl += self.smoking_bonus[k];
        }
        if profile.bmi() >= self.bmi_threshold {
            twl += self.bmi_bonus[k];
        }
        twl
    }

    /// Fraction of the maximal reference-profile loss regained by month 60, per operation.
    pub fn reference_regain(&self) -> [f64; 3] {
        self.base.map(|b| {
            let max = b.iter().copied().fold(f64::MIN, f64::max);
            (max - b[4]) / max
        })
    }
}

/// `oracle_twl` under the default effect parameters.
pub fn oracle_twl(profile: &PatientProfile, month: u32) -> f64 {
    EffectParams::default().oracle_twl(profile, month)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseKind {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
    Categorical { levels: Vec<String> },
    Constant { value: f64 },
    FreeText,
}

/// An `x_` column unrelated to the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseColumn {
    pub name: String,
    pub kind: NoiseKind,
    pub missing: f64,
}

impl NoiseColumn {
    fn new(name: &str, kind: NoiseKind, missing: f64) -> Self {
        Self { name: name.into(), kind, missing }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Missingness {
    pub smoker: f64,
    pub noise_columns: Vec<NoiseColumn>,
}

impl Default for Missingness {
    fn default() -> Self {
        let cat = |v: &[&str]| NoiseKind::Categorical { levels: v.iter().map(|s| s.to_string()).collect() };
        Self {
            smoker: 0.05,
            noise_columns: vec![
                NoiseColumn::new("x_hypertension", NoiseKind::Bernoulli { p: 0.45 }, 0.05),
                NoiseColumn::new("x_ldl_mmol", NoiseKind::Normal { mean: 3.1, sd: 0.9 }, 0.15),
                NoiseColumn::new("x_site", cat(&["A", "B", "C", "D"]), 0.0),
                NoiseColumn::new("x_activity", cat(&["low", "moderate", "high"]), 0.10),
                NoiseColumn::new("x_sleep_apnea", NoiseKind::Bernoulli { p: 0.3 }, 0.20),
                NoiseColumn::new("x_crp_mg_l", NoiseKind::Normal { mean: 6.0, sd: 3.0 }, 0.30),
                NoiseColumn::new("x_vitamin_d", NoiseKind::Normal { mean: 20.0, sd: 8.0 }, 0.60),
                NoiseColumn::new("x_form_version", NoiseKind::Constant { value: 2.0 }, 0.0),
                NoiseColumn::new("x_comment", NoiseKind::FreeText, 0.20),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub n: usize,
    pub seed: u64,
    pub marginals: Marginals,
    pub effects: EffectParams,
    /// Standard deviation of the Gaussian TWL noise, in percent.
    pub noise_sd: f64,
    pub missingness: Missingness,
    /// Probability that each scheduled visit is the first one missed,
    /// given the previous ones were attended.
    pub dropout: [f64; 5],
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            n: 5000,
            seed: 1,
            marginals: Marginals::default(),
            effects: EffectParams::default(),
            noise_sd: 4.0,
            missingness: Missingness::default(),
            dropout: [0.01, 0.02, 0.05, 0.08, 0.10],
        }
    }
}

fn check_fraction(name: &str, v: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SynthError::Invalid(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn check_mix(name: &str, mix: &[f64; 3]) -> Result<(), SynthError> {
    for (k, v) in mix.iter().enumerate() {
        check_fraction(&format!("{name}[{k}]"), *v)?;
    }
    let total: f64 = mix.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(SynthError::Invalid(format!("{name} must sum to 1, sums to {total}")));
    }
    Ok(())
}

fn check_dist(name: &str, d: MeanSd) -> Result<(), SynthError> {
    if !(d.sd > 0.0 && d.sd.is_finite() && d.mean.is_finite()) {
        return Err(SynthError::Invalid(format!("{name} needs a finite mean and a positive sd, got {d:?}")));
    }
    Ok(())
}

fn check_range(name: &str, r: (f64, f64)) -> Result<(), SynthError> {
    if !(r.0 < r.1) {
        return Err(SynthError::Invalid(format!("{name} bounds {r:?} are not increasing")));
    }
    Ok(())
}

/// Parent normal whose truncation to `[lo, hi]` has the given mean and sd,
/// found by fixed-point iteration on the truncated moments.
pub fn fit_truncated_normal(target: MeanSd, lo: f64, hi: f64) -> Result<MeanSd, SynthError> {
    let infeasible = || SynthError::Infeasible { mean: target.mean, sd: target.sd, lo, hi };
    // a distribution on [lo, hi] with this mean has variance at most (m − lo)(hi − m)
    if !(target.mean > lo && target.mean < hi) || target.sd * target.sd >= (target.mean - lo) * (hi - target.mean) {
        return Err(infeasible());
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let moments = |mu: f64, sigma: f64| {
        let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
        let z = std.cdf(b) - std.cdf(a);
        let (pa, pb) = (std.pdf(a), std.pdf(b));
        let r = (pa - pb) / z;
        let var = sigma * sigma * (1.0 + (a * pa - b * pb) / z - r * r);
        (mu + sigma * r, var.max(0.0).sqrt(), z)
    };
    let (mut mu, mut sigma) = (target.mean, target.sd);
    for _ in 0..500 {
        let (m, s, z) = moments(mu, sigma);
        if !(z > 1e-6) || !(s > 0.0) {
            return Err(infeasible());
        }
        if (m - target.mean).abs() < 1e-10 && (s - target.sd).abs() < 1e-10 {
            return Ok(MeanSd { mean: mu, sd: sigma });
        }
        mu += target.mean - m;
        sigma *= target.sd / s;
        if !(sigma.is_finite() && sigma < 1e3 * target.sd) {
            return Err(infeasible());
        }
    }
    Err(infeasible())
}

/// Checked spec with the parent normals of the truncated marginals.
struct Prepared {
    age: MeanSd,
    bmi: MeanSd,
    duration: Option<Gamma<f64>>,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        self.prepare().map(|_| ())
    }

    fn prepare(&self) -> Result<Prepared, SynthError> {
        let m = &self.marginals;
        if self.n == 0 {
            return Err(SynthError::Invalid("n must be at least 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(SynthError::Invalid(format!("noise_sd must be non-negative, got {}", self.noise_sd)));
        }
        for (name, d) in [
            ("age", m.age),
            ("bmi", m.bmi),
            ("female_height_m", m.female_height_m),
            ("male_height_m", m.male_height_m),
        ] {
            check_dist(name, d)?;
        }
        check_range("age_range", m.age_range)?;
        check_range("bmi_range", m.bmi_range)?;
        check_range("weight_range", m.weight_range)?;
        if m.age_range.0 < crate::cohort::MIN_AGE_YEARS {
            return Err(SynthError::Invalid("age_range must start at 18 or later".into()));
        }
        check_fraction("female_fraction", m.female_fraction)?;
        check_fraction("smoker_fraction", m.smoker_fraction)?;
        check_mix("operation_mix", &m.operation_mix)?;
        check_mix("diabetes_mix", &m.diabetes_mix)?;
        check_fraction("missingness.smoker", self.missingness.smoker)?;
        for c in &self.missingness.noise_columns {
            check_fraction(&format!("missingness of {}", c.name), c.missing)?;
            if !c.name.starts_with("x_") {
                return Err(SynthError::Invalid(format!("noise column `{}` must start with x_", c.name)));
            }
            match &c.kind {
                NoiseKind::Normal { sd, .. } if !(*sd >= 0.0) => {
                    return Err(SynthError::Invalid(format!("{}: sd must be non-negative", c.name)))
                }
                NoiseKind::Bernoulli { p } => check_fraction(&c.name, *p)?,
                NoiseKind::Categorical { levels } if levels.is_empty() => {
                    return Err(SynthError::Invalid(format!("{}: needs at least one level", c.name)))
                }
                _ => {}
            }
        }
        for (k, d) in self.dropout.iter().enumerate() {
            check_fraction(&format!("dropout[{k}]"), *d)?;
        }
        let e = &self.effects;
        if e.base.iter().flatten().chain(e.t2d_penalty.iter()).any(|v| !v.is_finite()) {
            return Err(SynthError::Invalid("effect parameters must be finite".into()));
        }
        let duration = if m.diabetes_mix[2] > 0.0 {
            check_dist("t2d_duration_years", m.t2d_duration_years)?;
            let d = m.t2d_duration_years;
            let shape = (d.mean / d.sd).powi(2);
            Some(Gamma::new(shape, d.sd * d.sd / d.mean).map_err(|e| SynthError::Invalid(format!("duration: {e}")))?)
        } else {
            None
        };
        Ok(Prepared {
            age: fit_truncated_normal(m.age, m.age_range.0, m.age_range.1)?,
            bmi: fit_truncated_normal(m.bmi, m.bmi_range.0, m.bmi_range.1)?,
            duration,
        })
    }
}

fn truncated(rng: &mut ChaCha8Rng, d: MeanSd, range: (f64, f64)) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let v = d.mean + d.sd * z;
        if v >= range.0 && v <= range.1 {
            return v;
        }
    }
}

fn pick(rng: &mut ChaCha8Rng, mix: &[f64; 3]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in mix.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    mix.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

struct Generated {
    record: PatientRecord,
    extras: Vec<FeatureValue>,
}

fn generate_patient(spec: &GeneratorSpec, prep: &Prepared, rng: &mut ChaCha8Rng, index: usize) -> Generated {
    let m = &spec.marginals;
    let sex = if rng.random_bool(m.female_fraction) { Sex::Female } else { Sex::Male };
    let age = truncated(rng, prep.age, m.age_range);
    let height_dist = if sex == Sex::Female { m.female_height_m } else { m.male_height_m };
    let (height, weight) = loop {
        let h = truncated(rng, height_dist, (1.35, 2.15));
        let bmi = truncated(rng, prep.bmi, m.bmi_range);
        let w = bmi * h * h;
        if w >= m.weight_range.0 && w <= m.weight_range.1 {
            break (h, w);
        }
    };
    let operation = Operation::ALL[pick(rng, &m.operation_mix)];
    let diabetes_status = DiabetesStatus::ALL[pick(rng, &m.diabetes_mix)];
    let duration = match (&prep.duration, diabetes_status) {
        (Some(g), DiabetesStatus::T2d) => g.sample(rng),
        _ => 0.0,
    };
    let smoker_true = rng.random_bool(m.smoker_fraction);
    let smoker_missing = rng.random_bool(spec.missingness.smoker);
    let profile = PatientProfile {
        age_years: age,
        weight_kg: weight,
        height_m: height,
        smoker: Some(smoker_true),
        diabetes_status,
        diabetes_duration_years: duration,
        operation,
    };
    let mut visits = Vec::new();
    let mut censored_after_months = None;
    let mut previous = 0;
    for (k, &month) in SCHEDULED_MONTHS.iter().enumerate() {
        let noise: f64 = rng.sample(StandardNormal);
        let dropped = rng.random_bool(spec.dropout[k]);
        if dropped {
            censored_after_months = Some(previous);
            break;
        }
        let twl = spec.effects.oracle_twl(&profile, month) + spec.noise_sd * noise;
        visits.push(VisitRecord { month, weight_kg: weight * (1.0 - twl / 100.0) });
        previous = month;
    }
    let extras = spec
        .missingness
        .noise_columns
        .iter()
        .map(|c| {
            let value = match &c.kind {
                NoiseKind::Normal { mean, sd } => FeatureValue::Numeric(mean + sd * rng.sample::<f64, _>(StandardNormal)),
                NoiseKind::Bernoulli { p } => FeatureValue::Numeric(f64::from(u8::from(rng.random_bool(*p)))),
                NoiseKind::Categorical { levels } => {
                    FeatureValue::Categorical(levels[rng.random_range(0..levels.len())].clone())
                }
                NoiseKind::Constant { value } => FeatureValue::Numeric(*value),
                NoiseKind::FreeText => FeatureValue::Categorical(format!("note {:08x}", rng.random::<u32>())),
            };
            if rng.random_bool(c.missing) {
                FeatureValue::Missing
            } else {
                value
            }
        })
        .collect();
    Generated {
        record: PatientRecord {
            id: format!("S{:06}", index + 1),
            age_years: age,
            weight_kg: weight,
            height_m: height,
            sex,
            smoker: if smoker_missing { None } else { Some(smoker_true) },
            diabetes_status,
            diabetes_duration_years: duration,
            operation,
            prior_bariatric_surgery: false,
            visits,
            censored_after_months,
        },
        extras,
    }
}

/// Draws a cohort. Patients are generated in blocks of 1024, block `b`
/// using ChaCha8 stream `b` of the spec seed, so the result does not depend
/// on the thread count. Smoking status used by the oracle is drawn before
/// its missingness is applied.
pub fn generate_cohort(spec: &GeneratorSpec) -> Result<Cohort, SynthError> {
    let prep = spec.prepare()?;
    let blocks = spec.n.div_ceil(BLOCK);
    let generated: Vec<Generated> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(b as u64);
            let end = ((b + 1) * BLOCK).min(spec.n);
            (b * BLOCK..end).map(|i| generate_patient(spec, &prep, &mut rng, i)).collect::<Vec<_>>()
        })
        .collect();
    let mut columns: Vec<FeatureColumn> = spec
        .missingness
        .noise_columns
        .iter()
        .map(|c| FeatureColumn {
            name: c.name.clone(),
            kind: match c.kind {
                NoiseKind::Normal { .. } | NoiseKind::Constant { .. } => ColumnKind::Continuous,
                NoiseKind::Bernoulli { .. } => ColumnKind::Boolean,
                NoiseKind::Categorical { .. } | NoiseKind::FreeText => ColumnKind::Categorical,
            },
            values: Vec::with_capacity(spec.n),
        })
        .collect();
    let mut records = Vec::with_capacity(spec.n);
    for g in generated {
        for (col, v) in columns.iter_mut().zip(g.extras) {
            col.values.push(v);
        }
        records.push(g.record);
    }
    Cohort::new(records, columns).map_err(|e| SynthError::Invalid(e.to_string()))
}
