use super::{compute_bmi, compute_ewl, compute_twl, Cohort};
use serde::{Deserialize, Serialize};

/// One uncensored visit expressed in every outcome unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub id: String,
    pub month: u32,
    pub weight_kg: f64,
    pub bmi: f64,
    pub twl: f64,
    /// `None` when the preoperative BMI does not exceed 25.
    pub ewl: Option<f64>,
}

pub fn derive_outcomes(cohort: &Cohort) -> Vec<OutcomeRow> {
    let mut rows = Vec::new();
    for r in &cohort.records {
        let (Ok(bmi0), h) = (compute_bmi(r.weight_kg, r.height_m), r.height_m) else {
            continue;
        };
        for v in &r.visits {
            if r.is_censored_at(v.month) {
                continue;
            }
            let (Ok(bmi), Ok(twl)) = (compute_bmi(v.weight_kg, h), compute_twl(r.weight_kg, v.weight_kg)) else {
                continue;
            };
            rows.push(OutcomeRow {
                id: r.id.clone(),
                month: v.month,
                weight_kg: v.weight_kg,
                bmi,
                twl,
                ewl: compute_ewl(bmi0, bmi).ok(),
            });
        }
    }
    rows
}
