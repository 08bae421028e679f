//! Outcome conversion formulas.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("preoperative BMI must exceed 25 for EWL, got {0}")]
    BmiNotAboveReference(f64),
    #[error("TWL of {0}% leaves no body weight")]
    WeightNotPositive(f64),
    #[error("{name} is not finite")]
    NonFinite { name: &'static str },
}

fn positive(name: &'static str, value: f64) -> Result<f64, DomainError> {
    if !value.is_finite() {
        return Err(DomainError::NonFinite { name });
    }
    if value <= 0.0 {
        return Err(DomainError::NonPositive { name, value });
    }
    Ok(value)
}

/// BMI in kg/m².
pub fn compute_bmi(weight_kg: f64, height_m: f64) -> Result<f64, DomainError> {
    let w = positive("weight_kg", weight_kg)?;
    let h = positive("height_m", height_m)?;
    Ok(w / (h * h))
}

/// Percent total weight loss; positive values mean the patient lost weight.
pub fn compute_twl(preop_weight_kg: f64, visit_weight_kg: f64) -> Result<f64, DomainError> {
    let w0 = positive("preop_weight_kg", preop_weight_kg)?;
    if !visit_weight_kg.is_finite() {
        return Err(DomainError::NonFinite { name: "visit_weight_kg" });
    }
    Ok((w0 - visit_weight_kg) / w0 * 100.0)
}

/// Percent excess weight loss relative to a reference BMI of 25.
pub fn compute_ewl(preop_bmi: f64, visit_bmi: f64) -> Result<f64, DomainError> {
    if !preop_bmi.is_finite() || !visit_bmi.is_finite() {
        return Err(DomainError::NonFinite { name: "bmi" });
    }
    if preop_bmi <= 25.0 {
        return Err(DomainError::BmiNotAboveReference(preop_bmi));
    }
    Ok((preop_bmi - visit_bmi) / (preop_bmi - 25.0) * 100.0)
}

/// Weight implied by a TWL percentage.
pub fn twl_to_weight(preop_weight_kg: f64, twl_percent: f64) -> Result<f64, DomainError> {
    let w0 = positive("preop_weight_kg", preop_weight_kg)?;
    if !twl_percent.is_finite() {
        return Err(DomainError::NonFinite { name: "twl_percent" });
    }
    let w = w0 * (1.0 - twl_percent / 100.0);
    if w <= 0.0 {
        return Err(DomainError::WeightNotPositive(twl_percent));
    }
    Ok(w)
}
