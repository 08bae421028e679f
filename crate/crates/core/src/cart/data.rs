use super::CartError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    /// Values are level codes `0..levels.len()` stored as `f64`.
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureDef {
    pub fn numeric(name: &str) -> Self {
        Self { name: name.to_string(), kind: FeatureKind::Numeric }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Categorical { levels: levels.iter().map(|s| s.to_string()).collect() },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }
}

/// Column-major training data. Missing feature values are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<FeatureDef>,
    pub columns: Vec<Vec<f64>>,
    pub response: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<FeatureDef>, columns: Vec<Vec<f64>>, response: Vec<f64>) -> Result<Self, CartError> {
        if response.is_empty() {
            return Err(CartError::Empty);
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(CartError::BadResponse(i));
        }
        if features.len() != columns.len() {
            return Err(CartError::Ragged {
                name: "<feature list>".into(),
                expected: features.len(),
                got: columns.len(),
            });
        }
        for (f, col) in features.iter().zip(&columns) {
            if col.len() != response.len() {
                return Err(CartError::Ragged { name: f.name.clone(), expected: response.len(), got: col.len() });
            }
            if let FeatureKind::Categorical { levels } = &f.kind {
                if let Some(&code) = col
                    .iter()
                    .find(|v| !v.is_nan() && (v.fract() != 0.0 || **v < 0.0 || **v as usize >= levels.len()))
                {
                    return Err(CartError::BadLevel { name: f.name.clone(), code });
                }
            }
        }
        Ok(Self { features, columns, response })
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}
