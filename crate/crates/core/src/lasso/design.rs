use crate::cohort::{Cohort, ColumnKind, DiabetesStatus, FeatureValue, Operation, Sex};
use crate::imputation::{ScreenReport, SMOKER_FEATURE};
use nalgebra::DMatrix;
use std::collections::BTreeSet;

/// A raw (unstandardized) design with a column → feature mapping, so that
/// one-hot encoded categorical features are selected as a unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub column_names: Vec<String>,
    pub column_feature: Vec<usize>,
    pub feature_names: Vec<String>,
}

impl Design {
    /// Every column is its own feature.
    pub fn from_columns(matrix: DMatrix<f64>, names: Vec<String>) -> Self {
        let p = matrix.ncols();
        assert_eq!(names.len(), p, "one name per column");
        Self { matrix, column_names: names.clone(), column_feature: (0..p).collect(), feature_names: names }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Design {
        Design {
            matrix: self.matrix.select_rows(rows),
            column_names: self.column_names.clone(),
            column_feature: self.column_feature.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

struct Builder {
    columns: Vec<Vec<f64>>,
    column_names: Vec<String>,
    column_feature: Vec<usize>,
    feature_names: Vec<String>,
}

impl Builder {
    fn feature(&mut self, name: &str, cols: Vec<(String, Vec<f64>)>) {
        let f = self.feature_names.len();
        self.feature_names.push(name.to_string());
        for (cname, values) in cols {
            self.column_names.push(cname);
            self.column_feature.push(f);
            self.columns.push(values);
        }
    }
}

fn indicator<T: PartialEq + Copy>(values: &[T], level: T) -> Vec<f64> {
    values.iter().map(|v| f64::from(u8::from(*v == level))).collect()
}

/// Baseline design for feature selection on a completed (imputed) cohort.
///
/// Categorical features are fully one-hot encoded; missing cells become NaN
/// and are rejected by the fitter.
pub fn baseline_design(cohort: &Cohort, screen: &ScreenReport) -> Design {
    let recs = &cohort.records;
    let mut b = Builder { columns: vec![], column_names: vec![], column_feature: vec![], feature_names: vec![] };
    b.feature("age", vec![("age".into(), recs.iter().map(|r| r.age_years).collect())]);
    b.feature("weight_kg", vec![("weight_kg".into(), recs.iter().map(|r| r.weight_kg).collect())]);
    b.feature("height_m", vec![("height_m".into(), recs.iter().map(|r| r.height_m).collect())]);
    let sex: Vec<Sex> = recs.iter().map(|r| r.sex).collect();
    b.feature("sex", vec![("sex=male".into(), indicator(&sex, Sex::Male))]);
    if screen.is_retained(SMOKER_FEATURE) {
        let smoker = recs.iter().map(|r| r.smoker.map_or(f64::NAN, |s| f64::from(u8::from(s)))).collect();
        b.feature(SMOKER_FEATURE, vec![("smoker".into(), smoker)]);
    }
    let dm: Vec<DiabetesStatus> = recs.iter().map(|r| r.diabetes_status).collect();
    b.feature(
        "diabetes",
        DiabetesStatus::ALL.iter().map(|&s| (format!("diabetes={}", s.code()), indicator(&dm, s))).collect(),
    );
    b.feature("diabetes_years", vec![("diabetes_years".into(), recs.iter().map(|r| r.diabetes_duration_years).collect())]);
    let ops: Vec<Operation> = recs.iter().map(|r| r.operation).collect();
    b.feature(
        "operation",
        Operation::ALL.iter().map(|&o| (format!("operation={}", o.code()), indicator(&ops, o))).collect(),
    );
    for col in &cohort.extra_features {
        if !screen.is_retained(&col.name) {
            continue;
        }
        match col.kind {
            ColumnKind::Continuous | ColumnKind::Boolean => {
                let values = col
                    .values
                    .iter()
                    .map(|v| match v {
                        FeatureValue::Numeric(x) => *x,
                        _ => f64::NAN,
                    })
                    .collect();
                b.feature(&col.name, vec![(col.name.clone(), values)]);
            }
            ColumnKind::Categorical => {
                let levels: BTreeSet<&str> = col
                    .values
                    .iter()
                    .filter_map(|v| match v {
                        FeatureValue::Categorical(s) => Some(s.as_str()),
                        _ => None,
                    })
                    .collect();
                let cols = levels
                    .iter()
                    .map(|lvl| {
                        let values = col
                            .values
                            .iter()
                            .map(|v| match v {
                                FeatureValue::Categorical(s) => f64::from(u8::from(s == lvl)),
                                _ => f64::NAN,
                            })
                            .collect();
                        (format!("{}={lvl}", col.name), values)
                    })
                    .collect();
                b.feature(&col.name, cols);
            }
        }
    }
    let n = recs.len();
    let matrix = DMatrix::from_fn(n, b.columns.len(), |i, j| b.columns[j][i]);
    Design { matrix, column_names: b.column_names, column_feature: b.column_feature, feature_names: b.feature_names }
}
