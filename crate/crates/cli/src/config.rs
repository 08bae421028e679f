//! Optional TOML configuration. Every key mirrors a command-line flag and
//! is overridden by it.

use anyhow::Context;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub threads: Option<usize>,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub serve: ServeConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub spec: Option<PathBuf>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub noise_sd: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: Option<u64>,
    pub split: Option<f64>,
    pub timepoints: Option<Vec<u32>>,
    pub features: Option<Vec<String>>,
    pub imputations: Option<usize>,
    pub bootstrap: Option<usize>,
    pub compare: Option<bool>,
    pub forest_trees: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub bootstrap: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: Option<String>,
    pub cors_origins: Option<Vec<String>>,
    pub reload_secs: Option<u64>,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {}", path.display(), e.message()))
    }
}
