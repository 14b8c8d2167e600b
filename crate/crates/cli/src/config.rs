//! Optional TOML config. Keys match the long flag names with `_` for `-`;
//! flags win over the file, the file wins over built-in defaults.

use std::path::Path;

use loopsift_core::Weighting;
use loopsift_service::ServiceConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub seed: Option<u64>,
    pub format: Option<String>,
    pub profile: Option<String>,
    pub max_features: Option<usize>,
    pub ngram_min: Option<usize>,
    pub ngram_max: Option<usize>,
    pub weighting: Option<Weighting>,
    pub alpha: Option<f64>,
    pub folds: Option<usize>,
    /// Days.
    pub retrain_period: Option<i64>,
    pub retrain_volume: Option<usize>,
    pub slice_size: Option<usize>,
    pub qc_count: Option<usize>,
    pub annotators: Option<Vec<String>>,
    /// Used by `serve`.
    pub service: Option<ServiceConfig>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }
}
