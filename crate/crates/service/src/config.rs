use std::path::{Path, PathBuf};

use loopsift_core::hitl::RetrainPolicy;
use loopsift_core::mnb::MnbTrainer;
use serde::{Deserialize, Serialize};

/// Which scorer serves predictions when the service starts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerBackendConfig {
    /// The built-in classifier, trained by the service itself.
    #[default]
    Mnb,
    /// An external service speaking the `/score` + `/health` protocol.
    Http {
        url: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn default_timeout() -> u64 {
    30
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Static bearer token required on every route except health.
    pub token: String,
    /// Store, registry and model files. In-memory when absent.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub policy: RetrainPolicy,
    #[serde(default)]
    pub model: MnbTrainer,
    #[serde(default)]
    pub scorer: ScorerBackendConfig,
    /// Seeds balancing and the held-out split of each retrain.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
}

impl ServiceConfig {
    /// In-memory service with defaults for everything but the token.
    pub fn new(token: impl Into<String>) -> Self {
        ServiceConfig {
            listen: default_listen(),
            token: token.into(),
            data_dir: None,
            policy: RetrainPolicy::default(),
            model: MnbTrainer::default(),
            scorer: ScorerBackendConfig::default(),
            seed: default_seed(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.token.trim().is_empty() {
            return Err(ConfigError::Invalid("token must not be empty".into()));
        }
        self.policy.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.model.config.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
