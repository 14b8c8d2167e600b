use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use loopsift_core::{Metrics, MnbModel, Scorer};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    Mnb,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistryEntry {
    pub version: String,
    pub kind: ModelKind,
    pub trained_on_snapshot: Option<u64>,
    /// Held-out scores recorded when the model was trained.
    pub metrics_at_train: Option<Metrics>,
    pub registered_at: DateTime<Utc>,
    /// Most recent activation.
    pub activated_at: Option<DateTime<Utc>>,
}

/// A registered model together with the scorer that serves it.
#[derive(Clone)]
pub struct ActiveModel {
    pub entry: ModelRegistryEntry,
    pub scorer: Arc<dyn Scorer>,
}

/// All registered models. At most one is active.
#[derive(Default)]
pub struct Registry {
    entries: Vec<ModelRegistryEntry>,
    scorers: HashMap<String, Arc<dyn Scorer>>,
    active: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryFile {
    entries: Vec<ModelRegistryEntry>,
    active: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown model version {0}")]
    Unknown(String),
    #[error("registry file: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model file {path}: {message}")]
    Model { path: PathBuf, message: String },
}

impl Registry {
    pub fn entries(&self) -> &[ModelRegistryEntry] {
        &self.entries
    }

    pub fn active_version(&self) -> Option<&str> {
        self.active.as_deref()
    }

    pub fn get(&self, version: &str) -> Option<ActiveModel> {
        let entry = self.entries.iter().find(|e| e.version == version)?.clone();
        let scorer = self.scorers.get(version)?.clone();
        Some(ActiveModel { entry, scorer })
    }

    pub fn active(&self) -> Option<ActiveModel> {
        self.active.as_deref().and_then(|v| self.get(v))
    }

    /// Adds or replaces an entry. Does not activate it.
    pub fn register(&mut self, entry: ModelRegistryEntry, scorer: Arc<dyn Scorer>) {
        self.scorers.insert(entry.version.clone(), scorer);
        match self.entries.iter_mut().find(|e| e.version == entry.version) {
            Some(slot) => *slot = entry,
            None => self.entries.push(entry),
        }
    }

    pub fn activate(&mut self, version: &str, now: DateTime<Utc>) -> Result<ActiveModel, RegistryError> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.version == version)
            .ok_or_else(|| RegistryError::Unknown(version.to_string()))?;
        entry.activated_at = Some(now);
        self.active = Some(version.to_string());
        self.get(version).ok_or_else(|| RegistryError::Unknown(version.to_string()))
    }

    /// Writes `registry.json` and, for built-in models, `models/<version>.json`.
    pub fn save(&self, dir: &Path, new_model: Option<&MnbModel>) -> Result<(), RegistryError> {
        if let Some(model) = new_model {
            let models = dir.join("models");
            std::fs::create_dir_all(&models)?;
            let json = model.to_json().map_err(|e| RegistryError::Model {
                path: models.clone(),
                message: e.to_string(),
            })?;
            write_atomic(&models.join(format!("{}.json", model.version)), json.as_bytes())?;
        }
        let file = RegistryFile { entries: self.entries.clone(), active: self.active.clone() };
        write_atomic(&dir.join("registry.json"), serde_json::to_string_pretty(&file)?.as_bytes())?;
        Ok(())
    }

    /// Loads built-in models from disk. External entries are dropped; the
    /// configured backend re-registers itself at startup.
    pub fn load(dir: &Path) -> Result<Self, RegistryError> {
        let path = dir.join("registry.json");
        if !path.exists() {
            return Ok(Registry::default());
        }
        let file: RegistryFile = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        let mut reg = Registry::default();
        for entry in file.entries.into_iter().filter(|e| e.kind == ModelKind::Mnb) {
            let model_path = dir.join("models").join(format!("{}.json", entry.version));
            let text = std::fs::read_to_string(&model_path)?;
            let model = MnbModel::from_json(&text).map_err(|e| RegistryError::Model {
                path: model_path.clone(),
                message: e.to_string(),
            })?;
            reg.register(entry, Arc::new(model));
        }
        reg.active = file.active.filter(|v| reg.scorers.contains_key(v));
        Ok(reg)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}
