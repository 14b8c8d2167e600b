use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use loopsift_core::corpus::StoreError;
use loopsift_core::eval::stratified_split_8020;
use loopsift_core::hitl::{balance_5050, check_retrain_trigger, TriggerDecision};
use loopsift_core::scorer::{score_checked, LabeledInput};
use loopsift_core::{compute_metrics, CorpusStore, Label, Metrics, MnbModel, ScoreInput, Scorer};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::config::{ScorerBackendConfig, ServiceConfig};
use crate::error::ApiError;
use crate::http_scorer::HttpScorer;
use crate::registry::{write_atomic, ActiveModel, ModelKind, ModelRegistryEntry, Registry, RegistryError};

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("external scorer: {0}")]
    Scorer(String),
    #[error("state file: {0}")]
    State(String),
}

/// Reviews and time since the last retrain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriggerState {
    pub last_retrain_at: Option<DateTime<Utc>>,
    /// Distinct example ids reviewed since the last retrain started.
    pub reviewed_since: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainOutcome {
    pub version: String,
    pub snapshot_version: u64,
    pub activated: bool,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrainStatus {
    pub in_progress: bool,
    pub snapshot_version: Option<u64>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    pub last_outcome: Option<RetrainOutcome>,
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainStart {
    pub started: bool,
    pub snapshot_version: Option<u64>,
    pub trigger: TriggerDecision,
}

/// Shared service state.
///
/// The store and the registry sit behind plain mutexes that are never held
/// across an await. Scoring goes through `active`: a request clones the `Arc`
/// once and scores with it, so a swap is visible to later requests only.
pub struct AppState {
    pub config: ServiceConfig,
    store: Mutex<CorpusStore>,
    registry: Mutex<Registry>,
    active: RwLock<Option<Arc<ActiveModel>>>,
    trigger: Mutex<TriggerState>,
    retrain: Mutex<RetrainStatus>,
    retraining: AtomicBool,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl AppState {
    /// Opens the data directory (or an in-memory store) and connects the
    /// configured scorer backend. Blocking.
    pub fn open(config: ServiceConfig) -> Result<Arc<Self>, StartupError> {
        let (store, mut registry, trigger) = match &config.data_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(StoreError::Io)?;
                let trigger = match std::fs::read_to_string(dir.join("trigger.json")) {
                    Ok(text) => serde_json::from_str(&text).map_err(|e| StartupError::State(e.to_string()))?,
                    Err(_) => TriggerState::default(),
                };
                (CorpusStore::open(dir.join("store"))?, Registry::load(dir)?, trigger)
            }
            None => (CorpusStore::in_memory(), Registry::default(), TriggerState::default()),
        };
        if let ScorerBackendConfig::Http { url, timeout_secs } = &config.scorer {
            let scorer = HttpScorer::connect(url, Duration::from_secs(*timeout_secs))
                .map_err(|e| StartupError::Scorer(e.to_string()))?;
            let id = scorer.identity();
            let version = format!("{}:{}", id.name, id.version);
            let now = Utc::now();
            registry.register(
                ModelRegistryEntry {
                    version: version.clone(),
                    kind: ModelKind::External,
                    trained_on_snapshot: None,
                    metrics_at_train: None,
                    registered_at: now,
                    activated_at: None,
                },
                Arc::new(scorer),
            );
            registry.activate(&version, now)?;
            info!(event = "external_scorer_connected", version = %version);
        }
        let active = registry.active().map(Arc::new);
        Ok(Arc::new(AppState {
            config,
            store: Mutex::new(store),
            registry: Mutex::new(registry),
            active: RwLock::new(active),
            trigger: Mutex::new(trigger),
            retrain: Mutex::new(RetrainStatus::default()),
            retraining: AtomicBool::new(false),
        }))
    }

    pub fn store(&self) -> MutexGuard<'_, CorpusStore> {
        lock(&self.store)
    }

    pub fn registry(&self) -> MutexGuard<'_, Registry> {
        lock(&self.registry)
    }

    /// The model serving requests right now.
    pub fn active_model(&self) -> Option<Arc<ActiveModel>> {
        self.active.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn trigger_state(&self) -> TriggerState {
        lock(&self.trigger).clone()
    }

    pub fn retrain_status(&self) -> RetrainStatus {
        lock(&self.retrain).clone()
    }

    pub fn trigger_decision(&self, now: DateTime<Utc>) -> TriggerDecision {
        let t = lock(&self.trigger);
        check_retrain_trigger(&self.config.policy, now, t.last_retrain_at, t.reviewed_since.len())
    }

    pub(crate) fn note_review(&self, example_id: &str) {
        let mut t = lock(&self.trigger);
        t.reviewed_since.insert(example_id.to_string());
        self.save_trigger(&t);
    }

    fn save_trigger(&self, t: &TriggerState) {
        if let Some(dir) = &self.config.data_dir {
            let result = serde_json::to_vec(t)
                .map_err(std::io::Error::other)
                .and_then(|bytes| write_atomic(&dir.join("trigger.json"), &bytes));
            if let Err(e) = result {
                warn!(event = "trigger_state_write_failed", error = %e);
            }
        }
    }

    fn save_registry(&self, reg: &Registry, model: Option<&MnbModel>) {
        if let Some(dir) = &self.config.data_dir {
            if let Err(e) = reg.save(dir, model) {
                warn!(event = "registry_write_failed", error = %e);
            }
        }
    }

    fn swap_active(&self, model: ActiveModel) {
        let version = model.entry.version.clone();
        *self.active.write().unwrap_or_else(|p| p.into_inner()) = Some(Arc::new(model));
        info!(event = "model_activated", version = %version);
    }

    /// Activates a registered model regardless of the F1 gate, then refreshes
    /// the weak labels of unreviewed items. Blocking.
    pub fn activate(&self, version: &str) -> Result<ModelRegistryEntry, ApiError> {
        let model = {
            let mut reg = self.registry();
            let model = reg
                .activate(version, Utc::now())
                .map_err(|_| ApiError::not_found(format!("unknown model version {version}")))?;
            self.save_registry(&reg, None);
            model
        };
        let entry = model.entry.clone();
        let scorer = model.scorer.clone();
        self.swap_active(model);
        self.refresh_weak_labels(&*scorer);
        Ok(entry)
    }

    /// Scores unreviewed items with `scorer` and records the probabilities.
    /// The store lock is released while scoring.
    pub fn refresh_weak_labels(&self, scorer: &dyn Scorer) {
        let (ids, inputs): (Vec<String>, Vec<ScoreInput>) = {
            let store = self.store();
            store
                .examples()
                .filter(|e| store.strong_label(&e.id).is_none())
                .map(|e| (e.id.clone(), ScoreInput { text: e.text.clone(), language: e.language.clone() }))
                .unzip()
        };
        if ids.is_empty() {
            return;
        }
        let id = scorer.identity();
        match score_checked(scorer, &inputs) {
            Ok(probs) => {
                let scores: Vec<(String, f64)> = ids.into_iter().zip(probs).collect();
                let n = scores.len();
                match self.store().record_weak_labels(&scores, &format!("{}:{}", id.name, id.version)) {
                    Ok(_) => info!(event = "weak_labels_recorded", items = n, version = %id.version),
                    Err(e) => warn!(event = "weak_labels_failed", error = %e),
                }
            }
            Err(e) => warn!(event = "weak_labels_failed", error = %e),
        }
    }

    /// Starts a background retrain when the trigger fires, when `force` is
    /// set, or when no model is active yet. The snapshot is taken before
    /// returning; training runs on its own thread.
    pub fn start_retrain(self: &Arc<Self>, force: bool) -> Result<RetrainStart, ApiError> {
        if self.retraining.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_err() {
            return Err(ApiError::conflict("RETRAIN_IN_PROGRESS", "a retrain is already running"));
        }
        let now = Utc::now();
        let trigger = self.trigger_decision(now);
        if !force && !trigger.fire && self.active_model().is_some() {
            self.retraining.store(false, Ordering::SeqCst);
            return Ok(RetrainStart { started: false, snapshot_version: None, trigger });
        }
        let prepared = match self.prepare_snapshot(now) {
            Ok(p) => p,
            Err(e) => {
                self.retraining.store(false, Ordering::SeqCst);
                return Err(e);
            }
        };
        let snapshot_version = prepared.snapshot_version;
        {
            let mut t = lock(&self.trigger);
            t.last_retrain_at = Some(now);
            t.reviewed_since.clear();
            self.save_trigger(&t);
        }
        {
            let mut status = lock(&self.retrain);
            status.in_progress = true;
            status.snapshot_version = Some(snapshot_version);
            status.started_at = Some(now);
            status.finished_at = None;
            status.last_error = None;
        }
        info!(event = "retrain_started", snapshot_version, forced = force, train = prepared.train.len(), test = prepared.test.len());
        let state = Arc::clone(self);
        std::thread::spawn(move || {
            let result = state.train_and_register(prepared);
            let mut status = lock(&state.retrain);
            status.in_progress = false;
            status.finished_at = Some(Utc::now());
            match result {
                Ok(outcome) => {
                    info!(event = "retrain_finished", version = %outcome.version, activated = outcome.activated);
                    status.last_outcome = Some(outcome);
                }
                Err(e) => {
                    warn!(event = "retrain_failed", error = %e);
                    status.last_error = Some(e);
                }
            }
            drop(status);
            state.retraining.store(false, Ordering::SeqCst);
        });
        Ok(RetrainStart { started: true, snapshot_version: Some(snapshot_version), trigger })
    }

    /// Blocks until no retrain is running or the timeout passes.
    pub fn wait_for_retrain(&self, timeout: Duration) -> bool {
        let deadline = std::time::Instant::now() + timeout;
        while self.retraining.load(Ordering::SeqCst) {
            if std::time::Instant::now() > deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        true
    }

    /// Previous snapshot plus a 50-50 sample of newly reviewed items, split
    /// 80-20 into training and held-out evaluation data.
    fn prepare_snapshot(&self, now: DateTime<Utc>) -> Result<Prepared, ApiError> {
        let mut store = self.store();
        let previous: Vec<String> = store
            .latest_snapshot()
            .map(|s| s.example_ids.iter().filter(|id| store.strong_label(id).is_some()).cloned().collect())
            .unwrap_or_default();
        let seen: BTreeSet<&String> = previous.iter().collect();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for e in store.examples() {
            match store.strong_label(&e.id) {
                Some(_) if seen.contains(&e.id) => {}
                Some(Label::Positive) => pos.push(e.id.clone()),
                Some(Label::Negative) => neg.push(e.id.clone()),
                None => {}
            }
        }
        let version_seed = self.config.seed ^ store.snapshots().len() as u64;
        let fresh = match balance_5050(&pos, &neg, version_seed) {
            Ok(ids) => ids,
            Err(_) if !previous.is_empty() => Vec::new(),
            Err(e) => return Err(ApiError::conflict("INSUFFICIENT_LABELS", e.to_string())),
        };
        let mut ids = previous.clone();
        ids.extend(fresh);
        let snapshot = match store.snapshot_training_set(&ids, now) {
            Ok(s) => s,
            // re-reviews flipped labels inside the previous snapshot
            Err(StoreError::UnbalancedInput { .. }) => {
                let (p, n): (Vec<String>, Vec<String>) =
                    ids.iter().cloned().partition(|id| store.strong_label(id) == Some(Label::Positive));
                let rebalanced = balance_5050(&p, &n, version_seed)
                    .map_err(|e| ApiError::conflict("INSUFFICIENT_LABELS", e.to_string()))?;
                store.snapshot_training_set(&rebalanced, now)?
            }
            Err(e) => return Err(e.into()),
        };
        let labels: Vec<Label> = snapshot.example_ids.iter().map(|id| store.strong_label(id).unwrap_or(Label::Negative)).collect();
        let (train_ids, test_ids) = stratified_split_8020(&snapshot.example_ids, &labels, version_seed)
            .map_err(|e| ApiError::conflict("INSUFFICIENT_LABELS", e.to_string()))?;
        let labeled = |ids: &[String]| -> Vec<LabeledInput> {
            ids.iter()
                .filter_map(|id| {
                    let e = store.example(id)?;
                    Some(LabeledInput {
                        input: ScoreInput { text: e.text.clone(), language: e.language.clone() },
                        label: store.strong_label(id)?,
                    })
                })
                .collect()
        };
        Ok(Prepared { snapshot_version: snapshot.version, train: labeled(&train_ids), test: labeled(&test_ids) })
    }

    fn train_and_register(&self, prepared: Prepared) -> Result<RetrainOutcome, String> {
        let version = format!("mnb-{}", prepared.snapshot_version);
        let model = self.config.model.fit(&prepared.train, &version).map_err(|e| e.to_string())?;
        let metrics = if prepared.test.is_empty() {
            None
        } else {
            let inputs: Vec<ScoreInput> = prepared.test.iter().map(|d| d.input.clone()).collect();
            let probs = model.score(&inputs).map_err(|e| e.to_string())?;
            let truth: Vec<Label> = prepared.test.iter().map(|d| d.label).collect();
            let pred: Vec<Label> = probs.iter().map(|p| Label::from_bool(*p >= 0.5)).collect();
            Some(compute_metrics(&truth, &pred).map_err(|e| e.to_string())?)
        };
        let now = Utc::now();
        let entry = ModelRegistryEntry {
            version: version.clone(),
            kind: ModelKind::Mnb,
            trained_on_snapshot: Some(prepared.snapshot_version),
            metrics_at_train: metrics,
            registered_at: now,
            activated_at: None,
        };
        let model = Arc::new(model);
        let activated = {
            let mut reg = self.registry();
            reg.register(entry, model.clone());
            let activate = passes_gate(reg.active().map(|a| a.entry).as_ref(), metrics.as_ref());
            let swapped = if activate { Some(reg.activate(&version, now).map_err(|e| e.to_string())?) } else { None };
            self.save_registry(&reg, Some(&model));
            if let Some(m) = swapped {
                self.swap_active(m);
            } else {
                info!(event = "model_registered_inactive", version = %version);
            }
            activate
        };
        if activated {
            self.refresh_weak_labels(&*model);
        }
        Ok(RetrainOutcome { version, snapshot_version: prepared.snapshot_version, activated, metrics })
    }
}

struct Prepared {
    snapshot_version: u64,
    train: Vec<LabeledInput>,
    test: Vec<LabeledInput>,
}

/// Rolling-best rule: a new model replaces the active one only if its
/// held-out F1 is at least the active model's recorded F1. External models
/// are only replaced by hand.
pub fn passes_gate(active: Option<&ModelRegistryEntry>, candidate: Option<&Metrics>) -> bool {
    let Some(active) = active else { return true };
    if active.kind == ModelKind::External {
        return false;
    }
    match (active.metrics_at_train, candidate) {
        (None, _) => true,
        (Some(_), None) => false,
        (Some(best), Some(new)) => new.weighted_f1 >= best.weighted_f1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(kind: ModelKind, f1: Option<f64>) -> ModelRegistryEntry {
        ModelRegistryEntry {
            version: "v".into(),
            kind,
            trained_on_snapshot: None,
            metrics_at_train: f1.map(|f| Metrics { precision: f, recall: f, weighted_f1: f, support_pos: 1, support_neg: 1 }),
            registered_at: DateTime::from_timestamp(0, 0).unwrap(),
            activated_at: None,
        }
    }

    fn m(f: f64) -> Metrics {
        Metrics { precision: f, recall: f, weighted_f1: f, support_pos: 1, support_neg: 1 }
    }

    #[test]
    fn gate() {
        assert!(passes_gate(None, None));
        assert!(passes_gate(Some(&entry(ModelKind::Mnb, Some(0.8))), Some(&m(0.8))));
        assert!(!passes_gate(Some(&entry(ModelKind::Mnb, Some(0.8))), Some(&m(0.79))));
        assert!(!passes_gate(Some(&entry(ModelKind::External, None)), Some(&m(0.99))));
        assert!(passes_gate(Some(&entry(ModelKind::Mnb, None)), Some(&m(0.1))));
    }
}
