//! The weekly labelling cycle: retrain, predict, draw, distribute, QC, merge.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::balance::balance_5050;
use super::queue::{build_annotation_queue, AnnotatorSlice, DEFAULT_QC_COUNT, DEFAULT_SLICE_SIZE};
use super::trigger::{check_retrain_trigger, RetrainPolicy, TriggerDecision};
use super::weak::generate_weak_labels;
use super::HitlError;
use crate::corpus::{AnnotationKind, CorpusStore, Label, StoreError};
use crate::quality::{qc_overlap_report, QcReport, QualityError, DEFAULT_AGREEMENT_FLOOR};
use crate::scorer::{LabeledInput, ScoreInput, Scorer, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    pub annotators: Vec<String>,
    pub slice_size: usize,
    pub qc_count: usize,
    pub agreement_floor: f64,
    pub policy: RetrainPolicy,
    pub seed: u64,
    /// Ids that are never scored, queued or trained on, such as a gold test set.
    #[serde(default)]
    pub held_out: BTreeSet<String>,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            annotators: Vec::new(),
            slice_size: DEFAULT_SLICE_SIZE,
            qc_count: DEFAULT_QC_COUNT,
            agreement_floor: DEFAULT_AGREEMENT_FLOOR,
            policy: RetrainPolicy::default(),
            seed: 0,
            held_out: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CycleStep {
    Retrain,
    Predict,
    Draw,
    Distribute,
    QualityControl,
    Merge,
    MarkDone,
}

impl CycleStep {
    pub const ALL: [CycleStep; 7] = [
        CycleStep::Retrain,
        CycleStep::Predict,
        CycleStep::Draw,
        CycleStep::Distribute,
        CycleStep::QualityControl,
        CycleStep::Merge,
        CycleStep::MarkDone,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepStatus {
    Pending,
    Done,
    Skipped(String),
    Failed(String),
}

impl StepStatus {
    fn finished(&self) -> bool {
        matches!(self, StepStatus::Done | StepStatus::Skipped(_))
    }
}

/// Progress and outputs of one (wave, week) cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclePlan {
    pub wave: u32,
    pub week: u32,
    #[serde(with = "crate::timefmt")]
    pub now: DateTime<Utc>,
    pub steps: Vec<(CycleStep, StepStatus)>,
    pub trigger: Option<TriggerDecision>,
    pub snapshot_version: Option<u64>,
    pub model_version: Option<String>,
    pub scored: usize,
    pub slices: Vec<AnnotatorSlice>,
    pub qc: Option<QcReport>,
    pub merged: Vec<String>,
    pub returned: Vec<String>,
}

impl CyclePlan {
    fn new(wave: u32, week: u32, now: DateTime<Utc>) -> Self {
        CyclePlan {
            wave,
            week,
            now,
            steps: CycleStep::ALL.iter().map(|s| (*s, StepStatus::Pending)).collect(),
            trigger: None,
            snapshot_version: None,
            model_version: None,
            scored: 0,
            slices: Vec::new(),
            qc: None,
            merged: Vec::new(),
            returned: Vec::new(),
        }
    }

    pub fn status(&self, step: CycleStep) -> &StepStatus {
        &self.steps.iter().find(|(s, _)| *s == step).expect("every step is listed").1
    }

    pub fn is_complete(&self) -> bool {
        self.steps.iter().all(|(_, s)| s.finished())
    }

    fn set(&mut self, step: CycleStep, status: StepStatus) {
        if let Some(slot) = self.steps.iter_mut().find(|(s, _)| *s == step) {
            slot.1 = status;
        }
    }
}

/// Slices handed out in one week, waiting for QC and merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub wave: u32,
    pub week: u32,
    pub slices: Vec<AnnotatorSlice>,
    pub qc_ids: BTreeSet<String>,
    pub qc: Option<QcReport>,
    pub merged: bool,
}

impl Batch {
    fn ids(&self) -> impl Iterator<Item = &String> {
        self.slices.iter().flat_map(|s| &s.items).chain(&self.qc_ids)
    }
}

/// Everything the engine persists between steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleState {
    pub history: Vec<CyclePlan>,
    pub current: Option<CyclePlan>,
    pub batches: Vec<Batch>,
    #[serde(default, with = "crate::timefmt::option")]
    pub last_retrain_at: Option<DateTime<Utc>>,
    /// Items merged into the training pool since the last retrain.
    pub checked_since: usize,
    pub trained_snapshot: Option<u64>,
}

/// Drives (wave, week) cycles over a corpus store.
///
/// The engine holds exclusive access to its state for the duration of a
/// cycle; each completed step is written to the state file before the next
/// starts, so a failed cycle resumes from the failed step.
pub struct CycleEngine<'t> {
    config: CycleConfig,
    trainer: &'t dyn Trainer,
    state: CycleState,
    state_path: Option<PathBuf>,
    model: Option<Box<dyn Scorer>>,
}

fn step_seed(seed: u64, wave: u32, week: u32, salt: u64) -> u64 {
    seed ^ (u64::from(wave) << 40) ^ (u64::from(week) << 20) ^ salt
}

impl<'t> CycleEngine<'t> {
    pub fn new(config: CycleConfig, trainer: &'t dyn Trainer) -> Result<Self, HitlError> {
        config.policy.validate()?;
        Ok(CycleEngine {
            config,
            trainer,
            state: CycleState::default(),
            state_path: None,
            model: None,
        })
    }

    /// Loads the state file if it exists; otherwise starts fresh and creates it
    /// on the first completed step.
    pub fn with_state_file(config: CycleConfig, trainer: &'t dyn Trainer, path: impl AsRef<Path>) -> Result<Self, HitlError> {
        let mut engine = Self::new(config, trainer)?;
        let path = path.as_ref().to_path_buf();
        if path.exists() {
            let raw = fs::read_to_string(&path).map_err(StoreError::from)?;
            engine.state = serde_json::from_str(&raw).map_err(|e| HitlError::StateFile(e.to_string()))?;
        }
        engine.state_path = Some(path);
        Ok(engine)
    }

    pub fn config(&self) -> &CycleConfig {
        &self.config
    }

    pub fn state(&self) -> &CycleState {
        &self.state
    }

    pub fn model(&self) -> Option<&dyn Scorer> {
        self.model.as_deref()
    }

    /// Slices of batches not yet merged, oldest first.
    pub fn open_slices(&self) -> Vec<&AnnotatorSlice> {
        self.state
            .batches
            .iter()
            .filter(|b| !b.merged)
            .flat_map(|b| &b.slices)
            .collect()
    }

    fn persist(&self) -> Result<(), HitlError> {
        let Some(path) = &self.state_path else {
            return Ok(());
        };
        let tmp = path.with_extension("tmp");
        let json = serde_json::to_string_pretty(&self.state).map_err(|e| HitlError::StateFile(e.to_string()))?;
        fs::write(&tmp, json).map_err(StoreError::from)?;
        fs::rename(&tmp, path).map_err(StoreError::from)?;
        Ok(())
    }

    /// Runs or resumes the cycle for (wave, week).
    ///
    /// A completed week returns its recorded plan unchanged. Starting a new
    /// week while another is unfinished is rejected.
    pub fn run_cycle(&mut self, store: &mut CorpusStore, wave: u32, week: u32, now: DateTime<Utc>) -> Result<CyclePlan, HitlError> {
        if let Some(done) = self.state.history.iter().find(|p| p.wave == wave && p.week == week) {
            return Ok(done.clone());
        }
        let mut plan = match self.state.current.take() {
            Some(p) if (p.wave, p.week) != (wave, week) => {
                let err = HitlError::CycleInProgress { wave: p.wave, week: p.week };
                self.state.current = Some(p);
                return Err(err);
            }
            Some(p) => p,
            None => CyclePlan::new(wave, week, now),
        };

        for step in CycleStep::ALL {
            if plan.status(step).finished() {
                continue;
            }
            match self.execute(step, &mut plan, store) {
                Ok(status) => plan.set(step, status),
                Err(e) => {
                    plan.set(step, StepStatus::Failed(e.to_string()));
                    self.state.current = Some(plan);
                    self.persist()?;
                    return Err(e);
                }
            }
            if step == CycleStep::MarkDone {
                self.state.history.push(plan.clone());
            } else {
                self.state.current = Some(plan.clone());
            }
            self.persist()?;
        }
        Ok(plan)
    }

    fn execute(&mut self, step: CycleStep, plan: &mut CyclePlan, store: &mut CorpusStore) -> Result<StepStatus, HitlError> {
        match step {
            CycleStep::Retrain => self.retrain(plan, store),
            CycleStep::Predict => self.predict(plan, store),
            CycleStep::Draw => self.draw(plan, store),
            CycleStep::Distribute => Ok(self.distribute(plan)),
            CycleStep::QualityControl => self.quality_control(plan, store),
            CycleStep::Merge => self.merge(plan, store),
            CycleStep::MarkDone => {
                self.state.current = None;
                Ok(StepStatus::Done)
            }
        }
    }

    fn retrain(&mut self, plan: &mut CyclePlan, store: &mut CorpusStore) -> Result<StepStatus, HitlError> {
        let decision = check_retrain_trigger(
            &self.config.policy,
            plan.now,
            self.state.last_retrain_at,
            self.state.checked_since,
        );
        plan.trigger = Some(decision);
        if !decision.fire && self.state.trained_snapshot.is_some() {
            self.ensure_model(store)?;
            plan.snapshot_version = self.state.trained_snapshot;
            plan.model_version = self.model.as_ref().map(|m| m.identity().version);
            return Ok(StepStatus::Skipped("retrain trigger did not fire".into()));
        }

        let previous: Vec<String> = store.latest_snapshot().map(|s| s.example_ids.clone()).unwrap_or_default();
        let in_previous: BTreeSet<&str> = previous.iter().map(String::as_str).collect();
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for e in store.examples() {
            if in_previous.contains(e.id.as_str()) || self.config.held_out.contains(&e.id) {
                continue;
            }
            match store.strong_label(&e.id) {
                Some(Label::Positive) => pos.push(e.id.clone()),
                Some(Label::Negative) => neg.push(e.id.clone()),
                None => {}
            }
        }
        let mut ids = previous.clone();
        match balance_5050(&pos, &neg, step_seed(self.config.seed, plan.wave, plan.week, 1)) {
            Ok(added) => ids.extend(added),
            Err(e) if previous.is_empty() => return Err(e),
            Err(_) => {}
        }
        let snapshot = store.snapshot_training_set(&ids, plan.now)?;
        self.model = Some(train_on_snapshot(self.trainer, store, &snapshot.example_ids, snapshot.version)?);
        self.state.trained_snapshot = Some(snapshot.version);
        self.state.last_retrain_at = Some(plan.now);
        self.state.checked_since = 0;
        plan.snapshot_version = Some(snapshot.version);
        plan.model_version = self.model.as_ref().map(|m| m.identity().version);
        Ok(StepStatus::Done)
    }

    /// Rebuilds the model after a restart; training is deterministic given
    /// the snapshot.
    fn ensure_model(&mut self, store: &CorpusStore) -> Result<(), HitlError> {
        if self.model.is_some() {
            return Ok(());
        }
        let Some(version) = self.state.trained_snapshot else {
            return Err(HitlError::ScorerUnavailable("no model has been trained yet".into()));
        };
        let snapshot = store
            .snapshots()
            .iter()
            .find(|s| s.version == version)
            .ok_or_else(|| HitlError::StateFile(format!("snapshot {version} missing from the store")))?;
        self.model = Some(train_on_snapshot(self.trainer, store, &snapshot.example_ids, version)?);
        Ok(())
    }

    /// Unlabelled, non-held-out examples not waiting in an open batch.
    fn pool(&self, store: &CorpusStore) -> Vec<String> {
        let pending: BTreeSet<&String> = self
            .state
            .batches
            .iter()
            .filter(|b| !b.merged)
            .flat_map(|b| b.ids())
            .collect();
        store
            .examples()
            .filter(|e| store.strong_label(&e.id).is_none())
            .filter(|e| !self.config.held_out.contains(&e.id) && !pending.contains(&e.id))
            .map(|e| e.id.clone())
            .collect()
    }

    fn predict(&mut self, plan: &mut CyclePlan, store: &mut CorpusStore) -> Result<StepStatus, HitlError> {
        self.ensure_model(store)?;
        let pool = self.pool(store);
        if pool.is_empty() {
            return Ok(StepStatus::Skipped("pool is empty".into()));
        }
        let scorer = self.model.as_deref().expect("model ensured above");
        plan.scored = generate_weak_labels(store, scorer, &pool)?.len();
        Ok(StepStatus::Done)
    }

    fn draw(&mut self, plan: &mut CyclePlan, store: &mut CorpusStore) -> Result<StepStatus, HitlError> {
        let candidates: Vec<(String, f64)> = self
            .pool(store)
            .into_iter()
            .filter_map(|id| store.label_state(&id).weak_probability.map(|p| (id, p)))
            .collect();
        if candidates.is_empty() {
            return Ok(StepStatus::Skipped("nothing to draw".into()));
        }
        let (_, slices) = build_annotation_queue(
            &candidates,
            &self.config.annotators,
            self.config.slice_size,
            self.config.qc_count,
            step_seed(self.config.seed, plan.wave, plan.week, 2),
        )?;
        plan.slices = slices;
        Ok(StepStatus::Done)
    }

    fn distribute(&mut self, plan: &mut CyclePlan) -> StepStatus {
        if plan.slices.is_empty() {
            return StepStatus::Skipped("no slices drawn".into());
        }
        let qc_ids = plan.slices[0].qc_ids.iter().cloned().collect();
        self.state.batches.push(Batch {
            wave: plan.wave,
            week: plan.week,
            slices: plan.slices.clone(),
            qc_ids,
            qc: None,
            merged: false,
        });
        StepStatus::Done
    }

    /// The unmerged batch from before this week, if any.
    fn previous_batch(&self, plan: &CyclePlan) -> Option<usize> {
        self.state
            .batches
            .iter()
            .position(|b| !b.merged && (b.wave, b.week) != (plan.wave, plan.week))
    }

    fn quality_control(&mut self, plan: &mut CyclePlan, store: &CorpusStore) -> Result<StepStatus, HitlError> {
        let Some(i) = self.previous_batch(plan) else {
            return Ok(StepStatus::Skipped("no earlier batch to check".into()));
        };
        match qc_report(&self.state.batches[i], store, self.config.agreement_floor) {
            Ok(report) => {
                plan.qc = Some(report.clone());
                self.state.batches[i].qc = Some(report);
                Ok(StepStatus::Done)
            }
            Err(HitlError::PendingQc { missing }) => Ok(StepStatus::Skipped(format!("{} QC answers outstanding", missing.len()))),
            Err(e) => Err(e),
        }
    }

    fn merge(&mut self, plan: &mut CyclePlan, store: &mut CorpusStore) -> Result<StepStatus, HitlError> {
        let Some(i) = self.previous_batch(plan) else {
            return Ok(StepStatus::Skipped("no earlier batch to merge".into()));
        };
        let report = match &self.state.batches[i].qc {
            Some(r) => r.clone(),
            None => {
                let r = qc_report(&self.state.batches[i], store, self.config.agreement_floor)?;
                plan.qc = Some(r.clone());
                self.state.batches[i].qc = Some(r.clone());
                r
            }
        };
        let batch = &self.state.batches[i];
        let flagged: BTreeSet<&String> = report.flagged.iter().collect();
        let mut accepted: Vec<&String> = Vec::new();
        let mut returned: Vec<String> = Vec::new();
        for slice in &batch.slices {
            if flagged.contains(&slice.annotator_id) {
                returned.extend(slice.items.iter().cloned());
            } else {
                accepted.extend(&slice.items);
            }
        }
        accepted.extend(&batch.qc_ids);
        let accepted: Vec<String> = accepted.into_iter().cloned().collect();

        let mut merged = Vec::new();
        for id in accepted {
            match store.resolve(&id) {
                Ok(_) => merged.push(id),
                Err(StoreError::Resolve(_)) => returned.push(id),
                Err(e) => return Err(e.into()),
            }
        }
        self.state.batches[i].merged = true;
        self.state.checked_since += merged.len();
        plan.merged = merged;
        plan.returned = returned;
        Ok(StepStatus::Done)
    }
}

/// Latest strong answer of every slice annotator on the batch's QC items.
fn qc_report(batch: &Batch, store: &CorpusStore, floor: f64) -> Result<QcReport, HitlError> {
    let mut answers: BTreeMap<String, BTreeMap<String, Label>> = BTreeMap::new();
    for slice in &batch.slices {
        let given = answers.entry(slice.annotator_id.clone()).or_default();
        for id in &batch.qc_ids {
            let latest = store
                .annotations_for(id)
                .into_iter()
                .filter(|a| a.annotator_id == slice.annotator_id && a.kind == AnnotationKind::Strong)
                .last();
            if let Some(a) = latest {
                given.insert(id.clone(), a.label);
            }
        }
    }
    qc_overlap_report(&answers, &batch.qc_ids, floor).map_err(|e| match e {
        QualityError::MissingQcAnnotations(missing) => HitlError::PendingQc { missing },
        other => HitlError::Quality(other),
    })
}

/// Trains the configured model on a stored snapshot. The model version is
/// `snapshot-<version>`.
pub fn train_on_snapshot(
    trainer: &dyn Trainer,
    store: &CorpusStore,
    ids: &[String],
    version: u64,
) -> Result<Box<dyn Scorer>, HitlError> {
    let data = ids
        .iter()
        .map(|id| {
            let e = store.example(id).ok_or_else(|| StoreError::UnknownExample(id.clone()))?;
            let label = store.strong_label(id).ok_or_else(|| StoreError::Unlabeled(id.clone()))?;
            Ok(LabeledInput {
                input: ScoreInput { text: e.text.clone(), language: e.language.clone() },
                label,
            })
        })
        .collect::<Result<Vec<_>, StoreError>>()?;
    Ok(trainer.train(&data, &format!("snapshot-{version}"))?)
}
