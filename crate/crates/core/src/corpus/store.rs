use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::resolve::{resolve_strong_label, ResolveError};
use super::{Annotation, Example, Label, LabelState, Language, SchemeViolation, Source, TrainingSnapshot};
use crate::timefmt;

const EXAMPLES_FILE: &str = "examples.jsonl";
const ANNOTATIONS_FILE: &str = "annotations.jsonl";
const LABELS_FILE: &str = "labels.jsonl";
const SNAPSHOTS_FILE: &str = "snapshots.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown example {0}")]
    UnknownExample(String),
    #[error("annotation scheme violation: {0}")]
    SchemeViolation(#[from] SchemeViolation),
    #[error("unbalanced snapshot input: {positives} positives vs {negatives} negatives")]
    UnbalancedInput { positives: usize, negatives: usize },
    #[error("example {0} has no strong label")]
    Unlabeled(String),
    #[error("example {0} listed twice")]
    DuplicateId(String),
    #[error("invalid time range: start after end")]
    InvalidTimeRange,
    #[error("weak probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("{file}:{line}: {source}")]
    Corrupt {
        file: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// An example as submitted for ingestion, before timestamp validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewExample {
    pub id: String,
    pub text: String,
    pub source: Source,
    pub language: Language,
    pub created_at: String,
    /// Defaults to the ingestion clock when absent.
    #[serde(default)]
    pub ingested_at: Option<String>,
    #[serde(default)]
    pub wave_tag: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl From<&Example> for NewExample {
    fn from(e: &Example) -> Self {
        NewExample {
            id: e.id.clone(),
            text: e.text.clone(),
            source: e.source.clone(),
            language: e.language.clone(),
            created_at: timefmt::format(&e.created_at),
            ingested_at: Some(timefmt::format(&e.ingested_at)),
            wave_tag: e.wave_tag.clone(),
            metadata: e.metadata.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    DuplicateId,
    EmptyText,
    MalformedTimestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

/// Inclusive time window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    #[serde(with = "timefmt")]
    pub start: DateTime<Utc>,
    #[serde(with = "timefmt")]
    pub end: DateTime<Utc>,
}

impl TimeRange {
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelStatus {
    Unlabeled,
    WeakOnly,
    Strong,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFilter {
    #[serde(default)]
    pub source: Option<Source>,
    #[serde(default)]
    pub language: Option<Language>,
    #[serde(default)]
    pub time_range: Option<TimeRange>,
    #[serde(default)]
    pub label_status: Option<LabelStatus>,
}

/// Append-only corpus store.
///
/// Mutations go through `&mut self`, so the borrow checker enforces the single
/// writer; callers sharing a store across threads wrap it in a lock.
#[derive(Debug, Default)]
pub struct CorpusStore {
    dir: Option<PathBuf>,
    examples: HashMap<String, Example>,
    example_order: Vec<String>,
    annotations: Vec<Annotation>,
    annotations_by_example: HashMap<String, Vec<usize>>,
    label_log: Vec<LabelState>,
    labels: HashMap<String, LabelState>,
    snapshots: Vec<TrainingSnapshot>,
}

impl CorpusStore {
    /// A store that never touches the filesystem.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a store directory and replays its files.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut store = CorpusStore::default();
        for e in read_jsonl::<Example>(&dir.join(EXAMPLES_FILE))? {
            store.index_example(e);
        }
        for a in read_jsonl::<Annotation>(&dir.join(ANNOTATIONS_FILE))? {
            store.index_annotation(a);
        }
        for l in read_jsonl::<LabelState>(&dir.join(LABELS_FILE))? {
            store.index_label(l);
        }
        store.snapshots = read_jsonl(&dir.join(SNAPSHOTS_FILE))?;
        store.dir = Some(dir);
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn example(&self, id: &str) -> Option<&Example> {
        self.examples.get(id)
    }

    /// Examples in ingestion order.
    pub fn examples(&self) -> impl Iterator<Item = &Example> {
        self.example_order.iter().map(|id| &self.examples[id])
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn annotations_for(&self, example_id: &str) -> Vec<&Annotation> {
        self.annotations_by_example
            .get(example_id)
            .map(|idx| idx.iter().map(|&i| &self.annotations[i]).collect())
            .unwrap_or_default()
    }

    pub fn label_state(&self, example_id: &str) -> LabelState {
        self.labels
            .get(example_id)
            .cloned()
            .unwrap_or_else(|| LabelState::empty(example_id))
    }

    /// Full history of label-state records, oldest first.
    pub fn label_history(&self) -> &[LabelState] {
        &self.label_log
    }

    pub fn snapshots(&self) -> &[TrainingSnapshot] {
        &self.snapshots
    }

    pub fn latest_snapshot(&self) -> Option<&TrainingSnapshot> {
        self.snapshots.last()
    }

    pub fn strong_label(&self, example_id: &str) -> Option<Label> {
        self.labels.get(example_id).and_then(|l| l.strong_label)
    }

    pub fn ingest_examples(&mut self, batch: Vec<NewExample>, now: DateTime<Utc>) -> Result<IngestReport, StoreError> {
        let mut report = IngestReport::default();
        let mut accepted = Vec::new();
        let mut seen = HashSet::new();
        for raw in batch {
            match self.validate_new(&raw, now) {
                Ok(example) if seen.insert(example.id.clone()) => accepted.push(example),
                Ok(example) => report.rejected.push(Rejection {
                    id: example.id,
                    reason: RejectReason::DuplicateId,
                }),
                Err(reason) => report.rejected.push(Rejection { id: raw.id, reason }),
            }
        }
        self.append_records(EXAMPLES_FILE, &accepted)?;
        report.accepted = accepted.len();
        for e in accepted {
            self.index_example(e);
        }
        Ok(report)
    }

    fn validate_new(&self, raw: &NewExample, now: DateTime<Utc>) -> Result<Example, RejectReason> {
        if self.examples.contains_key(&raw.id) {
            return Err(RejectReason::DuplicateId);
        }
        let normalized: String = raw.text.nfc().collect();
        if normalized.trim().is_empty() {
            return Err(RejectReason::EmptyText);
        }
        let created_at = timefmt::parse(&raw.created_at).map_err(|_| RejectReason::MalformedTimestamp)?;
        let ingested_at = match &raw.ingested_at {
            Some(s) => timefmt::parse(s).map_err(|_| RejectReason::MalformedTimestamp)?,
            None => now.max(created_at),
        };
        if created_at > ingested_at {
            return Err(RejectReason::MalformedTimestamp);
        }
        Ok(Example {
            id: raw.id.clone(),
            text: raw.text.clone(),
            source: raw.source.clone(),
            language: raw.language.clone(),
            created_at,
            ingested_at,
            wave_tag: raw.wave_tag.clone(),
            metadata: raw.metadata.clone(),
        })
    }

    /// Appends one annotation and returns its position in the annotation log.
    pub fn append_annotation(&mut self, annotation: Annotation) -> Result<u64, StoreError> {
        if !self.examples.contains_key(&annotation.example_id) {
            return Err(StoreError::UnknownExample(annotation.example_id));
        }
        annotation.check_scheme()?;
        self.append_records(ANNOTATIONS_FILE, std::slice::from_ref(&annotation))?;
        Ok(self.index_annotation(annotation) as u64)
    }

    /// Writes weak probabilities for a batch; either every id is written or none.
    pub fn record_weak_labels(
        &mut self,
        scores: &[(String, f64)],
        model_version: &str,
    ) -> Result<Vec<LabelState>, StoreError> {
        for (id, p) in scores {
            if !self.examples.contains_key(id) {
                return Err(StoreError::UnknownExample(id.clone()));
            }
            if !(0.0..=1.0).contains(p) {
                return Err(StoreError::InvalidProbability(*p));
            }
        }
        let updates: Vec<LabelState> = scores
            .iter()
            .map(|(id, p)| self.label_state(id).with_weak(*p, model_version))
            .collect();
        self.append_records(LABELS_FILE, &updates)?;
        for u in &updates {
            self.index_label(u.clone());
        }
        Ok(updates)
    }

    /// Re-resolves the strong label of one example from its annotations.
    ///
    /// On an unresolved tie the strong label is cleared and the tie is
    /// returned as an error; callers treat it as "waiting for a third vote".
    pub fn resolve(&mut self, example_id: &str) -> Result<LabelState, StoreError> {
        if !self.examples.contains_key(example_id) {
            return Err(StoreError::UnknownExample(example_id.to_string()));
        }
        let annotations: Vec<Annotation> = self.annotations_for(example_id).into_iter().cloned().collect();
        let mut state = self.label_state(example_id);
        let outcome = resolve_strong_label(example_id, &annotations);
        match &outcome {
            Ok(r) => {
                state.strong_label = Some(r.label);
                state.resolution = Some(r.resolution);
                state.strong_targets = r.targets.clone();
                state.strong_toxic = r.toxic;
            }
            Err(_) => {
                state.strong_label = None;
                state.resolution = None;
                state.strong_targets.clear();
                state.strong_toxic = false;
            }
        }
        if self.labels.get(example_id) != Some(&state) {
            self.append_records(LABELS_FILE, std::slice::from_ref(&state))?;
            self.index_label(state.clone());
        }
        match outcome {
            Ok(_) => Ok(state),
            Err(e) => Err(e.into()),
        }
    }

    /// Persists a new balanced training snapshot with the next version number.
    pub fn snapshot_training_set(
        &mut self,
        balanced_ids: &[String],
        now: DateTime<Utc>,
    ) -> Result<TrainingSnapshot, StoreError> {
        let mut seen = HashSet::new();
        let (mut positives, mut negatives) = (0, 0);
        for id in balanced_ids {
            if !seen.insert(id.as_str()) {
                return Err(StoreError::DuplicateId(id.clone()));
            }
            if !self.examples.contains_key(id) {
                return Err(StoreError::UnknownExample(id.clone()));
            }
            match self.strong_label(id) {
                Some(Label::Positive) => positives += 1,
                Some(Label::Negative) => negatives += 1,
                None => return Err(StoreError::Unlabeled(id.clone())),
            }
        }
        if positives != negatives {
            return Err(StoreError::UnbalancedInput { positives, negatives });
        }
        let parent_version = self.snapshots.last().map(|s| s.version);
        let snapshot = TrainingSnapshot {
            version: parent_version.map_or(1, |v| v + 1),
            example_ids: balanced_ids.to_vec(),
            positives,
            negatives,
            created_at: now,
            parent_version,
        };
        self.append_records(SNAPSHOTS_FILE, std::slice::from_ref(&snapshot))?;
        self.snapshots.push(snapshot.clone());
        Ok(snapshot)
    }

    /// Examples matching every given filter, ordered by creation time then id.
    pub fn query(&self, filter: &QueryFilter) -> Result<Vec<(Example, LabelState)>, StoreError> {
        if let Some(r) = &filter.time_range {
            if r.start > r.end {
                return Err(StoreError::InvalidTimeRange);
            }
        }
        let mut rows: Vec<(Example, LabelState)> = self
            .examples
            .values()
            .filter(|e| filter.source.as_ref().is_none_or(|s| &e.source == s))
            .filter(|e| filter.language.as_ref().is_none_or(|l| &e.language == l))
            .filter(|e| filter.time_range.is_none_or(|r| r.contains(e.created_at)))
            .map(|e| (e.clone(), self.label_state(&e.id)))
            .filter(|(_, l)| {
                filter.label_status.is_none_or(|status| match status {
                    LabelStatus::Strong => l.strong_label.is_some(),
                    LabelStatus::WeakOnly => l.strong_label.is_none() && l.weak_probability.is_some(),
                    LabelStatus::Unlabeled => l.strong_label.is_none() && l.weak_probability.is_none(),
                })
            })
            .collect();
        rows.sort_by(|(a, _), (b, _)| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(rows)
    }

    /// Writes a fresh copy of the store. Examples are ordered by creation time
    /// then id; every log keeps its append order.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<(), StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut examples: Vec<&Example> = self.examples.values().collect();
        examples.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        write_jsonl(&dir.join(EXAMPLES_FILE), examples)?;
        write_jsonl(&dir.join(ANNOTATIONS_FILE), &self.annotations)?;
        write_jsonl(&dir.join(LABELS_FILE), &self.label_log)?;
        write_jsonl(&dir.join(SNAPSHOTS_FILE), &self.snapshots)?;
        Ok(())
    }

    fn append_records<T: Serialize>(&self, file: &str, records: &[T]) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for r in records {
            buf.push_str(&serde_json::to_string(r)?);
            buf.push('\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(dir.join(file))?;
        f.write_all(buf.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    fn index_example(&mut self, e: Example) {
        self.example_order.push(e.id.clone());
        self.examples.insert(e.id.clone(), e);
    }

    fn index_annotation(&mut self, a: Annotation) -> usize {
        let idx = self.annotations.len();
        self.annotations_by_example
            .entry(a.example_id.clone())
            .or_default()
            .push(idx);
        self.annotations.push(a);
        idx
    }

    fn index_label(&mut self, l: LabelState) {
        self.labels.insert(l.example_id.clone(), l.clone());
        self.label_log.push(l);
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| StoreError::Corrupt {
            file: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> Result<(), StoreError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
