//! Experiment batteries: incremental retraining, cross-slice, temporal drift
//! and toxic-label policy.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, Metrics};
use super::split::stratified_split_8020;
use super::synth::SyntheticCorpus;
use super::EvalError;
use crate::corpus::{CorpusStore, Example, Label, Language, Source};
use crate::hitl::{balance_5050, train_on_snapshot, HitlError};
use crate::scorer::{score_checked, LabeledInput, ScoreInput, Scorer, TrainError, Trainer};

fn input(e: &Example) -> ScoreInput {
    ScoreInput { text: e.text.clone(), language: e.language.clone() }
}

/// Scores `ids` and compares hard predictions at 0.5 with gold labels.
pub fn evaluate_scorer(scorer: &dyn Scorer, corpus: &SyntheticCorpus, ids: &[String]) -> Result<Metrics, EvalError> {
    let examples = lookup(corpus, ids)?;
    let inputs: Vec<ScoreInput> = examples.iter().map(|e| input(e)).collect();
    let p = score_checked(scorer, &inputs)?;
    let truth: Vec<Label> = ids.iter().map(|id| corpus.gold_label(id).expect("looked up above")).collect();
    let predicted: Vec<Label> = p.iter().map(|p| Label::from_bool(*p >= 0.5)).collect();
    Ok(compute_metrics(&truth, &predicted)?)
}

fn lookup<'c>(corpus: &'c SyntheticCorpus, ids: &[String]) -> Result<Vec<&'c Example>, EvalError> {
    let index: std::collections::HashMap<&str, &Example> = corpus.examples.iter().map(|e| (e.id.as_str(), e)).collect();
    ids.iter()
        .map(|id| index.get(id.as_str()).copied().ok_or_else(|| EvalError::UnknownExample(id.clone())))
        .collect()
}

fn gold_labels(corpus: &SyntheticCorpus, ids: &[String]) -> Vec<Label> {
    ids.iter().map(|id| corpus.gold_label(id).expect("ids come from the corpus")).collect()
}

/// Balances by label, then trains. Labels come from `label_of`.
fn train_balanced(
    trainer: &dyn Trainer,
    corpus: &SyntheticCorpus,
    ids: &[String],
    label_of: impl Fn(&str) -> Label,
    seed: u64,
    version: &str,
) -> Result<(Box<dyn Scorer>, Vec<String>), EvalError> {
    let (pos, neg): (Vec<String>, Vec<String>) = ids.iter().cloned().partition(|id| label_of(id).is_positive());
    let balanced = balance_5050(&pos, &neg, seed).map_err(|e| match e {
        HitlError::EmptyClass { positives, negatives } => EvalError::Untrainable(format!("{positives} positives, {negatives} negatives")),
        other => EvalError::Hitl(other),
    })?;
    let examples = lookup(corpus, &balanced)?;
    let data: Vec<LabeledInput> = examples.iter().map(|e| LabeledInput { input: input(e), label: label_of(&e.id) }).collect();
    let scorer = trainer.train(&data, version).map_err(|e| match e {
        TrainError::Insufficient(msg) => EvalError::Untrainable(msg),
        TrainError::Failed(msg) => EvalError::Train(msg),
    })?;
    Ok((scorer, balanced))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum WeekOutcome {
    Trained { metrics: Metrics },
    /// The model could not be trained on this week's set ("OF").
    NotTrained { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalRow {
    pub week: usize,
    pub batch_size: usize,
    /// Examples in this week's balanced training snapshot.
    pub train_size: usize,
    #[serde(flatten)]
    pub outcome: WeekOutcome,
    /// Best weighted F1 of any earlier week.
    pub best_before: Option<f64>,
}

impl IncrementalRow {
    pub fn f1(&self) -> Option<f64> {
        match &self.outcome {
            WeekOutcome::Trained { metrics } => Some(metrics.weighted_f1),
            WeekOutcome::NotTrained { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalReport {
    /// Precision and recall are support-weighted, like F1.
    pub aggregation: String,
    pub test_size: usize,
    pub rows: Vec<IncrementalRow>,
}

impl IncrementalReport {
    pub fn f1_series(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(IncrementalRow::f1).collect()
    }
}

/// Weekly retraining on a growing, balanced, annotator-labelled set.
///
/// A fixed stratified 20% of the corpus is held out with gold labels. The
/// other 80% arrives in creation-time order as weekly batches of the given
/// sizes, is labelled by the corpus' simulated annotator, and is merged into
/// the training snapshot: the previous snapshot plus a 50-50 sample of newly
/// labelled items not yet in it.
pub fn incremental_experiment(
    corpus: &SyntheticCorpus,
    batch_sizes: &[usize],
    trainer: &dyn Trainer,
    seed: u64,
) -> Result<IncrementalReport, EvalError> {
    let ids: Vec<String> = corpus.examples.iter().map(|e| e.id.clone()).collect();
    let (train_ids, test_ids) = stratified_split_8020(&ids, &gold_labels(corpus, &ids), seed)?;
    let in_train: BTreeSet<&String> = train_ids.iter().collect();
    let pool: Vec<&Example> = corpus.examples.iter().filter(|e| in_train.contains(&e.id)).collect();

    let mut store = CorpusStore::in_memory();
    let now = corpus.spec.end;
    store.ingest_examples(corpus.new_examples(), now)?;
    let annotator = corpus.annotator();

    let mut rows = Vec::new();
    let mut best: Option<f64> = None;
    let mut cursor = 0;
    for (week, &size) in batch_sizes.iter().enumerate() {
        let week = week + 1;
        let batch: Vec<&Example> = pool[cursor.min(pool.len())..(cursor + size).min(pool.len())].to_vec();
        cursor += size;
        for e in &batch {
            let gold = corpus.gold.get(&e.id).expect("corpus example");
            store.append_annotation(annotator.judge(&e.id, gold, now))?;
            store.resolve(&e.id)?;
        }

        let previous: Vec<String> = store.latest_snapshot().map(|s| s.example_ids.clone()).unwrap_or_default();
        let seen: BTreeSet<&String> = previous.iter().collect();
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for e in &pool {
            if seen.contains(&e.id) {
                continue;
            }
            match store.strong_label(&e.id) {
                Some(Label::Positive) => pos.push(e.id.clone()),
                Some(Label::Negative) => neg.push(e.id.clone()),
                None => {}
            }
        }
        let mut snapshot_ids = previous.clone();
        if let Ok(added) = balance_5050(&pos, &neg, seed ^ week as u64) {
            snapshot_ids.extend(added);
        }
        let outcome = if snapshot_ids.is_empty() {
            WeekOutcome::NotTrained { reason: format!("{} positives, {} negatives labelled", pos.len(), neg.len()) }
        } else {
            let snapshot = store.snapshot_training_set(&snapshot_ids, now)?;
            match train_on_snapshot(trainer, &store, &snapshot.example_ids, snapshot.version) {
                Ok(scorer) => WeekOutcome::Trained { metrics: evaluate_scorer(scorer.as_ref(), corpus, &test_ids)? },
                Err(HitlError::Train(TrainError::Insufficient(reason))) => WeekOutcome::NotTrained { reason },
                Err(e) => return Err(e.into()),
            }
        };
        let row = IncrementalRow { week, batch_size: batch.len(), train_size: snapshot_ids.len(), outcome, best_before: best };
        if let Some(f1) = row.f1() {
            best = Some(best.map_or(f1, |b| b.max(f1)));
        }
        rows.push(row);
    }
    Ok(IncrementalReport { aggregation: "weighted".into(), test_size: test_ids.len(), rows })
}

/// Selects examples by source, language and creation time (inclusive bounds).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceFilter {
    #[serde(default)]
    pub source: Option<Source>,
    #[serde(default)]
    pub language: Option<Language>,
    #[serde(default, with = "crate::timefmt::option")]
    pub from: Option<DateTime<Utc>>,
    #[serde(default, with = "crate::timefmt::option")]
    pub until: Option<DateTime<Utc>>,
}

impl SliceFilter {
    pub fn matches(&self, e: &Example) -> bool {
        self.source.as_ref().is_none_or(|s| &e.source == s)
            && self.language.as_ref().is_none_or(|l| &e.language == l)
            && self.from.is_none_or(|t| e.created_at >= t)
            && self.until.is_none_or(|t| e.created_at <= t)
    }

    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(s) = &self.source {
            parts.push(s.to_string());
        }
        if let Some(l) = &self.language {
            parts.push(l.to_string());
        }
        if let Some(t) = self.from {
            parts.push(format!("from {}", t.format("%Y-%m-%d")));
        }
        if let Some(t) = self.until {
            parts.push(format!("until {}", t.format("%Y-%m-%d")));
        }
        if parts.is_empty() {
            "all".into()
        } else {
            parts.join(" ")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub train_slice: String,
    pub test_slice: String,
    pub train_size: usize,
    pub test_size: usize,
    pub eval: Metrics,
    pub test: Metrics,
    pub delta_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub rows: Vec<DriftRow>,
}

impl DriftReport {
    pub fn mean_delta_f1(&self) -> Option<f64> {
        (!self.rows.is_empty()).then(|| self.rows.iter().map(|r| r.delta_f1).sum::<f64>() / self.rows.len() as f64)
    }
}

/// Trains on 80% of `train_ids`, evaluates on the other 20% and tests on
/// every id of `test_ids` that was not trained on.
fn train_eval_test(
    corpus: &SyntheticCorpus,
    train_ids: &[String],
    test_ids: &[String],
    trainer: &dyn Trainer,
    seed: u64,
    describe: (String, String),
) -> Result<DriftRow, EvalError> {
    let (fit_ids, eval_ids) = stratified_split_8020(train_ids, &gold_labels(corpus, train_ids), seed)?;
    let observed = |id: &str| corpus.observed(id).map_or(Label::Negative, |g| g.label);
    let (scorer, trained) = train_balanced(trainer, corpus, &fit_ids, observed, seed, "drift")?;
    let trained: BTreeSet<&String> = trained.iter().collect();
    let test_ids: Vec<String> = test_ids.iter().filter(|id| !trained.contains(id)).cloned().collect();
    if test_ids.is_empty() {
        return Err(EvalError::EmptySlice("test"));
    }
    let eval = evaluate_scorer(scorer.as_ref(), corpus, &eval_ids)?;
    let test = evaluate_scorer(scorer.as_ref(), corpus, &test_ids)?;
    Ok(DriftRow {
        train_slice: describe.0,
        test_slice: describe.1,
        train_size: trained.len(),
        test_size: test_ids.len(),
        delta_f1: test.weighted_f1 - eval.weighted_f1,
        eval,
        test,
    })
}

/// Zero-shot transfer from one slice of the corpus to another.
pub fn cross_slice_experiment(
    corpus: &SyntheticCorpus,
    train: &SliceFilter,
    test: &SliceFilter,
    trainer: &dyn Trainer,
    seed: u64,
) -> Result<DriftRow, EvalError> {
    let select = |f: &SliceFilter| -> Vec<String> { corpus.examples.iter().filter(|e| f.matches(e)).map(|e| e.id.clone()).collect() };
    let train_ids = select(train);
    if train_ids.is_empty() {
        return Err(EvalError::EmptySlice("train"));
    }
    let test_ids = select(test);
    if test_ids.is_empty() {
        return Err(EvalError::EmptySlice("test"));
    }
    train_eval_test(corpus, &train_ids, &test_ids, trainer, seed, (train.describe(), test.describe()))
}

/// One row per cutoff: train on examples created up to the cutoff, test on
/// everything after it.
pub fn temporal_drift_experiment(
    corpus: &SyntheticCorpus,
    cutoffs: &[DateTime<Utc>],
    trainer: &dyn Trainer,
    seed: u64,
) -> Result<DriftReport, EvalError> {
    let mut rows = Vec::with_capacity(cutoffs.len());
    for cutoff in cutoffs {
        let (before, after): (Vec<&Example>, Vec<&Example>) = corpus.examples.iter().partition(|e| e.created_at <= *cutoff);
        if before.is_empty() || after.is_empty() {
            return Err(EvalError::EmptySide(*cutoff));
        }
        let ids = |v: Vec<&Example>| v.into_iter().map(|e| e.id.clone()).collect::<Vec<_>>();
        let day = cutoff.format("%Y-%m-%d");
        rows.push(train_eval_test(
            corpus,
            &ids(before),
            &ids(after),
            trainer,
            seed,
            (format!("until {day}"), format!("after {day}")),
        )?);
    }
    Ok(DriftReport { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ToxicPolicy {
    ToxicAsPositive,
    DropToxic,
    ToxicAsNegative,
}

impl ToxicPolicy {
    pub const ALL: [ToxicPolicy; 3] = [ToxicPolicy::ToxicAsPositive, ToxicPolicy::DropToxic, ToxicPolicy::ToxicAsNegative];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicPolicyRow {
    pub policy: ToxicPolicy,
    /// Training items after the policy is applied, before balancing.
    pub train_size: usize,
    pub toxic_in_train: usize,
    pub balanced_size: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToxicPolicyReport {
    pub rows: Vec<ToxicPolicyRow>,
}

/// Rewrites the training labels of toxic items per policy. The test split
/// is identical across policies and always counts toxic items as positive.
pub fn toxic_policy_experiment(
    corpus: &SyntheticCorpus,
    policy: ToxicPolicy,
    trainer: &dyn Trainer,
    seed: u64,
) -> Result<ToxicPolicyRow, EvalError> {
    let ids: Vec<String> = corpus.examples.iter().map(|e| e.id.clone()).collect();
    let (train_ids, test_ids) = stratified_split_8020(&ids, &gold_labels(corpus, &ids), seed)?;
    let observed = |id: &str| corpus.observed(id).expect("corpus example");
    let toxic_in_train = train_ids.iter().filter(|id| observed(id).toxic).count();
    if toxic_in_train == 0 {
        return Err(EvalError::NoToxicExamples);
    }
    let kept: Vec<String> = match policy {
        ToxicPolicy::DropToxic => train_ids.iter().filter(|id| !observed(id).toxic).cloned().collect(),
        _ => train_ids.clone(),
    };
    let label_of = |id: &str| {
        let o = observed(id);
        match policy {
            ToxicPolicy::ToxicAsNegative if o.toxic => Label::Negative,
            _ => o.label,
        }
    };
    let (scorer, balanced) = train_balanced(trainer, corpus, &kept, label_of, seed, "toxic-policy")?;
    Ok(ToxicPolicyRow {
        policy,
        train_size: kept.len(),
        toxic_in_train,
        balanced_size: balanced.len(),
        metrics: evaluate_scorer(scorer.as_ref(), corpus, &test_ids)?,
    })
}

/// All three policies on the same split.
pub fn toxic_policy_report(corpus: &SyntheticCorpus, trainer: &dyn Trainer, seed: u64) -> Result<ToxicPolicyReport, EvalError> {
    let rows = ToxicPolicy::ALL
        .iter()
        .map(|p| toxic_policy_experiment(corpus, *p, trainer, seed))
        .collect::<Result<_, _>>()?;
    Ok(ToxicPolicyReport { rows })
}
