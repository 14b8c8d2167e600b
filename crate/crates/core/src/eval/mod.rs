//! Metrics, splits, synthetic corpora, experiment batteries and reports.

pub mod experiments;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod split;
pub mod synth;
pub mod threshold;

use chrono::{DateTime, Utc};

pub use experiments::{
    cross_slice_experiment, evaluate_scorer, incremental_experiment, temporal_drift_experiment, toxic_policy_experiment,
    toxic_policy_report, DriftReport, DriftRow, IncrementalReport, IncrementalRow, SliceFilter, ToxicPolicy, ToxicPolicyReport,
    ToxicPolicyRow, WeekOutcome,
};
pub use metrics::{compute_metrics, Metrics, MetricsError};
pub use report::{emit_report, ReportFormat, Tabular};
pub use runner::{run_experiments, Check, Experiment, ExperimentReport, ExperimentSpec, RunOutcome, SeedRun};
pub use split::stratified_split_8020;
pub use synth::{generate_synthetic_corpus, DriftSpec, Era, SyntheticCorpus, SyntheticCorpusSpec, Weighted};
pub use threshold::{threshold_band_report, Band, BandRange, ThresholdBandReport};

use crate::corpus::StoreError;
use crate::hitl::HitlError;
use crate::scorer::ScorerError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("{ids} ids vs {labels} labels")]
    LengthMismatch { ids: usize, labels: usize },
    #[error("no input")]
    EmptyInput,
    #[error("probability {0} outside [0.5, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSpec(String),
    #[error("{0} slice is empty")]
    EmptySlice(&'static str),
    #[error("cutoff {0} leaves one side empty")]
    EmptySide(DateTime<Utc>),
    #[error("no toxic examples in the training split")]
    NoToxicExamples,
    #[error("unknown example {0}")]
    UnknownExample(String),
    #[error("model cannot be trained: {0}")]
    Untrainable(String),
    #[error("training failed: {0}")]
    Train(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Hitl(#[from] HitlError),
    #[error(transparent)]
    Store(#[from] StoreError),
}
