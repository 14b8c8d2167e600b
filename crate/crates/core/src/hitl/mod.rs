//! Human-in-the-loop engine: weak labels, review queues with QC items,
//! 50-50 balancing, retrain triggers and the weekly labelling cycle.

pub mod balance;
pub mod cycle;
pub mod queue;
pub mod simulate;
pub mod trigger;
pub mod weak;

pub use balance::balance_5050;
pub use cycle::{train_on_snapshot, Batch, CycleConfig, CycleEngine, CyclePlan, CycleState, CycleStep, StepStatus};
pub use queue::{build_annotation_queue, AnnotationQueue, AnnotatorSlice, QueueItem, DEFAULT_QC_COUNT, DEFAULT_SLICE_SIZE};
pub use simulate::{GoldLabel, SimulatedAnnotator};
pub use trigger::{check_retrain_trigger, RetrainPolicy, TriggerDecision, TriggerMode, TriggerReason};
pub use weak::generate_weak_labels;

use crate::corpus::StoreError;
use crate::quality::QualityError;
use crate::scorer::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum HitlError {
    #[error("cannot balance: {positives} positives, {negatives} negatives")]
    EmptyClass { positives: usize, negatives: usize },
    #[error("{qc_count} QC items requested from a pool of {pool}")]
    QcLargerThanPool { qc_count: usize, pool: usize },
    #[error("invalid retrain policy: {0}")]
    InvalidPolicy(String),
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("previous batch has {} QC answers outstanding", missing.len())]
    PendingQc { missing: Vec<(String, String)> },
    #[error("cycle wave {wave} week {week} is still in progress")]
    CycleInProgress { wave: u32, week: u32 },
    #[error("cycle state file: {0}")]
    StateFile(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Quality(QualityError),
    #[error(transparent)]
    Store(#[from] StoreError),
}
