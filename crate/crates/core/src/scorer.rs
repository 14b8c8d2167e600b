//! The batch scoring contract shared by the built-in classifier and external
//! neural services.

use serde::{Deserialize, Serialize};

use crate::corpus::Language;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScorerIdentity {
    pub name: String,
    pub version: String,
}

/// One raw document to score. Scorers apply their own preprocessing profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreInput {
    pub text: String,
    pub language: Language,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScorerError {
    #[error("scorer unavailable: {0}")]
    Unavailable(String),
    #[error("scorer returned {got} probabilities for {expected} inputs")]
    LengthMismatch { expected: usize, got: usize },
    #[error("scorer returned probability {0} outside [0, 1]")]
    OutOfRange(f64),
}

/// Maps documents to positive-class probabilities.
///
/// Implementations are pure for a fixed model version and return one
/// probability per input, in input order.
pub trait Scorer: Send + Sync {
    fn identity(&self) -> ScorerIdentity;

    fn score(&self, batch: &[ScoreInput]) -> Result<Vec<f64>, ScorerError>;
}

/// Scores a batch and checks the output against the contract.
pub fn score_checked(scorer: &dyn Scorer, batch: &[ScoreInput]) -> Result<Vec<f64>, ScorerError> {
    let out = scorer.score(batch)?;
    if out.len() != batch.len() {
        return Err(ScorerError::LengthMismatch {
            expected: batch.len(),
            got: out.len(),
        });
    }
    if let Some(bad) = out.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(ScorerError::OutOfRange(*bad));
    }
    Ok(out)
}

/// A labelled document handed to a trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInput {
    pub input: ScoreInput,
    pub label: crate::corpus::Label,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    /// Too little or single-class data; reported as "OF" in experiment tables.
    #[error("cannot train on this set: {0}")]
    Insufficient(String),
    #[error("training failed: {0}")]
    Failed(String),
}

/// Builds a scorer from labelled data.
pub trait Trainer: Send + Sync {
    fn train(&self, data: &[LabeledInput], version: &str) -> Result<Box<dyn Scorer>, TrainError>;
}
