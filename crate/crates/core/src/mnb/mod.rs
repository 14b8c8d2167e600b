//! Multinomial naive Bayes over tfidf-weighted word n-grams.

mod cv;
mod features;
mod model;
mod search;

pub use cv::{cross_validate, stratified_folds, CvReport};
pub use features::{
    extract_ngrams, fit_vocabulary, term_counts, vectorize, FeatureConfig, SparseVector, TermCounts, Vocabulary,
    Weighting,
};
pub use model::{train_mnb, MnbModel, NbParams, Prediction};
pub use search::{hyperparam_search, SearchResult, SearchSpace, TrialRecord, TrialStatus};

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::eval::metrics::MetricsError;
use crate::scorer::{LabeledInput, Scorer, TrainError, Trainer};
use crate::textprep;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MnbError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("need at least 2 training examples, got {0}")]
    TooFewExamples(usize),
    #[error("{features} feature rows vs {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("{k}-fold cross-validation needs at least {k} per class (have {positives} positive, {negatives} negative)")]
    TooFewPerClass { k: usize, positives: usize, negatives: usize },
    #[error("empty hyperparameter space")]
    EmptySpace,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl From<serde_json::Error> for MnbError {
    fn from(e: serde_json::Error) -> Self {
        MnbError::Json(e.to_string())
    }
}

/// Trains tfidf + MNB models on FULL-preprocessed text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MnbTrainer {
    pub config: FeatureConfig,
    pub alpha: f64,
}

impl Default for MnbTrainer {
    fn default() -> Self {
        MnbTrainer {
            config: FeatureConfig::default(),
            alpha: 1.0,
        }
    }
}

impl MnbTrainer {
    pub fn fit(&self, data: &[LabeledInput], version: &str) -> Result<MnbModel, MnbError> {
        let docs: Vec<Vec<String>> = data
            .iter()
            .map(|d| textprep::full_tokens(&d.input.text, &d.input.language))
            .collect();
        let labels: Vec<Label> = data.iter().map(|d| d.label).collect();
        MnbModel::fit(&docs, &labels, self.config, self.alpha, version)
    }
}

impl Trainer for MnbTrainer {
    fn train(&self, data: &[LabeledInput], version: &str) -> Result<Box<dyn Scorer>, TrainError> {
        match self.fit(data, version) {
            Ok(model) => Ok(Box::new(model)),
            Err(e @ (MnbError::EmptyCorpus | MnbError::SingleClass | MnbError::TooFewExamples(_))) => {
                Err(TrainError::Insufficient(e.to_string()))
            }
            Err(e) => Err(TrainError::Failed(e.to_string())),
        }
    }
}
