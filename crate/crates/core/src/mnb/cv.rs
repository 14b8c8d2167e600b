use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::features::{fit_vocabulary_from_counts, term_counts, vectorize_counts, FeatureConfig, SparseVector, TermCounts};
use super::model::train_mnb;
use super::MnbError;
use crate::corpus::Label;
use crate::eval::metrics::{compute_metrics, summarize, Metrics, ScoreSummary};
use crate::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub per_fold: Vec<Metrics>,
    pub mean: ScoreSummary,
    pub std: ScoreSummary,
}

/// Assigns every document to one of `k` folds, stratified by class.
///
/// Each class is shuffled with the seeded generator and dealt round-robin.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>, MnbError> {
    if k < 2 {
        return Err(MnbError::InvalidConfig(format!("k must be at least 2, got {k}")));
    }
    let mut rng = seeded_rng(seed);
    let mut folds = vec![0; labels.len()];
    for class in [Label::Negative, Label::Positive] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(MnbError::TooFewPerClass {
                k,
                positives: labels.iter().filter(|l| l.is_positive()).count(),
                negatives: labels.iter().filter(|l| !l.is_positive()).count(),
            });
        }
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            folds[i] = pos % k;
        }
    }
    Ok(folds)
}

/// Trains on every fold except `held_out` and scores the held-out fold.
/// The vocabulary is refit on the training portion only.
pub(crate) fn evaluate_fold(
    counts: &[TermCounts],
    labels: &[Label],
    folds: &[usize],
    held_out: usize,
    cfg: &FeatureConfig,
    alpha: f64,
) -> Result<Metrics, MnbError> {
    let train: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != held_out).collect();
    let test: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == held_out).collect();
    let train_counts: Vec<TermCounts> = train.iter().map(|&i| counts[i].clone()).collect();
    let vocab = fit_vocabulary_from_counts(&train_counts, cfg)?;
    let x: Vec<SparseVector> = train_counts
        .iter()
        .map(|c| vectorize_counts(c, &vocab, cfg.weighting))
        .collect();
    let y: Vec<Label> = train.iter().map(|&i| labels[i]).collect();
    let params = train_mnb(&x, &y, vocab.len(), alpha)?;
    let truth: Vec<Label> = test.iter().map(|&i| labels[i]).collect();
    let predicted: Vec<Label> = test
        .iter()
        .map(|&i| {
            let p = params.positive_posterior(&vectorize_counts(&counts[i], &vocab, cfg.weighting));
            Label::from_bool(p >= 0.5)
        })
        .collect();
    Ok(compute_metrics(&truth, &predicted)?)
}

/// Stratified k-fold cross-validation of the tfidf + MNB pipeline.
pub fn cross_validate(
    docs: &[Vec<String>],
    labels: &[Label],
    cfg: &FeatureConfig,
    alpha: f64,
    k: usize,
    seed: u64,
) -> Result<CvReport, MnbError> {
    cfg.validate()?;
    if docs.len() != labels.len() {
        return Err(MnbError::LengthMismatch { features: docs.len(), labels: labels.len() });
    }
    let folds = stratified_folds(labels, k, seed)?;
    let counts: Vec<TermCounts> = docs.iter().map(|d| term_counts(d, cfg)).collect();
    let per_fold = (0..k)
        .map(|f| evaluate_fold(&counts, labels, &folds, f, cfg, alpha))
        .collect::<Result<Vec<_>, _>>()?;
    let (mean, std) = summarize(&per_fold);
    Ok(CvReport { k, per_fold, mean, std })
}
