//! Random search over a finite hyperparameter space with median pruning.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::cv::{evaluate_fold, stratified_folds};
use super::features::{term_counts, FeatureConfig, TermCounts};
use super::MnbError;
use crate::corpus::Label;
use crate::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub max_features: Vec<usize>,
    pub ngram_max: Vec<usize>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialStatus {
    Completed { mean_f1: f64 },
    /// Stopped after `folds` folds (1-based count).
    Pruned { folds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub config: FeatureConfig,
    pub alpha: f64,
    pub fold_f1: Vec<f64>,
    #[serde(flatten)]
    pub status: TrialStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_config: FeatureConfig,
    pub best_alpha: f64,
    pub best_mean_f1: f64,
    pub trace: Vec<TrialRecord>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 0 {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    }
}

/// Samples up to `budget` distinct points of the space in seeded random order
/// and cross-validates each fold by fold. A trial is pruned as soon as its
/// running mean F1 falls below the median running mean of the completed trials
/// at the same fold count. The best completed trial wins; ties go to the
/// earlier trial.
pub fn hyperparam_search(
    docs: &[Vec<String>],
    labels: &[Label],
    space: &SearchSpace,
    base: FeatureConfig,
    budget: usize,
    k: usize,
    seed: u64,
) -> Result<SearchResult, MnbError> {
    if space.max_features.is_empty() || space.ngram_max.is_empty() || space.alpha.is_empty() {
        return Err(MnbError::EmptySpace);
    }
    if budget == 0 {
        return Err(MnbError::InvalidConfig("search budget must be at least 1".into()));
    }
    if docs.len() != labels.len() {
        return Err(MnbError::LengthMismatch { features: docs.len(), labels: labels.len() });
    }

    let mut grid = Vec::new();
    for &max_features in &space.max_features {
        for &ngram_max in &space.ngram_max {
            for &alpha in &space.alpha {
                let cfg = FeatureConfig { max_features, ngram_max, ..base };
                cfg.validate()?;
                grid.push((cfg, alpha));
            }
        }
    }
    let mut rng = seeded_rng(seed);
    grid.shuffle(&mut rng);
    grid.truncate(budget);

    let folds = stratified_folds(labels, k, seed)?;
    let mut count_cache: HashMap<(usize, usize), Vec<TermCounts>> = HashMap::new();
    let mut trace: Vec<TrialRecord> = Vec::new();

    for (trial, (cfg, alpha)) in grid.into_iter().enumerate() {
        let counts = count_cache
            .entry((cfg.ngram_min, cfg.ngram_max))
            .or_insert_with(|| docs.iter().map(|d| term_counts(d, &cfg)).collect());
        let mut fold_f1 = Vec::with_capacity(k);
        let mut status = None;
        for fold in 0..k {
            let m = evaluate_fold(counts, labels, &folds, fold, &cfg, alpha)?;
            fold_f1.push(m.weighted_f1);
            let running = fold_f1.iter().sum::<f64>() / fold_f1.len() as f64;
            if fold + 1 == k {
                break;
            }
            let mut peers: Vec<f64> = trace
                .iter()
                .filter(|t| matches!(t.status, TrialStatus::Completed { .. }))
                .map(|t| t.fold_f1[..=fold].iter().sum::<f64>() / (fold + 1) as f64)
                .collect();
            if !peers.is_empty() && running < median(&mut peers) {
                status = Some(TrialStatus::Pruned { folds: fold + 1 });
                break;
            }
        }
        let status = status.unwrap_or_else(|| TrialStatus::Completed {
            mean_f1: fold_f1.iter().sum::<f64>() / k as f64,
        });
        trace.push(TrialRecord {
            trial,
            config: cfg,
            alpha,
            fold_f1,
            status,
        });
    }

    let best = trace
        .iter()
        .filter_map(|t| match t.status {
            TrialStatus::Completed { mean_f1 } => Some((t, mean_f1)),
            TrialStatus::Pruned { .. } => None,
        })
        .fold(None::<(&TrialRecord, f64)>, |acc, (t, f)| match acc {
            Some((_, best_f)) if best_f >= f => acc,
            _ => Some((t, f)),
        })
        .expect("the first trial always completes");
    Ok(SearchResult {
        best_config: best.0.config,
        best_alpha: best.0.alpha,
        best_mean_f1: best.1,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn empty_space_rejected() {
        let space = SearchSpace { max_features: vec![], ngram_max: vec![1], alpha: vec![1.0] };
        assert_eq!(
            hyperparam_search(&[], &[], &space, FeatureConfig::default(), 1, 2, 0),
            Err(MnbError::EmptySpace)
        );
    }
}
