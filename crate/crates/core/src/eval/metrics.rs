use serde::{Deserialize, Serialize};

use crate::corpus::Label;

/// Support-weighted precision, recall and F1 over both classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub weighted_f1: f64,
    pub support_pos: usize,
    pub support_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("{truth} true labels vs {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("no labels to score")]
    Empty,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class scores use 0 whenever a denominator is 0.
pub fn compute_metrics(y_true: &[Label], y_pred: &[Label]) -> Result<Metrics, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    // confusion[truth][pred]
    let mut confusion = [[0usize; 2]; 2];
    for (t, p) in y_true.iter().zip(y_pred) {
        confusion[t.as_u8() as usize][p.as_u8() as usize] += 1;
    }
    let n = y_true.len() as f64;
    let (mut precision, mut recall, mut weighted_f1) = (0.0, 0.0, 0.0);
    for c in 0..2 {
        let tp = confusion[c][c];
        let support = confusion[c][0] + confusion[c][1];
        let predicted = confusion[0][c] + confusion[1][c];
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        let w = support as f64 / n;
        precision += w * p;
        recall += w * r;
        weighted_f1 += w * f1(p, r);
    }
    Ok(Metrics {
        precision,
        recall,
        weighted_f1,
        support_pos: confusion[1][0] + confusion[1][1],
        support_neg: confusion[0][0] + confusion[0][1],
    })
}

/// Mean or spread of the three scores across runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub precision: f64,
    pub recall: f64,
    pub weighted_f1: f64,
}

/// Arithmetic mean and population standard deviation.
pub fn summarize(runs: &[Metrics]) -> (ScoreSummary, ScoreSummary) {
    if runs.is_empty() {
        return (ScoreSummary::default(), ScoreSummary::default());
    }
    let n = runs.len() as f64;
    let mean_of = |f: fn(&Metrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let mean = ScoreSummary {
        precision: mean_of(|m| m.precision),
        recall: mean_of(|m| m.recall),
        weighted_f1: mean_of(|m| m.weighted_f1),
    };
    let std_of = |f: fn(&Metrics) -> f64, mu: f64| (runs.iter().map(|m| (f(m) - mu).powi(2)).sum::<f64>() / n).sqrt();
    let std = ScoreSummary {
        precision: std_of(|m| m.precision, mean.precision),
        recall: std_of(|m| m.recall, mean.recall),
        weighted_f1: std_of(|m| m.weighted_f1, mean.weighted_f1),
    };
    (mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Negative as N, Positive as P};

    #[test]
    fn perfect() {
        let m = compute_metrics(&[P, N, P], &[P, N, P]).unwrap();
        assert_eq!(m.weighted_f1, 1.0);
        assert_eq!((m.support_pos, m.support_neg), (2, 1));
    }

    #[test]
    fn all_wrong_on_balanced() {
        let m = compute_metrics(&[P, P, N, N], &[N, N, P, P]).unwrap();
        assert_eq!(m.weighted_f1, 0.0);
    }

    #[test]
    fn hand_computed_mixed_case() {
        // positive: P=1, R=1/2, F1=2/3; negative: P=2/3, R=1, F1=4/5
        let m = compute_metrics(&[P, P, N, N], &[P, N, N, N]).unwrap();
        let expected = (2.0 * (2.0 / 3.0) + 2.0 * 0.8) / 4.0;
        assert!((m.weighted_f1 - expected).abs() < 1e-15);
        assert!((m.weighted_f1 - 0.733_333_333_333_333_3).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(compute_metrics(&[P], &[P, N]), Err(MetricsError::LengthMismatch { .. })));
        assert_eq!(compute_metrics(&[], &[]), Err(MetricsError::Empty));
    }
}
