use super::HitlError;
use crate::corpus::{CorpusStore, LabelState, StoreError};
use crate::scorer::{score_checked, ScoreInput, Scorer};

/// Scores examples and records the weak labels in one atomic write.
///
/// The version stamp is `name:version` of the scorer. Nothing is written when
/// the scorer fails.
pub fn generate_weak_labels(
    store: &mut CorpusStore,
    scorer: &dyn Scorer,
    example_ids: &[String],
) -> Result<Vec<LabelState>, HitlError> {
    let inputs = example_ids
        .iter()
        .map(|id| {
            store
                .example(id)
                .map(|e| ScoreInput { text: e.text.clone(), language: e.language.clone() })
                .ok_or_else(|| StoreError::UnknownExample(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let probabilities = score_checked(scorer, &inputs).map_err(|e| HitlError::ScorerUnavailable(e.to_string()))?;
    let identity = scorer.identity();
    let scores: Vec<(String, f64)> = example_ids.iter().cloned().zip(probabilities).collect();
    Ok(store.record_weak_labels(&scores, &format!("{}:{}", identity.name, identity.version))?)
}
