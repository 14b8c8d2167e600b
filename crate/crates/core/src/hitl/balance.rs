use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::HitlError;
use crate::seeded_rng;

/// Undersamples the majority class to a 50-50 ratio.
///
/// Duplicate ids within a list are dropped (first occurrence wins). Every
/// minority id is kept in input order, followed by the sampled majority ids
/// in shuffled order: positives first, then negatives.
pub fn balance_5050(pos_ids: &[String], neg_ids: &[String], seed: u64) -> Result<Vec<String>, HitlError> {
    let pos = dedup(pos_ids);
    let neg = dedup(neg_ids);
    if pos.is_empty() || neg.is_empty() {
        return Err(HitlError::EmptyClass { positives: pos.len(), negatives: neg.len() });
    }
    let n = pos.len().min(neg.len());
    let mut rng = seeded_rng(seed);
    let take = |mut ids: Vec<String>, rng: &mut rand_chacha::ChaCha8Rng| {
        if ids.len() > n {
            ids.shuffle(rng);
            ids.truncate(n);
        }
        ids
    };
    let mut out = take(pos, &mut rng);
    out.extend(take(neg, &mut rng));
    Ok(out)
}

fn dedup(ids: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    ids.iter().filter(|id| seen.insert(id.as_str())).cloned().collect()
}
