use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::HitlError;
use crate::seeded_rng;

pub const DEFAULT_SLICE_SIZE: usize = 500;
pub const DEFAULT_QC_COUNT: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub example_id: String,
    pub weak_probability: f64,
}

/// Weak-labelled candidates in review order, plus the QC items shared by
/// every annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationQueue {
    pub items: Vec<QueueItem>,
    pub qc_ids: BTreeSet<String>,
    pub slice_size: usize,
}

/// One annotator's work package: their own items, then the shared QC items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorSlice {
    pub annotator_id: String,
    pub items: Vec<String>,
    pub qc_ids: Vec<String>,
}

impl AnnotatorSlice {
    pub fn all_ids(&self) -> impl Iterator<Item = &String> {
        self.items.iter().chain(&self.qc_ids)
    }
}

/// Descending probability, ties by ascending id.
pub fn review_order(a: &QueueItem, b: &QueueItem) -> std::cmp::Ordering {
    b.weak_probability
        .total_cmp(&a.weak_probability)
        .then_with(|| a.example_id.cmp(&b.example_id))
}

/// Orders candidates for review and cuts per-annotator slices from the top.
///
/// The drawn subset is the first `annotators.len() * slice_size + qc_count`
/// items. QC items are a seeded sample of that subset; the rest of the subset
/// is dealt to annotators in order, `slice_size` items each.
pub fn build_annotation_queue(
    candidates: &[(String, f64)],
    annotators: &[String],
    slice_size: usize,
    qc_count: usize,
    seed: u64,
) -> Result<(AnnotationQueue, Vec<AnnotatorSlice>), HitlError> {
    if qc_count > candidates.len() {
        return Err(HitlError::QcLargerThanPool { qc_count, pool: candidates.len() });
    }
    let mut items: Vec<QueueItem> = candidates
        .iter()
        .map(|(id, p)| QueueItem { example_id: id.clone(), weak_probability: *p })
        .collect();
    items.sort_by(review_order);
    items.dedup_by(|a, b| a.example_id == b.example_id);

    let drawn = (annotators.len() * slice_size + qc_count).min(items.len());
    let mut sample: Vec<&String> = items[..drawn].iter().map(|i| &i.example_id).collect();
    let mut rng = seeded_rng(seed);
    sample.shuffle(&mut rng);
    let qc_ids: BTreeSet<String> = sample.into_iter().take(qc_count).cloned().collect();

    let mut own = items[..drawn]
        .iter()
        .map(|i| &i.example_id)
        .filter(|id| !qc_ids.contains(*id));
    let qc_order: Vec<String> = items
        .iter()
        .filter(|i| qc_ids.contains(&i.example_id))
        .map(|i| i.example_id.clone())
        .collect();
    let slices = annotators
        .iter()
        .map(|a| AnnotatorSlice {
            annotator_id: a.clone(),
            items: own.by_ref().take(slice_size).cloned().collect(),
            qc_ids: qc_order.clone(),
        })
        .collect();
    Ok((AnnotationQueue { items, qc_ids, slice_size }, slices))
}

/// Groups slices by annotator for lookups.
pub fn slices_by_annotator(slices: &[AnnotatorSlice]) -> BTreeMap<&str, &AnnotatorSlice> {
    slices.iter().map(|s| (s.annotator_id.as_str(), s)).collect()
}
