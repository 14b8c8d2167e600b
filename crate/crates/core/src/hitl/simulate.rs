//! Deterministic stand-in for human annotators.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::queue::AnnotatorSlice;
use crate::corpus::{check_scheme, Annotation, AnnotationKind, CorpusStore, Label, SchemeViolation, StoreError, TargetGroup};

/// Ground-truth judgment for one example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub label: Label,
    pub toxic: bool,
    pub targets: BTreeSet<TargetGroup>,
}

impl GoldLabel {
    pub fn new(label: Label, toxic: bool, targets: BTreeSet<TargetGroup>) -> Result<Self, SchemeViolation> {
        check_scheme(label, toxic, &targets)?;
        Ok(GoldLabel { label, toxic, targets })
    }

    pub fn negative() -> Self {
        GoldLabel { label: Label::Negative, toxic: false, targets: BTreeSet::new() }
    }

    pub fn hate(targets: impl IntoIterator<Item = TargetGroup>) -> Self {
        let targets: BTreeSet<_> = targets.into_iter().collect();
        assert!(!targets.is_empty(), "hate speech needs a target group");
        GoldLabel { label: Label::Positive, toxic: false, targets }
    }

    pub fn toxic() -> Self {
        GoldLabel { label: Label::Positive, toxic: true, targets: BTreeSet::new() }
    }
}

/// Answers with the gold label, flipped with probability `noise`.
///
/// Each (seed, annotator, example) triple always yields the same answer, so a
/// whole simulated campaign is reproducible regardless of call order. A flip
/// of a negative produces a toxic positive; a flip of a positive produces a
/// plain negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedAnnotator {
    pub id: String,
    pub noise: f64,
    pub seed: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for part in parts {
        for b in part.iter().chain(&[0xff]) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SimulatedAnnotator {
    pub fn new(id: impl Into<String>, noise: f64, seed: u64) -> Self {
        SimulatedAnnotator { id: id.into(), noise, seed }
    }

    fn unit(&self, example_id: &str) -> f64 {
        let h = mix(fnv1a(&[&self.seed.to_le_bytes(), self.id.as_bytes(), example_id.as_bytes()]));
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn flips(&self, example_id: &str) -> bool {
        self.unit(example_id) < self.noise
    }

    pub fn judge(&self, example_id: &str, gold: &GoldLabel, now: DateTime<Utc>) -> Annotation {
        let answer = match (self.flips(example_id), gold.label) {
            (false, _) => gold.clone(),
            (true, Label::Positive) => GoldLabel::negative(),
            (true, Label::Negative) => GoldLabel::toxic(),
        };
        Annotation {
            example_id: example_id.to_string(),
            annotator_id: self.id.clone(),
            label: answer.label,
            toxic: answer.toxic,
            targets: answer.targets,
            kind: AnnotationKind::Strong,
            created_at: now,
        }
    }

    /// Annotates every item of the slice, QC items included. Items without a
    /// gold label are skipped. Returns the number of annotations written.
    pub fn annotate_slice(
        &self,
        store: &mut CorpusStore,
        slice: &AnnotatorSlice,
        gold: impl Fn(&str) -> Option<GoldLabel>,
        now: DateTime<Utc>,
    ) -> Result<usize, StoreError> {
        let mut written = 0;
        for id in slice.all_ids() {
            if let Some(g) = gold(id) {
                store.append_annotation(self.judge(id, &g, now))?;
                written += 1;
            }
        }
        Ok(written)
    }
}
