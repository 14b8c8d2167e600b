use std::collections::BTreeSet;

use super::{Annotation, AnnotationKind, Label, Resolution, TargetGroup};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("no strong annotation for {0}")]
    NoStrongAnnotations(String),
    /// Two annotators disagree and the deciding third vote is still missing.
    #[error("unresolved tie on {0}: waiting for a third annotator")]
    UnresolvedTie(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedLabel {
    pub label: Label,
    pub resolution: Resolution,
    pub targets: BTreeSet<TargetGroup>,
    pub toxic: bool,
}

/// Aggregates the human annotations of one example into a strong label.
///
/// Only the latest vote of each annotator counts, so a resubmitted review
/// never shifts the majority. A QC annotation overrides everything else.
/// Two disagreeing votes wait for a third, which then decides. Even splits
/// with four or more votes resolve to negative.
pub fn resolve_strong_label(
    example_id: &str,
    annotations: &[Annotation],
) -> Result<ResolvedLabel, ResolveError> {
    let mut relevant: Vec<&Annotation> = annotations
        .iter()
        .filter(|a| a.example_id == example_id && a.kind != AnnotationKind::Weak)
        .collect();
    // stable: equal timestamps keep append order
    relevant.sort_by_key(|a| a.created_at);

    if let Some(qc) = relevant.iter().rev().find(|a| a.kind == AnnotationKind::Qc) {
        return Ok(ResolvedLabel {
            label: qc.label,
            resolution: Resolution::QcOverride,
            targets: qc.targets.clone(),
            toxic: qc.toxic,
        });
    }

    // latest vote per annotator, ordered by when that vote was cast
    let mut votes: Vec<&Annotation> = Vec::new();
    for a in relevant {
        votes.retain(|v| v.annotator_id != a.annotator_id);
        votes.push(a);
    }

    let (label, resolution) = match votes.as_slice() {
        [] => return Err(ResolveError::NoStrongAnnotations(example_id.to_string())),
        [only] => (only.label, Resolution::Single),
        [a, b] if a.label != b.label => {
            return Err(ResolveError::UnresolvedTie(example_id.to_string()))
        }
        [a, b, third] if a.label != b.label => (third.label, Resolution::TiebreakThird),
        _ => {
            let positives = votes.iter().filter(|v| v.label.is_positive()).count();
            let negatives = votes.len() - positives;
            (Label::from_bool(positives > negatives), Resolution::Majority)
        }
    };

    let targets: BTreeSet<TargetGroup> = if label.is_positive() {
        votes
            .iter()
            .filter(|v| v.label == label)
            .flat_map(|v| v.targets.iter().copied())
            .collect()
    } else {
        BTreeSet::new()
    };
    let toxic = label.is_positive() && targets.is_empty();

    Ok(ResolvedLabel {
        label,
        resolution,
        targets,
        toxic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone, Utc};

    fn vote(annotator: &str, label: u8, minute: i64, targets: &[TargetGroup]) -> Annotation {
        let label = Label::from_bool(label == 1);
        Annotation {
            example_id: "e1".into(),
            annotator_id: annotator.into(),
            label,
            toxic: label.is_positive() && targets.is_empty(),
            targets: targets.iter().copied().collect(),
            kind: AnnotationKind::Strong,
            created_at: Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap()
                + Duration::minutes(minute),
        }
    }

    #[test]
    fn majority_of_three() {
        let anns = [vote("a", 1, 0, &[]), vote("b", 1, 1, &[]), vote("c", 0, 2, &[])];
        let r = resolve_strong_label("e1", &anns).unwrap();
        assert_eq!(r.label, Label::Positive);
        assert_eq!(r.resolution, Resolution::Majority);
    }

    #[test]
    fn third_annotator_breaks_tie() {
        let two = [vote("a", 1, 0, &[]), vote("b", 0, 1, &[])];
        assert_eq!(
            resolve_strong_label("e1", &two),
            Err(ResolveError::UnresolvedTie("e1".into()))
        );
        let three = [two[0].clone(), two[1].clone(), vote("c", 0, 2, &[])];
        let r = resolve_strong_label("e1", &three).unwrap();
        assert_eq!(r.label, Label::Negative);
        assert_eq!(r.resolution, Resolution::TiebreakThird);
    }

    #[test]
    fn single_vote() {
        let r = resolve_strong_label("e1", &[vote("a", 1, 0, &[])]).unwrap();
        assert_eq!((r.label, r.resolution), (Label::Positive, Resolution::Single));
        assert!(r.toxic);
    }

    #[test]
    fn even_split_is_negative() {
        let anns = [
            vote("a", 1, 0, &[]),
            vote("b", 1, 1, &[]),
            vote("c", 0, 2, &[]),
            vote("d", 0, 3, &[]),
        ];
        let r = resolve_strong_label("e1", &anns).unwrap();
        assert_eq!(r.label, Label::Negative);
    }

    #[test]
    fn targets_are_unioned_across_the_majority() {
        let anns = [
            vote("a", 1, 0, &[TargetGroup::Nationality]),
            vote("b", 1, 1, &[TargetGroup::Politics]),
            vote("c", 0, 2, &[]),
        ];
        let r = resolve_strong_label("e1", &anns).unwrap();
        assert_eq!(
            r.targets.into_iter().collect::<Vec<_>>(),
            vec![TargetGroup::Nationality, TargetGroup::Politics]
        );
        assert!(!r.toxic);
    }

    #[test]
    fn repeated_vote_from_one_annotator_counts_once() {
        let anns = [vote("a", 1, 0, &[]), vote("a", 1, 1, &[])];
        let r = resolve_strong_label("e1", &anns).unwrap();
        assert_eq!(r.resolution, Resolution::Single);
    }

    #[test]
    fn qc_annotation_overrides() {
        let mut qc = vote("lead", 0, 5, &[]);
        qc.kind = AnnotationKind::Qc;
        let anns = [vote("a", 1, 0, &[]), vote("b", 1, 1, &[]), qc];
        let r = resolve_strong_label("e1", &anns).unwrap();
        assert_eq!((r.label, r.resolution), (Label::Negative, Resolution::QcOverride));
    }

    #[test]
    fn weak_annotations_are_ignored() {
        let mut weak = vote("model:v1", 1, 0, &[]);
        weak.kind = AnnotationKind::Weak;
        assert!(matches!(
            resolve_strong_label("e1", &[weak]),
            Err(ResolveError::NoStrongAnnotations(_))
        ));
    }
}
