use rand::seq::SliceRandom;

use super::EvalError;
use crate::corpus::Label;
use crate::seeded_rng;

/// Per-class 80-20 split; the train side gets `floor(0.8 * n)` of each class.
///
/// Ids are shuffled per class with the seeded generator. Train ids come back
/// positives first, then negatives; the same holds for test ids.
pub fn stratified_split_8020(ids: &[String], labels: &[Label], seed: u64) -> Result<(Vec<String>, Vec<String>), EvalError> {
    if ids.len() != labels.len() {
        return Err(EvalError::LengthMismatch { ids: ids.len(), labels: labels.len() });
    }
    let mut rng = seeded_rng(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [Label::Positive, Label::Negative] {
        let mut members: Vec<&String> = ids.iter().zip(labels).filter(|(_, l)| **l == class).map(|(id, _)| id).collect();
        if members.is_empty() {
            return Err(EvalError::SingleClass);
        }
        members.shuffle(&mut rng);
        let cut = members.len() * 4 / 5;
        train.extend(members[..cut].iter().map(|s| (*s).clone()));
        test.extend(members[cut..].iter().map(|s| (*s).clone()));
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(pos: usize, neg: usize) -> (Vec<String>, Vec<Label>) {
        let ids = (0..pos + neg).map(|i| format!("e{i}")).collect();
        let labels = (0..pos + neg).map(|i| Label::from_bool(i < pos)).collect();
        (ids, labels)
    }

    fn count(ids: &[String], pos: usize) -> (usize, usize) {
        let p = ids.iter().filter(|id| id[1..].parse::<usize>().unwrap() < pos).count();
        (p, ids.len() - p)
    }

    #[test]
    fn ten_and_ten() {
        let (ids, labels) = corpus(10, 10);
        let (train, test) = stratified_split_8020(&ids, &labels, 1).unwrap();
        assert_eq!(count(&train, 10), (8, 8));
        assert_eq!(count(&test, 10), (2, 2));
    }

    #[test]
    fn floor_on_train_side() {
        let (ids, labels) = corpus(5, 100);
        let (train, test) = stratified_split_8020(&ids, &labels, 1).unwrap();
        assert_eq!(count(&train, 5), (4, 80));
        assert_eq!(count(&test, 5), (1, 20));
    }

    #[test]
    fn deterministic_disjoint_exhaustive() {
        let (ids, labels) = corpus(33, 47);
        let a = stratified_split_8020(&ids, &labels, 9).unwrap();
        assert_eq!(a, stratified_split_8020(&ids, &labels, 9).unwrap());
        let mut all: Vec<&String> = a.0.iter().chain(&a.1).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 80);
    }

    #[test]
    fn single_class() {
        let (ids, labels) = corpus(0, 4);
        assert!(matches!(stratified_split_8020(&ids, &labels, 0), Err(EvalError::SingleClass)));
    }
}
