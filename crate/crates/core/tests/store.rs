use chrono::{DateTime, Utc};
use loopsift_core::eval::{generate_synthetic_corpus, SyntheticCorpusSpec};
use loopsift_core::hitl::{balance_5050, SimulatedAnnotator};
use loopsift_core::{CorpusStore, Label};

fn now() -> DateTime<Utc> {
    DateTime::from_timestamp(1_650_000_000, 0).unwrap()
}

fn populated(store: &mut CorpusStore) {
    let spec = SyntheticCorpusSpec { n_examples: 300, ..SyntheticCorpusSpec::shipped() };
    let corpus = generate_synthetic_corpus(&spec).unwrap();
    store.ingest_examples(corpus.new_examples(), now()).unwrap();
    let team = [SimulatedAnnotator::new("a", 0.2, 1), SimulatedAnnotator::new("b", 0.2, 2)];
    let ids: Vec<String> = corpus.examples.iter().take(120).map(|e| e.id.clone()).collect();
    for id in &ids {
        for who in &team {
            store.append_annotation(who.judge(id, &corpus.gold[id], now())).unwrap();
        }
        let _ = store.resolve(id);
    }
    let weak: Vec<(String, f64)> = corpus.examples[120..].iter().map(|e| (e.id.clone(), 0.7)).collect();
    store.record_weak_labels(&weak, "model:test").unwrap();
    let (pos, neg): (Vec<String>, Vec<String>) = ids
        .iter()
        .filter(|id| store.strong_label(id).is_some())
        .cloned()
        .partition(|id| store.strong_label(id) == Some(Label::Positive));
    let balanced = balance_5050(&pos, &neg, 3).unwrap();
    store.snapshot_training_set(&balanced, now()).unwrap();
}

#[test]
fn reopened_store_matches_the_live_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut live = CorpusStore::open(dir.path()).unwrap();
    populated(&mut live);
    let reopened = CorpusStore::open(dir.path()).unwrap();
    assert_eq!(reopened.len(), live.len());
    assert_eq!(reopened.annotations(), live.annotations());
    assert_eq!(reopened.label_history(), live.label_history());
    assert_eq!(reopened.snapshots(), live.snapshots());
    for e in live.examples() {
        assert_eq!(reopened.label_state(&e.id), live.label_state(&e.id));
    }
}

#[test]
fn export_is_byte_stable() {
    let mut a = CorpusStore::in_memory();
    populated(&mut a);
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.export(d1.path()).unwrap();
    CorpusStore::open(d1.path()).unwrap().export(d2.path()).unwrap();
    for f in ["examples.jsonl", "annotations.jsonl", "labels.jsonl", "snapshots.jsonl"] {
        assert_eq!(std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d2.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn reingesting_everything_is_all_duplicates() {
    let mut store = CorpusStore::in_memory();
    populated(&mut store);
    let again: Vec<_> = store.examples().map(Into::into).collect();
    let report = store.ingest_examples(again, now()).unwrap();
    assert_eq!(report.accepted, 0);
    assert_eq!(report.rejected.len(), store.len());
}
