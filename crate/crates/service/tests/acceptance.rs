//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Tolerances and time limits are pinned below.

#[path = "../../core/tests/support/fixtures.rs"]
mod fixtures;
#[path = "../../core/tests/support/oracles.rs"]
mod oracles;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::{DateTime, Utc};
use http_body_util::BodyExt;
use loopsift_core::eval::{
    cross_slice_experiment, emit_report, generate_synthetic_corpus, incremental_experiment, temporal_drift_experiment,
    threshold_band_report, toxic_policy_report, ReportFormat, SliceFilter, SyntheticCorpus, SyntheticCorpusSpec,
    ToxicPolicy,
};
use loopsift_core::hitl::{balance_5050, CycleConfig, CycleEngine, SimulatedAnnotator};
use loopsift_core::mnb::MnbTrainer;
use loopsift_core::quality::krippendorff_alpha;
use loopsift_core::{compute_metrics, CorpusStore, FeatureConfig, Label, MnbModel, ScoreInput, Weighting};
use loopsift_service::{router, AppState, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

const MNB_TOLERANCE: f64 = 1e-9;
const MNB_LIMIT: Duration = Duration::from_secs(10);
const METRICS_TOLERANCE: f64 = 1e-12;
const METRICS_LIMIT: Duration = Duration::from_secs(30);
const ALPHA_RANDOM_BOUND: f64 = 0.05;
const ALPHA_TOLERANCE: f64 = 1e-9;
const ALPHA_LIMIT: Duration = Duration::from_secs(20);
const INCREMENTAL_BATCHES: [usize; 6] = [150, 300, 450, 600, 1000, 1500];
const INCREMENTAL_TOLERANCE: f64 = 0.02;
const INCREMENTAL_FINAL_F1: f64 = 0.90;
const INCREMENTAL_LIMIT: Duration = Duration::from_secs(120);
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const DRIFT_MEAN_BELOW: f64 = -0.05;
const CONTROL_ABS_DELTA: f64 = 0.03;
const BALANCE_PAIRS: usize = 1000;
const CONCURRENT_REQUESTS: usize = 100;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("mnb_oracle_equivalence", mnb_oracle),
        ("metrics_exhaustive_oracle", metrics_oracle),
        ("threshold_band_fixture", threshold_fixture),
        ("krippendorff_alpha", alpha),
        ("incremental_loop", incremental),
        ("toxic_policy_ordering", toxic_ordering),
        ("drift_direction", drift),
        ("balancing_and_snapshots", balancing_and_snapshots),
        ("end_to_end_determinism", determinism),
        ("service_contract", service_contract),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| outcome(false, format!("panicked: {}", panic_text(&p))));
        let secs = start.elapsed().as_secs_f64();
        let tag = if result.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!result.passed);
        println!("{tag} {name}: {} [{secs:.2}s]", result.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let took = start.elapsed();
    (took <= limit, format!("{:.2}s of {}s", took.as_secs_f64(), limit.as_secs()))
}

fn mnb_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut compared) = (0.0f64, 0);
    for _ in 0..200 {
        let c = oracles::random_corpus(&mut rng);
        let labels: Vec<Label> = c.positive.iter().map(|&p| Label::from_bool(p)).collect();
        let cfg = FeatureConfig {
            max_features: c.max_features,
            ngram_min: c.ngram.0,
            ngram_max: c.ngram.1,
            weighting: if c.tfidf { Weighting::Tfidf } else { Weighting::Count },
        };
        let model = MnbModel::fit(&c.docs, &labels, cfg, c.alpha, "acceptance").unwrap();
        let oracle = oracles::OracleNb::fit(&c.docs, &c.positive, c.max_features, c.ngram, c.tfidf, c.alpha);
        for q in c.docs.iter().chain(&c.queries) {
            worst = worst.max((model.predict_tokens(q) - oracle.posterior(q)).abs());
            compared += 1;
        }
    }
    let (fast, time) = within(MNB_LIMIT, start);
    outcome(
        worst <= MNB_TOLERANCE && fast,
        format!("200 corpora, {compared} posteriors, max |diff| {worst:.2e} <= {MNB_TOLERANCE:e}, {time}"),
    )
}

fn metrics_oracle() -> Outcome {
    let start = Instant::now();
    let n = 8u32;
    let (mut worst, mut pairs) = (0.0f64, 0usize);
    for t in 0..1u32 << n {
        let truth: Vec<bool> = (0..n).map(|i| t >> i & 1 == 1).collect();
        let y_true: Vec<Label> = truth.iter().map(|&b| Label::from_bool(b)).collect();
        for p in 0..1u32 << n {
            let pred: Vec<bool> = (0..n).map(|i| p >> i & 1 == 1).collect();
            let y_pred: Vec<Label> = pred.iter().map(|&b| Label::from_bool(b)).collect();
            let m = compute_metrics(&y_true, &y_pred).unwrap();
            let (wp, wr, wf) = oracles::weighted_scores(&truth, &pred);
            worst = worst.max((m.precision - wp).abs()).max((m.recall - wr).abs()).max((m.weighted_f1 - wf).abs());
            pairs += 1;
        }
    }
    let (fast, time) = within(METRICS_LIMIT, start);
    outcome(
        pairs == 65_536 && worst <= METRICS_TOLERANCE && fast,
        format!("{pairs} label-vector pairs, max |diff| {worst:.1e}, {time}"),
    )
}

fn threshold_fixture() -> Outcome {
    let r = threshold_band_report(&fixtures::band_fixture()).unwrap();
    let got: Vec<u32> = r.bands.iter().map(|b| b.hs_pct).collect();
    let want: Vec<u32> = fixtures::BAND_TABLE.iter().map(|row| row.4).collect();
    let rows_match = r
        .bands
        .iter()
        .zip(fixtures::BAND_TABLE)
        .all(|(b, (label, total, hs, non_hs, _))| b.range.label() == label && (b.total, b.hs, b.non_hs) == (total, hs, non_hs));
    outcome(
        got == want && rows_match && r.recommended_threshold == 0.90 && r.minimum_threshold == 0.85,
        format!(
            "HS% {got:?}, recommended {:.2}, minimum {:.2}",
            r.recommended_threshold, r.minimum_threshold
        ),
    )
}

fn alpha() -> Outcome {
    let start = Instant::now();
    let perfect: Vec<Vec<Option<u32>>> = (0..50).map(|i| vec![Some(i % 2); 3]).collect();
    let perfect_alpha = krippendorff_alpha(&perfect).unwrap().alpha;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let random: Vec<Vec<Option<u32>>> = (0..2000).map(|_| (0..3).map(|_| Some(rng.gen_range(0..2))).collect()).collect();
    let random_alpha = krippendorff_alpha(&random).unwrap().alpha;

    // every binary table with at most 12 cells within 6 x 4, then random
    // three-code tables for the larger shapes
    let agrees = |t: &[Vec<Option<u32>>]| match (krippendorff_alpha(t), oracles::pairwise_alpha(t)) {
        (Ok(r), Some(w)) => (r.alpha - w).abs() <= ALPHA_TOLERANCE,
        (Err(_), None) => true,
        _ => false,
    };
    let (mut checked, mut mismatches) = (0usize, 0usize);
    let mut check = |t: &[Vec<Option<u32>>], checked: &mut usize| {
        *checked += 1;
        mismatches += usize::from(!agrees(t));
    };
    for rows in 1..=6 {
        for cols in 1..=4 {
            if rows * cols <= 12 {
                for t in oracles::all_tables(rows, cols, 2) {
                    check(&t, &mut checked);
                }
            }
        }
    }
    let exhaustive = checked;
    for _ in 0..50_000 {
        check(&oracles::random_table(&mut rng, 6, 4, 3), &mut checked);
    }
    drop(check);
    let (fast, time) = within(ALPHA_LIMIT, start);
    outcome(
        perfect_alpha == 1.0 && random_alpha.abs() <= ALPHA_RANDOM_BOUND && mismatches == 0 && fast,
        format!(
            "perfect {perfect_alpha}, random 2000x3 {random_alpha:.4} (bound {ALPHA_RANDOM_BOUND}), \
             oracle mismatches {mismatches} over {exhaustive} exhaustive + {} random tables, {time}",
            checked - exhaustive
        ),
    )
}

fn incremental() -> Outcome {
    let start = Instant::now();
    let spec = SyntheticCorpusSpec::shipped();
    let seed = spec.seed;
    let corpus = generate_synthetic_corpus(&spec).unwrap();
    let report = incremental_experiment(&corpus, &INCREMENTAL_BATCHES, &MnbTrainer::default(), seed).unwrap();
    let series = report.f1_series();
    let trained: Vec<f64> = series.iter().flatten().copied().collect();
    let monotone = trained.windows(2).all(|w| w[1] >= w[0] - INCREMENTAL_TOLERANCE);
    let last = series.last().copied().flatten().unwrap_or(0.0);
    let (fast, time) = within(INCREMENTAL_LIMIT, start);
    let shown: Vec<String> = series.iter().map(|f| f.map_or("OF".into(), |f| format!("{f:.3}"))).collect();
    outcome(
        series.len() == 6 && monotone && last >= INCREMENTAL_FINAL_F1 && fast,
        format!("weekly F1 [{}], tolerance {INCREMENTAL_TOLERANCE}, final >= {INCREMENTAL_FINAL_F1}, {time}", shown.join(", ")),
    )
}

fn seeded(seed: u64) -> SyntheticCorpus {
    generate_synthetic_corpus(&SyntheticCorpusSpec::shipped().with_seed(seed)).unwrap()
}

fn toxic_ordering() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let r = toxic_policy_report(&seeded(seed), &MnbTrainer::default(), seed).unwrap();
        let f1 = |p: ToxicPolicy| r.rows.iter().find(|row| row.policy == p).unwrap().metrics.weighted_f1;
        let (pos, drop, neg) = (f1(ToxicPolicy::ToxicAsPositive), f1(ToxicPolicy::DropToxic), f1(ToxicPolicy::ToxicAsNegative));
        ok &= neg < pos.min(drop);
        parts.push(format!("seed {seed}: {pos:.3}/{drop:.3}/{neg:.3}"));
    }
    outcome(ok, format!("positive/drop/negative F1: {}", parts.join("; ")))
}

fn drift() -> Outcome {
    let cutoff: DateTime<Utc> = "2021-10-01T00:00:00Z".parse().unwrap();
    let on1 = SliceFilter { source: Some("ON1".parse().unwrap()), ..SliceFilter::default() };
    let trainer = MnbTrainer::default();
    let (mut deltas, mut controls) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        let corpus = seeded(seed);
        let r = temporal_drift_experiment(&corpus, &[cutoff], &trainer, seed).unwrap();
        deltas.extend(r.rows.iter().map(|row| row.delta_f1));
        controls.push(cross_slice_experiment(&corpus, &on1, &on1, &trainer, seed).unwrap().delta_f1);
    }
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let worst_control = controls.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    outcome(
        mean < DRIFT_MEAN_BELOW && worst_control <= CONTROL_ABS_DELTA,
        format!(
            "temporal mean delta F1 {mean:.4} < {DRIFT_MEAN_BELOW}; same-source control max |delta| {worst_control:.4} <= {CONTROL_ABS_DELTA}"
        ),
    )
}

/// Three review weeks over the shipped corpus with simulated annotators.
struct Campaign {
    store: CorpusStore,
    state_json: String,
    snapshot_versions: Vec<u64>,
}

fn campaign(seed: u64) -> Campaign {
    let corpus = generate_synthetic_corpus(&SyntheticCorpusSpec::shipped().with_seed(seed)).unwrap();
    let t0 = corpus.spec.end;
    let mut store = CorpusStore::in_memory();
    store.ingest_examples(corpus.new_examples(), t0).unwrap();
    let team = SimulatedAnnotator::new("team", 0.0, seed);
    for e in corpus.examples.iter().take(400) {
        store.append_annotation(team.judge(&e.id, &corpus.gold[&e.id], t0)).unwrap();
        store.resolve(&e.id).unwrap();
    }
    let annotators: Vec<SimulatedAnnotator> =
        ["ann-a", "ann-b", "ann-c"].iter().enumerate().map(|(i, id)| SimulatedAnnotator::new(*id, 0.1, seed + i as u64)).collect();
    let config = CycleConfig {
        annotators: annotators.iter().map(|a| a.id.clone()).collect(),
        seed,
        ..CycleConfig::default()
    };
    let trainer = MnbTrainer::default();
    let mut engine = CycleEngine::new(config, &trainer).unwrap();
    let mut snapshot_versions = Vec::new();
    for week in 1..=3u32 {
        let now = t0 + chrono::Duration::days(7 * i64::from(week));
        let plan = engine.run_cycle(&mut store, 1, week, now).unwrap();
        snapshot_versions.push(plan.snapshot_version.unwrap());
        let slices: Vec<_> = engine.open_slices().into_iter().cloned().collect();
        for slice in slices {
            let who = annotators.iter().find(|a| a.id == slice.annotator_id).unwrap();
            who.annotate_slice(&mut store, &slice, |id| corpus.gold.get(id).cloned(), now).unwrap();
        }
    }
    Campaign { state_json: serde_json::to_string(engine.state()).unwrap(), store, snapshot_versions }
}

fn balancing_and_snapshots() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5050);
    let mut bad = 0;
    for i in 0..BALANCE_PAIRS {
        let (np, nn) = (rng.gen_range(1..400), rng.gen_range(1..400));
        let pos: Vec<String> = (0..np).map(|j| format!("p{j}")).collect();
        let neg: Vec<String> = (0..nn).map(|j| format!("n{j}")).collect();
        let out = balance_5050(&pos, &neg, i as u64).unwrap();
        let k = np.min(nn);
        let (p_out, n_out) = out.split_at(out.len() / 2);
        let unique = out.iter().collect::<BTreeSet<_>>().len() == out.len();
        let minority: &[String] = if np <= nn { &pos } else { &neg };
        let kept: BTreeSet<&String> = out.iter().collect();
        let minority_kept = minority.iter().all(|id| kept.contains(id));
        let halves = p_out.iter().all(|id| id.starts_with('p')) && n_out.iter().all(|id| id.starts_with('n'));
        if out.len() != 2 * k || !unique || !minority_kept || !halves {
            bad += 1;
        }
    }

    let c = campaign(11);
    let snaps = c.store.snapshots();
    let increasing = snaps.windows(2).all(|w| w[1].version > w[0].version);
    let supersets = snaps.windows(2).all(|w| {
        let older: BTreeSet<&String> = w[0].example_ids.iter().collect();
        w[1].example_ids.iter().filter(|id| older.contains(id)).count() == older.len()
    });
    let balanced = snaps.iter().all(|s| s.positives == s.negatives && s.example_ids.len() == s.positives + s.negatives);
    let sizes: Vec<usize> = snaps.iter().map(|s| s.example_ids.len()).collect();
    outcome(
        bad == 0 && increasing && supersets && balanced && c.snapshot_versions == [1, 2, 3],
        format!(
            "{BALANCE_PAIRS} size pairs, {bad} violations; cycle snapshot versions {:?}, sizes {sizes:?}, supersets {supersets}",
            c.snapshot_versions
        ),
    )
}

fn artifacts(seed: u64) -> BTreeMap<String, Vec<u8>> {
    let c = campaign(seed);
    let dir = tempfile::tempdir().unwrap();
    c.store.export(dir.path()).unwrap();
    let mut out = BTreeMap::new();
    for f in ["examples.jsonl", "annotations.jsonl", "labels.jsonl", "snapshots.jsonl"] {
        out.insert(f.to_string(), std::fs::read(dir.path().join(f)).unwrap());
    }
    out.insert("cycle_state.json".into(), c.state_json.into_bytes());
    let checked = loopsift_service::routes::checked_items(&c.store);
    let report = threshold_band_report(&checked).unwrap();
    out.insert("threshold.csv".into(), emit_report(&report, ReportFormat::Csv));
    out.insert("threshold.json".into(), emit_report(&report, ReportFormat::Json));
    out
}

fn determinism() -> Outcome {
    let (a, b) = (artifacts(21), artifacts(21));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let bytes: usize = a.values().map(Vec::len).sum();
    outcome(
        differing.is_empty() && a.len() == b.len(),
        format!("{} artifacts, {bytes} bytes, differing {differing:?}", a.len()),
    )
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("authorization", "Bearer acceptance")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn service_contract() -> Outcome {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(8).enable_all().build().unwrap();
    rt.block_on(async {
        let state = AppState::open(ServiceConfig::new("acceptance")).unwrap();
        let app = router(state.clone());
        let corpus = generate_synthetic_corpus(&SyntheticCorpusSpec::shipped()).unwrap();
        let (s, _) = call(&app, "POST", "/api/v1/ingest", serde_json::to_value(corpus.new_examples()).unwrap()).await;
        assert_eq!(s, StatusCode::OK);
        for e in corpus.examples.iter().take(400) {
            let g = &corpus.gold[&e.id];
            let body = json!({ "label": g.label, "toxic": g.toxic, "targets": g.targets, "annotator_id": "team" });
            let (s, _) = call(&app, "POST", &format!("/api/v1/items/{}/review", e.id), body).await;
            assert_eq!(s, StatusCode::OK);
        }
        call(&app, "POST", "/api/v1/retrain", json!({})).await;
        let st = state.clone();
        tokio::task::spawn_blocking(move || st.wait_for_retrain(Duration::from_secs(120))).await.unwrap();

        // queue order against an order computed straight from the store
        let mut served = Vec::new();
        let mut offset = 0;
        loop {
            let (_, page) = call(&app, "GET", &format!("/api/v1/queue?limit=1000&offset={offset}"), Value::Null).await;
            let items = page["items"].as_array().cloned().unwrap_or_default();
            if items.is_empty() {
                break;
            }
            offset += items.len();
            served.extend(items.iter().map(|i| i["example"]["id"].as_str().unwrap().to_string()));
        }
        let expected: Vec<String> = {
            let store = state.store();
            let mut rows: Vec<(f64, String)> = store
                .examples()
                .filter_map(|e| {
                    let s = store.label_state(&e.id);
                    match (s.weak_probability, s.strong_label) {
                        (Some(p), None) => Some((p, e.id.clone())),
                        _ => None,
                    }
                })
                .collect();
            rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
            rows.into_iter().map(|r| r.1).collect()
        };
        let queue_ok = !served.is_empty() && served == expected;

        // more reviews, then score concurrently while the next model trains
        for e in corpus.examples.iter().skip(400).take(2400) {
            let g = &corpus.gold[&e.id];
            let body = json!({ "label": g.label, "toxic": g.toxic, "targets": g.targets, "annotator_id": "team" });
            call(&app, "POST", &format!("/api/v1/items/{}/review", e.id), body).await;
        }
        let texts: Vec<ScoreInput> = corpus.examples[4000..4040]
            .iter()
            .map(|e| ScoreInput { text: e.text.clone(), language: e.language.clone() })
            .collect();
        let (s, started) = call(&app, "POST", "/api/v1/retrain", json!({ "force": true })).await;
        assert_eq!(s, StatusCode::ACCEPTED, "{started}");
        // each client keeps scoring until the retrain has finished, then once more
        let mut tasks = Vec::new();
        for _ in 0..CONCURRENT_REQUESTS {
            let (app, st) = (app.clone(), state.clone());
            let body = json!({ "items": texts });
            tasks.push(tokio::spawn(async move {
                let mut seen = Vec::new();
                loop {
                    let running = st.retrain_status().in_progress;
                    seen.push(call(&app, "POST", "/api/v1/score", body.clone()).await);
                    if !running {
                        return seen;
                    }
                }
            }));
        }
        let mut per_client = Vec::new();
        for t in tasks {
            per_client.push(t.await.unwrap());
        }
        let st = state.clone();
        tokio::task::spawn_blocking(move || st.wait_for_retrain(Duration::from_secs(120))).await.unwrap();
        let active = state.active_model().map(|m| m.entry.version.clone()).unwrap_or_default();

        let reference: BTreeMap<String, Vec<f64>> = ["mnb-1", "mnb-2"]
            .iter()
            .filter_map(|v| {
                let m = state.registry().get(v)?;
                Some((v.to_string(), m.scorer.score(&texts).unwrap()))
            })
            .collect();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let (mut inconsistent, mut regressed) = (0, 0);
        for replies in &per_client {
            let versions: Vec<String> =
                replies.iter().map(|(_, b)| b["model_version"].as_str().unwrap_or("?").to_string()).collect();
            // once a client sees the new model it never sees the old one again
            regressed += usize::from(versions.windows(2).any(|w| w[0] > w[1]));
            for ((status, body), version) in replies.iter().zip(versions) {
                let probs: Vec<f64> = serde_json::from_value(body["probabilities"].clone()).unwrap_or_default();
                let consistent = *status == StatusCode::OK && reference.get(&version).is_some_and(|r| *r == probs);
                inconsistent += usize::from(!consistent);
                *counts.entry(version).or_default() += 1;
            }
        }
        let finals_on_active = per_client.iter().all(|r| r.last().is_some_and(|(_, b)| b["model_version"] == active.as_str()));
        let swap_ok = per_client.len() == CONCURRENT_REQUESTS
            && inconsistent == 0
            && regressed == 0
            && finals_on_active
            && reference.len() == 2
            && counts.len() == 2;
        outcome(
            queue_ok && swap_ok,
            format!(
                "queue {} items in store order: {queue_ok}; {CONCURRENT_REQUESTS} clients scoring across the retrain, \
                 replies by version {counts:?}, {inconsistent} inconsistent, {regressed} regressed, active after {active}",
                served.len()
            ),
        )
    })
}
