#[path = "../../core/tests/support/fixtures.rs"]
mod fixtures;

use std::path::Path;
use std::process::{Command, Stdio};

use loopsift_core::eval::{emit_report, threshold_band_report, ReportFormat, SyntheticCorpusSpec};
use loopsift_core::mnb::MnbTrainer;
use loopsift_core::quality::krippendorff_alpha;
use loopsift_core::scorer::LabeledInput;
use loopsift_core::{CorpusStore, FeatureConfig, MnbModel, ScoreInput};

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

/// In-process run with empty stdin.
fn run(args: &[&str]) -> Out {
    run_with_stdin(args, "")
}

fn run_with_stdin(args: &[&str], stdin: &str) -> Out {
    let (mut input, mut stdout, mut stderr) = (stdin.as_bytes(), Vec::new(), Vec::new());
    let mut io = loopsift_cli::Io { stdin: &mut input, stdout: &mut stdout, stderr: &mut stderr };
    let argv = std::iter::once("loopsift").chain(args.iter().copied());
    let code = loopsift_cli::run(argv, &mut io);
    Out { code, stdout: String::from_utf8(stdout).unwrap(), stderr: String::from_utf8(stderr).unwrap() }
}

fn binary() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_loopsift"));
    cmd.env_remove("LOOPSIFT_CONFIG").env_remove("LOOPSIFT_TOKEN");
    cmd
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_spec(dir: &Path) -> std::path::PathBuf {
    let spec = SyntheticCorpusSpec { n_examples: 600, ..SyntheticCorpusSpec::shipped() };
    let path = dir.join("spec.json");
    std::fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    path
}

fn checked_file(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("reviews.jsonl");
    let lines: String = fixtures::band_fixture()
        .iter()
        .map(|(p, l)| format!("{{\"probability\":{p},\"label\":{}}}\n", l.as_u8()))
        .collect();
    std::fs::write(&path, lines).unwrap();
    path
}

#[test]
fn zero_ngram_max_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = binary().args(["train", "--corpus", s(dir.path()), "--ngram-max", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--ngram-max") && err.contains("Usage"), "{err}");

    let inverted = run(&["train", "--corpus", s(dir.path()), "--ngram-min", "3", "--ngram-max", "2"]);
    assert_eq!(inverted.code, 2, "{}", inverted.stderr);
    assert_eq!(run(&["threshold", "--no-such-flag"]).code, 2);
    assert_eq!(run(&["threshold", "--format", "xml"]).code, 2);
    assert_eq!(run(&["frobnicate"]).code, 2);
}

#[test]
fn threshold_reproduces_the_reference_bands() {
    let dir = tempfile::tempdir().unwrap();
    let checked = checked_file(dir.path());
    let out = run(&["threshold", "--checked", s(&checked), "--format", "csv"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let pct: Vec<u32> = out.stdout.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    let want: Vec<u32> = fixtures::BAND_TABLE.iter().map(|r| r.4).collect();
    assert_eq!(pct, want);

    let report = threshold_band_report(&fixtures::band_fixture()).unwrap();
    for format in [ReportFormat::Csv, ReportFormat::Markdown, ReportFormat::Json] {
        let name = format!("{format:?}").to_lowercase();
        let out = run(&["threshold", "--checked", s(&checked), "--format", &name]);
        assert_eq!(out.stdout.as_bytes(), emit_report(&report, format), "{name}");
    }

    // the same bytes through --out and through stdin
    let file = dir.path().join("bands.csv");
    let text = std::fs::read_to_string(&checked).unwrap();
    let piped = run_with_stdin(&["threshold", "--format", "csv", "--out", s(&file)], &text);
    assert_eq!(piped.code, 0);
    assert!(piped.stdout.is_empty());
    assert_eq!(std::fs::read(&file).unwrap(), emit_report(&report, ReportFormat::Csv));
}

#[test]
fn synth_then_train_writes_the_library_model() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let corpus = dir.path().join("corpus");
    let out = run(&["synth", "--spec", s(&spec), "--out", s(&corpus)]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(corpus.join("gold.jsonl").exists());

    let out = run(&["train", "--corpus", s(&corpus), "--folds", "5", "--max-features", "500", "--ngram-max", "2"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("Fold"), "{}", out.stdout);
    let written = std::fs::read_to_string(corpus.join("model.json")).unwrap();

    let store = CorpusStore::open(&corpus).unwrap();
    let data: Vec<LabeledInput> = store
        .examples()
        .filter_map(|e| {
            let label = store.strong_label(&e.id)?;
            Some(LabeledInput { input: ScoreInput { text: e.text.clone(), language: e.language.clone() }, label })
        })
        .collect();
    assert_eq!(data.len(), 600);
    let trainer = MnbTrainer { config: FeatureConfig { max_features: 500, ngram_max: 2, ..FeatureConfig::default() }, alpha: 1.0 };
    assert_eq!(written, trainer.fit(&data, "1").unwrap().to_json().unwrap());

    // predict reads stdin through the real binary
    let model = MnbModel::from_json(&written).unwrap();
    let e = store.examples().next().unwrap().clone();
    let mut child = binary()
        .args(["predict", "--model", s(&corpus.join("model.json"))])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let line = serde_json::json!({ "id": e.id, "text": e.text, "language": e.language }).to_string();
    std::io::Write::write_all(child.stdin.as_mut().unwrap(), format!("{line}\nplain words here\n").as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rows: Vec<serde_json::Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["example_id"], e.id.as_str());
    assert_eq!(rows[0]["probability"].as_f64().unwrap(), model.predict_text(&e.text, &e.language));
    assert_eq!(rows[1]["example_id"], "2");

    // a second synth into the same directory is refused
    assert_eq!(run(&["synth", "--spec", s(&spec), "--out", s(&corpus)]).code, 1);
}

#[test]
fn ingest_examples_and_reviews() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let examples = r#"{"id":"a","text":"erstes beispiel","source":"ON1","language":"DE","created_at":"2021-05-01T10:00:00Z"}
{"id":"b","text":"zweites beispiel","source":"ON2","language":"DE","created_at":"2021-05-02T10:00:00Z"}
"#;
    let out = run_with_stdin(&["ingest", "--store", s(&store), "--now", "2021-06-01T00:00:00Z"], examples);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let report: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(report["accepted"], 2);

    let again = run_with_stdin(&["ingest", "--store", s(&store)], examples);
    assert_eq!(again.code, 1);
    assert!(again.stdout.contains("DUPLICATE_ID"));

    let reviews = r#"{"example_id":"a","annotator_id":"r1","label":1,"targets":["NATIONALITY"]}
{"example_id":"b","annotator_id":"r1","label":0}
"#;
    let out = run_with_stdin(&["ingest", "--store", s(&store), "--reviews"], reviews);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let reopened = CorpusStore::open(&store).unwrap();
    assert_eq!(reopened.strong_label("a").unwrap().as_u8(), 1);
    assert_eq!(reopened.strong_label("b").unwrap().as_u8(), 0);

    let toxic_with_target = r#"{"example_id":"a","annotator_id":"r2","label":1,"toxic":true,"targets":["RELIGION"]}"#;
    assert_eq!(run_with_stdin(&["ingest", "--store", s(&store), "--reviews"], toxic_with_target).code, 1);
    let unknown = r#"{"example_id":"zz","annotator_id":"r2","label":0}"#;
    assert_eq!(run_with_stdin(&["ingest", "--store", s(&store), "--reviews"], unknown).code, 1);
}

#[test]
fn cycle_runs_three_weeks_with_simulated_reviewers() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let corpus = dir.path().join("corpus");
    assert_eq!(run(&["synth", "--spec", s(&spec), "--labeled", "200", "--out", s(&corpus)]).code, 0);
    let gold = corpus.join("gold.jsonl");
    let week = |n: u32| {
        let now = format!("2022-01-{:02}T00:00:00Z", 1 + 7 * n);
        run(&[
            "cycle", "--store", s(&corpus), "--week", &n.to_string(), "--now", &now, "--annotators", "a,b,c",
            "--slice-size", "40", "--qc-count", "10", "--simulate-gold", s(&gold), "--seed", "3",
            "--slices", s(&dir.path().join("slices")),
        ])
    };
    for n in 1..=3 {
        let out = week(n);
        assert_eq!(out.code, 0, "week {n}: {}", out.stderr);
        let plan: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(plan["snapshot_version"], n);
    }
    let store = CorpusStore::open(&corpus).unwrap();
    assert_eq!(store.snapshots().len(), 3);
    let slice = std::fs::read_to_string(dir.path().join("slices/a.jsonl")).unwrap();
    assert_eq!(slice.lines().count(), 50);

    // rerunning a finished week changes nothing
    let before = std::fs::read(corpus.join("labels.jsonl")).unwrap();
    let out = run(&[
        "cycle", "--store", s(&corpus), "--week", "3", "--now", "2022-01-22T00:00:00Z", "--annotators", "a,b,c",
        "--slice-size", "40", "--qc-count", "10", "--seed", "3",
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(std::fs::read(corpus.join("labels.jsonl")).unwrap(), before);
    assert_eq!(run(&["cycle", "--store", s(&corpus), "--week", "4"]).code, 2);
}

#[test]
fn evaluate_exits_one_when_a_check_fails() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = SyntheticCorpusSpec { n_examples: 600, ..SyntheticCorpusSpec::shipped() };
    let write = |name: &str, min_f1: f64| {
        let spec = serde_json::json!({
            "corpus": corpus,
            "experiments": [{ "kind": "incremental", "batch_sizes": [100, 300], "expect": { "min_final_f1": min_f1 } }],
        });
        let path = dir.path().join(name);
        std::fs::write(&path, spec.to_string()).unwrap();
        path
    };
    let easy = run(&["evaluate", "--spec", s(&write("easy.json", 0.3))]);
    assert_eq!(easy.code, 0, "{}", easy.stderr);
    assert!(easy.stdout.contains("# seed"), "{}", easy.stdout);
    assert!(easy.stderr.contains("PASS"));
    let hard = run(&["evaluate", "--spec", s(&write("hard.json", 1.01)), "--format", "json"]);
    assert_eq!(hard.code, 1);
    assert!(hard.stderr.contains("FAIL"));
    let outcome: serde_json::Value = serde_json::from_str(&hard.stdout).unwrap();
    assert_eq!(outcome["checks"][0]["passed"], false);
}

#[test]
fn drift_and_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let out = run(&["drift", "--spec", s(&spec), "--cutoff", "2021-10-01", "--format", "json"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let report: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 1);
    let out = run(&["drift", "--spec", s(&spec), "--train-language", "DE", "--test-language", "FR"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(run(&["drift", "--spec", s(&spec)]).code, 2);

    let table = "ann1,ann2,ann3\n0,0,\n1,1,1\n0,1,0\n,1,1\n";
    let out = run_with_stdin(&["alpha", "--headers", "--format", "json"], table);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let got: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    let lib = krippendorff_alpha(&[
        vec![Some(0), Some(0), None],
        vec![Some(1), Some(1), Some(1)],
        vec![Some(0), Some(1), Some(0)],
        vec![None, Some(1), Some(1)],
    ])
    .unwrap();
    assert_eq!(got["alpha"].as_f64().unwrap(), lib.alpha);
    assert_eq!(run_with_stdin(&["alpha"], "0,x\n").code, 1);
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let checked = checked_file(dir.path());
    let cfg = dir.path().join("loopsift.toml");
    std::fs::write(&cfg, "format = \"csv\"\nngram_max = 2\n").unwrap();
    let out = binary().env("LOOPSIFT_CONFIG", &cfg).args(["threshold", "--checked", s(&checked)]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("HS Probability,Total"));
    let md = run(&["--config", s(&cfg), "threshold", "--checked", s(&checked), "--format", "markdown"]);
    assert!(md.stdout.starts_with('|'), "{}", md.stdout);

    std::fs::write(&cfg, "ngram_min = 3\nngram_max = 2\n").unwrap();
    assert_eq!(run(&["--config", s(&cfg), "train", "--corpus", s(dir.path())]).code, 2);
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(run(&["--config", s(&cfg), "threshold", "--checked", s(&checked)]).code, 2);
}

#[test]
fn preprocess_prints_one_line_per_input_line() {
    let out = run_with_stdin(&["preprocess", "--language", "DE"], "@alice Hallo <b>Welt</b>!\n\nSTRASSE 😀\n");
    assert_eq!(out.code, 0, "{}", out.stderr);
    let lines: Vec<&str> = out.stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(!lines[0].contains("alice"));
    assert!(lines[2].contains("grinning_face"), "{}", lines[2]);
    assert_eq!(run(&["preprocess", "--profile", "heavy"]).code, 2);
}

#[test]
fn serve_without_a_token_is_a_usage_error() {
    let out = binary().args(["serve"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

const SUBCOMMANDS: [&str; 11] =
    ["ingest", "preprocess", "train", "predict", "evaluate", "cycle", "drift", "threshold", "alpha", "synth", "serve"];

fn all_help() -> String {
    let mut text = String::new();
    let top = binary().arg("--help").output().unwrap();
    assert_eq!(top.status.code(), Some(0));
    text.push_str(&String::from_utf8(top.stdout).unwrap());
    for cmd in SUBCOMMANDS {
        let out = binary().args([cmd, "--help"]).output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        text.push_str(&format!("\n===== {cmd} =====\n"));
        text.push_str(&String::from_utf8(out.stdout).unwrap());
    }
    text
}

#[test]
fn help_matches_snapshot() {
    let got = all_help();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots/help.txt");
    if std::env::var_os("UPDATE_SNAPSHOTS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).expect("run with UPDATE_SNAPSHOTS=1 to create the snapshot");
    assert_eq!(got, want);

    // every flag of every subcommand is documented
    use clap::CommandFactory;
    let cli = loopsift_cli::Cli::command();
    for sub in cli.get_subcommands() {
        for arg in sub.get_arguments() {
            if let Some(long) = arg.get_long() {
                assert!(got.contains(&format!("--{long}")), "--{long} of {} missing from help", sub.get_name());
            }
        }
    }
}
