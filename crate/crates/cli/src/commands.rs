use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use loopsift_core::corpus::StoreError;
use loopsift_core::eval::{
    cross_slice_experiment, emit_report, generate_synthetic_corpus, run_experiments, temporal_drift_experiment,
    threshold_band_report, DriftReport, ExperimentReport, ExperimentSpec, ReportFormat, SliceFilter, SyntheticCorpusSpec,
};
use loopsift_core::hitl::{CycleConfig, CycleEngine, GoldLabel, RetrainPolicy, SimulatedAnnotator, TriggerMode};
use loopsift_core::mnb::{cross_validate, MnbTrainer};
use loopsift_core::quality::krippendorff_alpha;
use loopsift_core::scorer::LabeledInput;
use loopsift_core::textprep::full_tokens;
use loopsift_core::{
    preprocess, Annotation, AnnotationKind, CorpusStore, FeatureConfig, Label, Language, MnbModel, ProfileName,
    ScoreInput, Source, TargetGroup, Weighting,
};
use serde::{Deserialize, Serialize};

use crate::config::CliConfig;
use crate::*;

struct Ctx<'a, 'b> {
    cfg: CliConfig,
    out: Option<PathBuf>,
    io: &'a mut Io<'b>,
}

impl Ctx<'_, '_> {
    fn read_input(&mut self, spec: &str) -> Result<String, CliError> {
        if spec == "-" {
            let mut s = String::new();
            self.io.stdin.read_to_string(&mut s)?;
            Ok(s)
        } else {
            std::fs::read_to_string(spec).map_err(|e| domain(format!("reading {spec}: {e}")))
        }
    }

    /// The command's main output, to `--out` or stdout.
    fn emit(&mut self, bytes: &[u8]) -> Result<(), CliError> {
        match &self.out {
            Some(path) => std::fs::write(path, bytes).map_err(|e| domain(format!("writing {}: {e}", path.display()))),
            None => Ok(self.io.stdout.write_all(bytes)?),
        }
    }

    fn emit_json<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(domain)?;
        bytes.push(b'\n');
        self.emit(&bytes)
    }

    fn note(&mut self, msg: &str) {
        let _ = writeln!(self.io.stderr, "{msg}");
    }

    fn format(&self, args: &FormatArgs) -> Result<ReportFormat, CliError> {
        match args.format.as_ref().or(self.cfg.format.as_ref()) {
            Some(f) => f.parse().map_err(CliError::Usage),
            None => Ok(ReportFormat::Markdown),
        }
    }

    fn seed(&self, args: &SeedArgs) -> u64 {
        args.seed.or(self.cfg.seed).unwrap_or(1)
    }

    fn trainer(&self, a: &ModelArgs) -> Result<MnbTrainer, CliError> {
        let d = MnbTrainer::default();
        let pick = |flag: Option<u64>, key: Option<usize>, default: usize| flag.map(|v| v as usize).or(key).unwrap_or(default);
        let weighting = match a.weighting.as_deref() {
            Some(w) => parse_weighting(w)?,
            None => self.cfg.weighting.unwrap_or(d.config.weighting),
        };
        let config = FeatureConfig {
            max_features: pick(a.max_features, self.cfg.max_features, d.config.max_features),
            ngram_min: pick(a.ngram_min, self.cfg.ngram_min, d.config.ngram_min),
            ngram_max: pick(a.ngram_max, self.cfg.ngram_max, d.config.ngram_max),
            weighting,
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let alpha = a.alpha.or(self.cfg.alpha).unwrap_or(d.alpha);
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(CliError::Usage(format!("--alpha must be positive, got {alpha}")));
        }
        Ok(MnbTrainer { config, alpha })
    }
}

fn parse_weighting(s: &str) -> Result<Weighting, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "tfidf" => Ok(Weighting::Tfidf),
        "count" => Ok(Weighting::Count),
        _ => Err(CliError::Usage(format!("unknown weighting {s:?} (expected tfidf or count)"))),
    }
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, CliError> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
        .map_err(|_| CliError::Usage(format!("not an RFC 3339 time or YYYY-MM-DD date: {s:?}")))
}

fn now_or(flag: &Option<String>) -> Result<DateTime<Utc>, CliError> {
    flag.as_deref().map_or_else(|| Ok(Utc::now()), parse_time)
}

pub(crate) fn dispatch(cli: Cli, io: &mut Io<'_>) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => CliConfig::load(path).map_err(CliError::Usage)?,
        None => CliConfig::default(),
    };
    let mut ctx = Ctx { cfg, out: cli.out, io };
    match cli.command {
        Command::Ingest(a) => ingest(&mut ctx, a),
        Command::Preprocess(a) => preprocess_lines(&mut ctx, a),
        Command::Train(a) => train(&mut ctx, a),
        Command::Predict(a) => predict(&mut ctx, a),
        Command::Evaluate(a) => evaluate(&mut ctx, a),
        Command::Cycle(a) => cycle(&mut ctx, a),
        Command::Drift(a) => drift(&mut ctx, a),
        Command::Threshold(a) => threshold(&mut ctx, a),
        Command::Alpha(a) => alpha(&mut ctx, a),
        Command::Synth(a) => synth(&mut ctx, a),
        Command::Serve(a) => serve(&mut ctx, a),
    }
}

/// One human review as accepted by `ingest --reviews`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewLine {
    example_id: String,
    annotator_id: String,
    label: Label,
    #[serde(default)]
    toxic: bool,
    #[serde(default)]
    targets: BTreeSet<TargetGroup>,
    #[serde(default)]
    created_at: Option<String>,
}

#[derive(Serialize)]
struct ReviewReport {
    annotations: usize,
    strong_labels: usize,
    unresolved_ties: Vec<String>,
}

fn ingest(ctx: &mut Ctx, a: IngestArgs) -> Result<(), CliError> {
    let now = now_or(&a.now)?;
    let text = ctx.read_input(&a.input)?;
    let mut store = CorpusStore::open(&a.store).map_err(domain)?;
    if !a.reviews {
        let batch = loopsift_service::routes::parse_examples(text.as_bytes()).map_err(|e| domain(e.body.message))?;
        let n = batch.len();
        let report = store.ingest_examples(batch, now).map_err(domain)?;
        ctx.emit_json(&report)?;
        if n > 0 && report.accepted == 0 {
            return Err(domain("every example was rejected"));
        }
        return Ok(());
    }
    let mut touched = BTreeSet::new();
    let mut annotations = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: ReviewLine = serde_json::from_str(line).map_err(|e| domain(format!("line {}: {e}", i + 1)))?;
        let created_at = match &r.created_at {
            Some(t) => parse_time(t).map_err(|e| domain(format!("line {}: {e}", i + 1)))?,
            None => now,
        };
        let ann = Annotation {
            example_id: r.example_id.clone(),
            annotator_id: r.annotator_id,
            label: r.label,
            toxic: r.toxic,
            targets: r.targets,
            kind: AnnotationKind::Strong,
            created_at,
        };
        store.append_annotation(ann).map_err(|e| domain(format!("line {}: {e}", i + 1)))?;
        annotations += 1;
        touched.insert(r.example_id);
    }
    let mut report = ReviewReport { annotations, strong_labels: 0, unresolved_ties: Vec::new() };
    for id in touched {
        match store.resolve(&id) {
            Ok(state) if state.strong_label.is_some() => report.strong_labels += 1,
            Ok(_) => {}
            Err(StoreError::Resolve(_)) => report.unresolved_ties.push(id),
            Err(e) => return Err(domain(e)),
        }
    }
    ctx.emit_json(&report)
}

fn preprocess_lines(ctx: &mut Ctx, a: PreprocessArgs) -> Result<(), CliError> {
    let profile: ProfileName = match a.profile.as_ref().or(ctx.cfg.profile.as_ref()) {
        Some(p) => p.parse().map_err(|_| CliError::Usage(format!("unknown profile {p:?} (expected full or minimal)")))?,
        None => ProfileName::Full,
    };
    let language: Language = a.language.parse().unwrap();
    let text = ctx.read_input(&a.input)?;
    let mut out = String::new();
    for line in text.lines() {
        out.push_str(&preprocess(line, profile, &language).render());
        out.push('\n');
    }
    ctx.emit(out.as_bytes())
}

/// Strong-labeled examples of a store, in ingestion order.
fn labeled_inputs(store: &CorpusStore) -> Vec<LabeledInput> {
    store
        .examples()
        .filter_map(|e| {
            store.strong_label(&e.id).map(|label| LabeledInput {
                input: ScoreInput { text: e.text.clone(), language: e.language.clone() },
                label,
            })
        })
        .collect()
}

fn train(ctx: &mut Ctx, a: TrainArgs) -> Result<(), CliError> {
    let trainer = ctx.trainer(&a.model_args)?;
    let format = ctx.format(&a.format)?;
    let seed = ctx.seed(&a.seed);
    let folds = a.folds.map(|k| k as usize).or(ctx.cfg.folds).unwrap_or(10);
    if !a.corpus.is_dir() {
        return Err(domain(format!("no store at {}", a.corpus.display())));
    }
    let store = CorpusStore::open(&a.corpus).map_err(domain)?;
    let data = labeled_inputs(&store);
    let docs: Vec<Vec<String>> = data.iter().map(|d| full_tokens(&d.input.text, &d.input.language)).collect();
    let labels: Vec<Label> = data.iter().map(|d| d.label).collect();
    let cv = cross_validate(&docs, &labels, &trainer.config, trainer.alpha, folds, seed).map_err(domain)?;
    let model = trainer.fit(&data, &a.model_version).map_err(domain)?;
    let path = a.model.unwrap_or_else(|| a.corpus.join("model.json"));
    std::fs::write(&path, model.to_json().map_err(domain)?).map_err(|e| domain(format!("writing {}: {e}", path.display())))?;
    ctx.note(&format!("trained on {} examples; model written to {}", data.len(), path.display()));
    ctx.emit(&emit_report(&cv, format))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictLine {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(default)]
    language: Option<Language>,
}

fn predict(ctx: &mut Ctx, a: PredictArgs) -> Result<(), CliError> {
    let raw = std::fs::read_to_string(&a.model).map_err(|e| domain(format!("reading {}: {e}", a.model.display())))?;
    let model = MnbModel::from_json(&raw).map_err(domain)?;
    let default_language: Language = a.language.parse().unwrap();
    let text = ctx.read_input(&a.input)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = if line.trim_start().starts_with('{') {
            serde_json::from_str(line).map_err(|e| domain(format!("line {}: {e}", i + 1)))?
        } else {
            PredictLine { id: None, text: line.to_string(), language: None }
        };
        let id = item.id.unwrap_or_else(|| (i + 1).to_string());
        let language = item.language.unwrap_or_else(|| default_language.clone());
        let p = model.predict(&id, &full_tokens(&item.text, &language));
        serde_json::to_writer(&mut out, &p).map_err(domain)?;
        out.push(b'\n');
    }
    ctx.emit(&out)
}

fn evaluate(ctx: &mut Ctx, a: EvaluateArgs) -> Result<(), CliError> {
    let format = ctx.format(&a.format)?;
    let raw = std::fs::read_to_string(&a.spec).map_err(|e| domain(format!("reading {}: {e}", a.spec.display())))?;
    let mut spec: ExperimentSpec = serde_json::from_str(&raw).map_err(|e| domain(format!("{}: {e}", a.spec.display())))?;
    if let Some(seed) = a.seed.or(ctx.cfg.seed) {
        spec.seeds = vec![seed];
    }
    let outcome = run_experiments(&spec).map_err(domain)?;
    if format == ReportFormat::Json {
        ctx.emit_json(&outcome)?;
    } else {
        let mut out = Vec::new();
        for run in &outcome.runs {
            for report in &run.reports {
                let (name, body) = match report {
                    ExperimentReport::Incremental(r) => ("incremental", emit_report(r, format)),
                    ExperimentReport::Drift(r) => ("drift", emit_report(r, format)),
                    ExperimentReport::ToxicPolicy(r) => ("toxic_policy", emit_report(r, format)),
                };
                writeln!(out, "# seed {} {name}", run.seed)?;
                out.extend_from_slice(&body);
                out.push(b'\n');
            }
        }
        ctx.emit(&out)?;
    }
    for c in &outcome.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        ctx.note(&format!("{tag} {}: {}", c.name, c.detail));
    }
    let failed = outcome.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(domain(format!("{failed} check(s) failed")));
    }
    Ok(())
}

#[derive(Serialize)]
struct SliceLine<'a> {
    id: &'a str,
    text: &'a str,
    language: &'a Language,
    qc: bool,
    weak_probability: Option<f64>,
}

/// Gold file as written by `synth`.
#[derive(Serialize, Deserialize)]
struct GoldLine {
    id: String,
    #[serde(flatten)]
    gold: GoldLabel,
}

fn read_gold(path: &Path) -> Result<BTreeMap<String, GoldLabel>, CliError> {
    let raw = std::fs::read_to_string(path).map_err(|e| domain(format!("reading {}: {e}", path.display())))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<GoldLine>(l)
                .map(|g| (g.id, g.gold))
                .map_err(|e| domain(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn cycle(ctx: &mut Ctx, a: CycleArgs) -> Result<(), CliError> {
    let trainer = ctx.trainer(&a.model_args)?;
    let seed = ctx.seed(&a.seed);
    let now = now_or(&a.now)?;
    let annotators = if a.annotators.is_empty() { ctx.cfg.annotators.clone().unwrap_or_default() } else { a.annotators.clone() };
    if annotators.is_empty() {
        return Err(CliError::Usage("--annotators needs at least one id".into()));
    }
    if !(0.0..=1.0).contains(&a.noise) {
        return Err(CliError::Usage("--noise must lie in [0, 1]".into()));
    }
    let d = CycleConfig::default();
    let policy = RetrainPolicy {
        period_secs: a.retrain_period.or(ctx.cfg.retrain_period).map_or(d.policy.period_secs, |days| days * 86_400),
        volume: a.retrain_volume.map(|v| v as usize).or(ctx.cfg.retrain_volume).unwrap_or(d.policy.volume),
        mode: TriggerMode::Either,
    };
    let config = CycleConfig {
        annotators: annotators.clone(),
        slice_size: a.slice_size.map(|v| v as usize).or(ctx.cfg.slice_size).unwrap_or(d.slice_size),
        qc_count: a.qc_count.map(|v| v as usize).or(ctx.cfg.qc_count).unwrap_or(d.qc_count),
        policy,
        seed,
        ..d
    };
    let mut store = CorpusStore::open(&a.store).map_err(domain)?;
    let state = a.state.clone().unwrap_or_else(|| a.store.join("cycle.json"));
    let mut engine = CycleEngine::with_state_file(config, &trainer, &state).map_err(domain)?;
    let plan = engine.run_cycle(&mut store, a.wave, a.week, now).map_err(domain)?;
    let slices: Vec<_> = engine.open_slices().into_iter().cloned().collect();

    if let Some(dir) = &a.slices {
        std::fs::create_dir_all(dir)?;
        for slice in &slices {
            let mut buf = Vec::new();
            for id in slice.all_ids() {
                let Some(e) = store.example(id) else { continue };
                let line = SliceLine {
                    id,
                    text: &e.text,
                    language: &e.language,
                    qc: slice.qc_ids.contains(id),
                    weak_probability: store.label_state(id).weak_probability,
                };
                serde_json::to_writer(&mut buf, &line).map_err(domain)?;
                buf.push(b'\n');
            }
            std::fs::write(dir.join(format!("{}.jsonl", slice.annotator_id)), buf)?;
        }
    }
    if let Some(path) = &a.simulate_gold {
        let gold = read_gold(path)?;
        for slice in &slices {
            let i = annotators.iter().position(|id| *id == slice.annotator_id).unwrap_or(0);
            let who = SimulatedAnnotator::new(slice.annotator_id.clone(), a.noise, seed + i as u64);
            who.annotate_slice(&mut store, slice, |id| gold.get(id).cloned(), now).map_err(domain)?;
        }
    }
    ctx.emit_json(&plan)
}

fn filter(source: &Option<String>, language: &Option<String>) -> SliceFilter {
    SliceFilter {
        source: source.as_deref().map(|s| s.parse::<Source>().unwrap()),
        language: language.as_deref().map(|l| l.parse::<Language>().unwrap()),
        ..SliceFilter::default()
    }
}

fn corpus_spec(path: &Option<PathBuf>, seed: Option<u64>) -> Result<SyntheticCorpusSpec, CliError> {
    let spec = match path {
        Some(p) => {
            let raw = std::fs::read_to_string(p).map_err(|e| domain(format!("reading {}: {e}", p.display())))?;
            serde_json::from_str(&raw).map_err(|e| domain(format!("{}: {e}", p.display())))?
        }
        None => SyntheticCorpusSpec::shipped(),
    };
    Ok(match seed {
        Some(s) => spec.with_seed(s),
        None => spec,
    })
}

fn drift(ctx: &mut Ctx, a: DriftArgs) -> Result<(), CliError> {
    let trainer = ctx.trainer(&a.model_args)?;
    let format = ctx.format(&a.format)?;
    let spec = corpus_spec(&a.spec, a.seed.seed.or(ctx.cfg.seed))?;
    let seed = spec.seed;
    let sliced = a.train_source.is_some() || a.train_language.is_some() || a.test_source.is_some() || a.test_language.is_some();
    let report = match (a.cutoff.is_empty(), sliced) {
        (false, false) => {
            let cutoffs = a.cutoff.iter().map(|c| parse_time(c)).collect::<Result<Vec<_>, _>>()?;
            let corpus = generate_synthetic_corpus(&spec).map_err(domain)?;
            temporal_drift_experiment(&corpus, &cutoffs, &trainer, seed).map_err(domain)?
        }
        (true, true) => {
            let corpus = generate_synthetic_corpus(&spec).map_err(domain)?;
            let train = filter(&a.train_source, &a.train_language);
            let test = filter(&a.test_source, &a.test_language);
            DriftReport { rows: vec![cross_slice_experiment(&corpus, &train, &test, &trainer, seed).map_err(domain)?] }
        }
        _ => return Err(CliError::Usage("give either --cutoff or --train-*/--test-* slice flags".into())),
    };
    ctx.emit(&emit_report(&report, format))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckedLine {
    probability: f64,
    label: Label,
}

fn threshold(ctx: &mut Ctx, a: ThresholdArgs) -> Result<(), CliError> {
    let format = ctx.format(&a.format)?;
    let checked: Vec<(f64, Label)> = match (&a.checked, &a.store) {
        (_, Some(dir)) => {
            let store = CorpusStore::open(dir).map_err(domain)?;
            loopsift_service::routes::checked_items(&store)
        }
        (input, None) => {
            let text = ctx.read_input(input.as_deref().unwrap_or("-"))?;
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    serde_json::from_str::<CheckedLine>(l)
                        .map(|c| (c.probability, c.label))
                        .map_err(|e| domain(format!("line {}: {e}", i + 1)))
                })
                .collect::<Result<_, _>>()?
        }
    };
    let report = threshold_band_report(&checked).map_err(domain)?;
    ctx.emit(&emit_report(&report, format))
}

fn alpha(ctx: &mut Ctx, a: AlphaArgs) -> Result<(), CliError> {
    let format = ctx.format(&a.format)?;
    let text = ctx.read_input(&a.table)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(a.headers).from_reader(text.as_bytes());
    let mut table = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(domain)?;
        let row = record
            .iter()
            .map(|cell| {
                let cell = cell.trim();
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<u32>().map(Some).map_err(|_| domain(format!("row {}: {cell:?} is not a category code", i + 1)))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        table.push(row);
    }
    let report = krippendorff_alpha(&table).map_err(domain)?;
    ctx.emit(&emit_report(&report, format))
}

fn synth(ctx: &mut Ctx, a: SynthArgs) -> Result<(), CliError> {
    let Some(dir) = ctx.out.take() else {
        return Err(CliError::Usage("synth needs --out <dir>".into()));
    };
    let spec = corpus_spec(&a.spec, a.seed.seed.or(ctx.cfg.seed))?;
    if dir.join("examples.jsonl").exists() {
        return Err(domain(format!("{} already holds a store", dir.display())));
    }
    let corpus = generate_synthetic_corpus(&spec).map_err(domain)?;
    let now = corpus.spec.end;
    let mut store = CorpusStore::in_memory();
    store.ingest_examples(corpus.new_examples(), now).map_err(domain)?;
    let annotator = corpus.annotator();
    let n_labeled = a.labeled.unwrap_or(corpus.examples.len()).min(corpus.examples.len());
    for e in &corpus.examples[..n_labeled] {
        store.append_annotation(annotator.judge(&e.id, &corpus.gold[&e.id], now)).map_err(domain)?;
        store.resolve(&e.id).map_err(domain)?;
    }
    store.export(&dir).map_err(domain)?;

    let mut gold = Vec::new();
    for e in &corpus.examples {
        serde_json::to_writer(&mut gold, &GoldLine { id: e.id.clone(), gold: corpus.gold[&e.id].clone() }).map_err(domain)?;
        gold.push(b'\n');
    }
    std::fs::write(dir.join("gold.jsonl"), gold)?;
    std::fs::write(dir.join("spec.json"), serde_json::to_vec_pretty(&corpus.spec).map_err(domain)?)?;
    ctx.note(&format!("{} examples, {n_labeled} labeled, written to {}", corpus.examples.len(), dir.display()));
    Ok(())
}

fn serve(ctx: &mut Ctx, a: ServeArgs) -> Result<(), CliError> {
    let mut config = match (ctx.cfg.service.clone(), &a.token) {
        (Some(c), _) => c,
        (None, Some(token)) => loopsift_service::ServiceConfig::new(token.clone()),
        (None, None) => return Err(CliError::Usage("serve needs --token or a [service] config table".into())),
    };
    if let Some(t) = a.token {
        config.token = t;
    }
    if let Some(l) = a.listen {
        config.listen = l;
    }
    if let Some(d) = a.data_dir {
        config.data_dir = Some(d);
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    loopsift_service::init_tracing();
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(loopsift_service::serve(config)).map_err(domain)
}
