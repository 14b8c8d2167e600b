//! `loopsift` command line. Every subcommand is a thin wrapper over a
//! library call; [`run`] takes argv and the three standard streams so tests
//! can drive it without spawning a process.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};

pub use config::CliConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "loopsift", version, about = "Human-in-the-loop hate speech classification pipeline")]
pub struct Cli {
    /// TOML config file; keys mirror the long flag names
    #[arg(long, global = true, env = "LOOPSIFT_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Write the command's output here instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add examples (JSON array or JSONL) or reviews to a store directory
    Ingest(IngestArgs),
    /// Print the token stream of each input line
    Preprocess(PreprocessArgs),
    /// Train a model on the strong labels of a store and print a cross-validation report
    Train(TrainArgs),
    /// Score texts with a saved model, one JSON line per input line
    Predict(PredictArgs),
    /// Run an experiment spec; exits 1 when an embedded check fails
    Evaluate(EvaluateArgs),
    /// Run one week of the review cycle against a store
    Cycle(CycleArgs),
    /// Train on one slice of a synthetic corpus and test on another
    Drift(DriftArgs),
    /// Probability band report over checked items
    Threshold(ThresholdArgs),
    /// Krippendorff's alpha for a CSV reliability table
    Alpha(AlphaArgs),
    /// Generate a synthetic corpus as a store directory
    Synth(SynthArgs),
    /// Start the HTTP review service
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FormatArgs {
    /// Report format: csv, markdown or json [default: markdown]
    #[arg(long, value_name = "FORMAT")]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SeedArgs {
    /// Seed for every random choice [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Vocabulary size [default: 3000]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_features: Option<u64>,
    /// Shortest word n-gram [default: 1]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub ngram_min: Option<u64>,
    /// Longest word n-gram [default: 4]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub ngram_max: Option<u64>,
    /// tfidf or count [default: tfidf]
    #[arg(long)]
    pub weighting: Option<String>,
    /// Additive smoothing [default: 1.0]
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Store directory, created when missing
    #[arg(long)]
    pub store: PathBuf,
    /// Input file, `-` for stdin
    #[arg(long, default_value = "-")]
    pub input: String,
    /// Treat the input as review lines {example_id, annotator_id, label, toxic, targets}
    #[arg(long)]
    pub reviews: bool,
    /// Ingestion clock (RFC 3339) [default: now]
    #[arg(long)]
    pub now: Option<String>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// full or minimal [default: full]
    #[arg(long)]
    pub profile: Option<String>,
    /// Declared language of every line
    #[arg(long, default_value = "DE")]
    pub language: String,
    /// Input file, `-` for stdin
    #[arg(long, default_value = "-")]
    pub input: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Store directory with strong labels
    #[arg(long)]
    pub corpus: PathBuf,
    /// Where to write the model [default: <corpus>/model.json]
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Version string stored in the model
    #[arg(long, default_value = "1")]
    pub model_version: String,
    /// Cross-validation folds [default: 10]
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub folds: Option<u64>,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `train`
    #[arg(long)]
    pub model: PathBuf,
    /// JSON lines {id, text, language} or plain text lines; `-` for stdin
    #[arg(long, default_value = "-")]
    pub input: String,
    /// Language for lines that do not declare one
    #[arg(long, default_value = "DE")]
    pub language: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Experiment spec (JSON)
    #[arg(long)]
    pub spec: PathBuf,
    /// Run only this seed instead of the spec's list
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct CycleArgs {
    /// Store directory
    #[arg(long)]
    pub store: PathBuf,
    /// Cycle state file [default: <store>/cycle.json]
    #[arg(long)]
    pub state: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub wave: u32,
    #[arg(long)]
    pub week: u32,
    /// Cycle clock (RFC 3339) [default: now]
    #[arg(long)]
    pub now: Option<String>,
    /// Comma-separated annotator ids
    #[arg(long, value_delimiter = ',')]
    pub annotators: Vec<String>,
    /// Items per annotator [default: 500]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub slice_size: Option<u64>,
    /// Items shared by every annotator [default: 60]
    #[arg(long)]
    pub qc_count: Option<u64>,
    /// Days between retrains [default: 7]
    #[arg(long, value_parser = clap::value_parser!(i64).range(1..))]
    pub retrain_period: Option<i64>,
    /// Reviews that trigger a retrain [default: 1000]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub retrain_volume: Option<u64>,
    /// Write each open slice to <dir>/<annotator>.jsonl
    #[arg(long)]
    pub slices: Option<PathBuf>,
    /// Answer the open slices with simulated annotators reading this gold file
    #[arg(long)]
    pub simulate_gold: Option<PathBuf>,
    /// Label noise of the simulated annotators
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
}

#[derive(Debug, Args)]
pub struct DriftArgs {
    /// Synthetic corpus spec (JSON) [default: bundled spec]
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Temporal split date (RFC 3339 or YYYY-MM-DD); repeatable
    #[arg(long)]
    pub cutoff: Vec<String>,
    #[arg(long)]
    pub train_source: Option<String>,
    #[arg(long)]
    pub train_language: Option<String>,
    #[arg(long)]
    pub test_source: Option<String>,
    #[arg(long)]
    pub test_language: Option<String>,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub seed: SeedArgs,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// JSON lines {probability, label}; `-` for stdin
    #[arg(long, conflicts_with = "store")]
    pub checked: Option<String>,
    /// Use the reviewed, weak-labeled items of a store instead
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    /// CSV, one row per item and one column per annotator; empty cells are missing
    #[arg(long, default_value = "-")]
    pub table: String,
    /// Skip the first row
    #[arg(long)]
    pub headers: bool,
    #[command(flatten)]
    pub format: FormatArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus spec (JSON) [default: bundled spec]
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Annotate only the first N examples [default: all]
    #[arg(long)]
    pub labeled: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to listen on [default: 127.0.0.1:8080]
    #[arg(long)]
    pub listen: Option<String>,
    /// Bearer token
    #[arg(long, env = "LOOPSIFT_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    /// Data directory [default: in memory]
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

/// Errors that end a command with exit code 1, or 2 for `Usage`.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DOMAIN,
        }
    }
}

pub(crate) fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

/// Standard streams of one invocation.
pub struct Io<'a> {
    pub stdin: &'a mut dyn Read,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

pub fn run<I, T>(argv: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let mut text = e.render().to_string();
            if e.use_stderr() && !text.contains("Usage:") {
                text.push_str(&format!("\n{}\n", usage_for(&argv)));
            }
            let _ = if e.use_stderr() { io.stderr.write_all(text.as_bytes()) } else { io.stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match commands::dispatch(cli, io) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let prefix = if matches!(e, CliError::Usage(_)) { "usage error" } else { "error" };
            let _ = writeln!(io.stderr, "{prefix}: {e}");
            e.exit_code()
        }
    }
}

/// Usage line of the subcommand named in `argv`, or of the whole tool.
fn usage_for(argv: &[OsString]) -> String {
    let mut cmd = Cli::command();
    let name = argv.iter().skip(1).filter_map(|a| a.to_str()).find(|a| !a.starts_with('-'));
    if let Some(sub) = name.and_then(|n| cmd.find_subcommand_mut(n)) {
        let mut sub = sub.clone().bin_name(format!("loopsift {}", sub.get_name()));
        return sub.render_usage().to_string();
    }
    cmd.render_usage().to_string()
}
