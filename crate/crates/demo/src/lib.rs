//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes and returns plain strings; errors come back as a
//! message string, which the page shows as-is.

use chrono::{DateTime, NaiveDate, Utc};
use loopsift_core::eval::{
    emit_report, generate_synthetic_corpus, temporal_drift_experiment, threshold_band_report, DriftSpec, ReportFormat,
    SyntheticCorpusSpec,
};
use loopsift_core::mnb::MnbTrainer;
use loopsift_core::{preprocess, FeatureConfig, Label, Language, ProfileName};
use serde::Deserialize;
use wasm_bindgen::prelude::*;

/// Largest corpus the drift explorer will generate.
pub const MAX_EXAMPLES: usize = 10_000;

/// Tokens of `text` under the named profile, space separated.
#[wasm_bindgen]
pub fn preprocess_text(text: &str, profile: &str, language: &str) -> Result<String, String> {
    let profile: ProfileName = profile.parse().map_err(|_| format!("unknown profile {profile:?}"))?;
    let language: Language = language.parse().unwrap();
    Ok(preprocess(text, profile, &language).render())
}

#[derive(Debug, Deserialize)]
struct BandRow {
    probability: f64,
    total: usize,
    hs: usize,
}

/// Band report for rows `[{probability, total, hs}, ...]`: each row stands
/// for `total` checked items at that probability, `hs` of them confirmed.
/// `format` is csv, markdown or json.
#[wasm_bindgen]
pub fn threshold_bands(rows_json: &str, format: &str) -> Result<String, String> {
    let rows: Vec<BandRow> = serde_json::from_str(rows_json).map_err(|e| e.to_string())?;
    let format: ReportFormat = format.parse()?;
    let mut checked = Vec::new();
    for r in &rows {
        if r.hs > r.total {
            return Err(format!("row at {}: hs {} exceeds total {}", r.probability, r.hs, r.total));
        }
        checked.extend(std::iter::repeat_n((r.probability, Label::Positive), r.hs));
        checked.extend(std::iter::repeat_n((r.probability, Label::Negative), r.total - r.hs));
    }
    let report = threshold_band_report(&checked).map_err(|e| e.to_string())?;
    String::from_utf8(emit_report(&report, format)).map_err(|e| e.to_string())
}

fn parse_day(s: &str) -> Result<DateTime<Utc>, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
        .map_err(|_| format!("not a YYYY-MM-DD date: {s:?}"))
}

/// Generates a synthetic corpus whose positive vocabulary is partly replaced
/// after `drift_date`, trains on everything up to `cutoff` and tests on the
/// rest. Returns the drift report as JSON.
#[wasm_bindgen]
pub fn drift_explorer(
    n_examples: usize,
    seed: u64,
    replaced_fraction: f64,
    drift_date: &str,
    cutoff: &str,
    max_features: usize,
) -> Result<String, String> {
    if !(1..=MAX_EXAMPLES).contains(&n_examples) {
        return Err(format!("n_examples must lie in 1..={MAX_EXAMPLES}"));
    }
    let spec = SyntheticCorpusSpec {
        n_examples,
        drift: Some(DriftSpec { cutoff: parse_day(drift_date)?, replaced_fraction }),
        ..SyntheticCorpusSpec::shipped().with_seed(seed)
    };
    spec.validate().map_err(|e| e.to_string())?;
    let trainer = MnbTrainer { config: FeatureConfig { max_features, ..FeatureConfig::default() }, alpha: 1.0 };
    trainer.config.validate().map_err(|e| e.to_string())?;
    let corpus = generate_synthetic_corpus(&spec).map_err(|e| e.to_string())?;
    let report = temporal_drift_experiment(&corpus, &[parse_day(cutoff)?], &trainer, seed).map_err(|e| e.to_string())?;
    String::from_utf8(emit_report(&report, ReportFormat::Json)).map_err(|e| e.to_string())
}
