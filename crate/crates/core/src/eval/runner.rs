//! Runs experiments described in a JSON spec and checks the expectations
//! embedded in it.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::experiments::{
    cross_slice_experiment, incremental_experiment, temporal_drift_experiment, toxic_policy_report, DriftReport,
    IncrementalReport, SliceFilter, ToxicPolicy, ToxicPolicyReport,
};
use super::synth::{generate_synthetic_corpus, SyntheticCorpusSpec};
use super::EvalError;
use crate::mnb::MnbTrainer;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncrementalExpect {
    pub min_final_f1: Option<f64>,
    /// Allowed drop of weekly F1 against the previous trained week.
    pub monotone_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftExpect {
    /// Mean delta F1 across rows and seeds must be below this.
    pub max_mean_delta: Option<f64>,
    /// Every row's |delta F1| must be at most this.
    pub max_abs_delta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToxicExpect {
    /// TOXIC_AS_NEGATIVE must score below both other policies.
    #[serde(default)]
    pub negative_lowest: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Incremental {
        batch_sizes: Vec<usize>,
        #[serde(default)]
        expect: IncrementalExpect,
    },
    TemporalDrift {
        cutoffs: Vec<DateTime<Utc>>,
        #[serde(default)]
        expect: DriftExpect,
    },
    CrossSlice {
        train: SliceFilter,
        test: SliceFilter,
        #[serde(default)]
        expect: DriftExpect,
    },
    ToxicPolicy {
        #[serde(default)]
        expect: ToxicExpect,
    },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Incremental { .. } => "incremental",
            Experiment::TemporalDrift { .. } => "temporal_drift",
            Experiment::CrossSlice { .. } => "cross_slice",
            Experiment::ToxicPolicy { .. } => "toxic_policy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Defaults to the bundled spec.
    #[serde(default)]
    pub corpus: Option<SyntheticCorpusSpec>,
    /// Each seed regenerates the corpus and reruns every experiment.
    /// Defaults to the corpus seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub model: MnbTrainer,
    pub experiments: Vec<Experiment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "report", rename_all = "snake_case")]
pub enum ExperimentReport {
    Incremental(IncrementalReport),
    Drift(DriftReport),
    ToxicPolicy(ToxicPolicyReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub reports: Vec<ExperimentReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub experiment: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub runs: Vec<SeedRun>,
    pub checks: Vec<Check>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// True when no trained week drops more than `tolerance` below the
/// previous trained week.
pub fn non_decreasing_within(series: &[Option<f64>], tolerance: f64) -> bool {
    let trained: Vec<f64> = series.iter().flatten().copied().collect();
    trained.windows(2).all(|w| w[1] >= w[0] - tolerance)
}

pub fn run_experiments(spec: &ExperimentSpec) -> Result<RunOutcome, EvalError> {
    let base = spec.corpus.clone().unwrap_or_else(SyntheticCorpusSpec::shipped);
    let seeds = if spec.seeds.is_empty() { vec![base.seed] } else { spec.seeds.clone() };
    let trainer = spec.model;

    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let corpus = generate_synthetic_corpus(&base.clone().with_seed(seed))?;
        let mut reports = Vec::with_capacity(spec.experiments.len());
        for exp in &spec.experiments {
            reports.push(match exp {
                Experiment::Incremental { batch_sizes, .. } => {
                    ExperimentReport::Incremental(incremental_experiment(&corpus, batch_sizes, &trainer, seed)?)
                }
                Experiment::TemporalDrift { cutoffs, .. } => {
                    ExperimentReport::Drift(temporal_drift_experiment(&corpus, cutoffs, &trainer, seed)?)
                }
                Experiment::CrossSlice { train, test, .. } => ExperimentReport::Drift(DriftReport {
                    rows: vec![cross_slice_experiment(&corpus, train, test, &trainer, seed)?],
                }),
                Experiment::ToxicPolicy { .. } => ExperimentReport::ToxicPolicy(toxic_policy_report(&corpus, &trainer, seed)?),
            });
        }
        runs.push(SeedRun { seed, reports });
    }

    let mut checks = Vec::new();
    for (i, exp) in spec.experiments.iter().enumerate() {
        let reports: Vec<(u64, &ExperimentReport)> = runs.iter().map(|r| (r.seed, &r.reports[i])).collect();
        match exp {
            Experiment::Incremental { expect, .. } => {
                for (seed, report) in &reports {
                    let ExperimentReport::Incremental(r) = report else { unreachable!() };
                    let series = r.f1_series();
                    if let Some(min) = expect.min_final_f1 {
                        let last = series.last().copied().flatten();
                        checks.push(Check {
                            experiment: i,
                            name: "min_final_f1".into(),
                            passed: last.is_some_and(|f| f >= min),
                            detail: format!("seed {seed}: final F1 {last:?} vs >= {min}"),
                        });
                    }
                    if let Some(tol) = expect.monotone_tolerance {
                        checks.push(Check {
                            experiment: i,
                            name: "monotone_tolerance".into(),
                            passed: non_decreasing_within(&series, tol),
                            detail: format!("seed {seed}: F1 series {series:?}, tolerance {tol}"),
                        });
                    }
                }
            }
            Experiment::TemporalDrift { expect, .. } | Experiment::CrossSlice { expect, .. } => {
                let deltas: Vec<f64> = reports
                    .iter()
                    .flat_map(|(_, r)| match r {
                        ExperimentReport::Drift(d) => d.rows.iter().map(|row| row.delta_f1).collect::<Vec<_>>(),
                        _ => unreachable!(),
                    })
                    .collect();
                let mean = deltas.iter().sum::<f64>() / deltas.len().max(1) as f64;
                if let Some(max) = expect.max_mean_delta {
                    checks.push(Check {
                        experiment: i,
                        name: "max_mean_delta".into(),
                        passed: mean < max,
                        detail: format!("mean delta F1 {mean:.4} over {} rows vs < {max}", deltas.len()),
                    });
                }
                if let Some(max) = expect.max_abs_delta {
                    let worst = deltas.iter().fold(0.0f64, |a, d| a.max(d.abs()));
                    checks.push(Check {
                        experiment: i,
                        name: "max_abs_delta".into(),
                        passed: worst <= max,
                        detail: format!("largest |delta F1| {worst:.4} vs <= {max}"),
                    });
                }
            }
            Experiment::ToxicPolicy { expect } => {
                if expect.negative_lowest {
                    for (seed, report) in &reports {
                        let ExperimentReport::ToxicPolicy(r) = report else { unreachable!() };
                        let f1 = |p: ToxicPolicy| r.rows.iter().find(|row| row.policy == p).map(|row| row.metrics.weighted_f1);
                        let (pos, drop, neg) = (
                            f1(ToxicPolicy::ToxicAsPositive).unwrap_or(f64::NAN),
                            f1(ToxicPolicy::DropToxic).unwrap_or(f64::NAN),
                            f1(ToxicPolicy::ToxicAsNegative).unwrap_or(f64::NAN),
                        );
                        checks.push(Check {
                            experiment: i,
                            name: "negative_lowest".into(),
                            passed: neg < pos.min(drop),
                            detail: format!("seed {seed}: positive {pos:.4}, drop {drop:.4}, negative {neg:.4}"),
                        });
                    }
                }
            }
        }
    }
    Ok(RunOutcome { runs, checks })
}
