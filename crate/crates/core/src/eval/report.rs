//! CSV, Markdown and JSON rendering of experiment reports.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::experiments::{DriftReport, IncrementalReport, ToxicPolicyReport, WeekOutcome};
use super::metrics::Metrics;
use super::threshold::ThresholdBandReport;
use crate::mnb::CvReport;
use crate::quality::{QcReport, ReliabilityReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?} (expected csv, markdown or json)")),
        }
    }
}

/// A report that renders as a fixed-column table.
pub trait Tabular: Serialize {
    fn headers(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;
}

fn score(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn metric_cells(m: &Metrics) -> [String; 3] {
    [score(m.precision), score(m.recall), score(m.weighted_f1)]
}

impl Tabular for ThresholdBandReport {
    fn headers(&self) -> Vec<&'static str> {
        vec!["HS Probability", "Total", "HS", "nonHS", "HS%"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.bands
            .iter()
            .map(|b| vec![b.range.label(), b.total.to_string(), b.hs.to_string(), b.non_hs.to_string(), b.hs_pct.to_string()])
            .collect()
    }
}

impl Tabular for IncrementalReport {
    fn headers(&self) -> Vec<&'static str> {
        vec!["Week", "Batch", "Train Size", "P", "R", "F1", "Best F1 Before"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![r.week.to_string(), r.batch_size.to_string(), r.train_size.to_string()];
                match &r.outcome {
                    WeekOutcome::Trained { metrics } => row.extend(metric_cells(metrics)),
                    WeekOutcome::NotTrained { .. } => row.extend(["OF", "OF", "OF"].map(String::from)),
                }
                row.push(r.best_before.map_or_else(|| "-".into(), score));
                row
            })
            .collect()
    }
}

impl Tabular for DriftReport {
    fn headers(&self) -> Vec<&'static str> {
        vec!["Train", "Test", "Train Size", "Test Size", "Eval P", "Eval R", "Eval F1", "Test P", "Test R", "Test F1", "Delta F1"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![r.train_slice.clone(), r.test_slice.clone(), r.train_size.to_string(), r.test_size.to_string()];
                row.extend(metric_cells(&r.eval));
                row.extend(metric_cells(&r.test));
                row.push(score(r.delta_f1));
                row
            })
            .collect()
    }
}

impl Tabular for ToxicPolicyReport {
    fn headers(&self) -> Vec<&'static str> {
        vec!["Policy", "Train Size", "Toxic", "Balanced", "P", "R", "F1"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let policy = serde_json::to_value(r.policy).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                let mut row = vec![policy, r.train_size.to_string(), r.toxic_in_train.to_string(), r.balanced_size.to_string()];
                row.extend(metric_cells(&r.metrics));
                row
            })
            .collect()
    }
}

impl Tabular for CvReport {
    fn headers(&self) -> Vec<&'static str> {
        vec!["Fold", "P", "R", "F1"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut rows: Vec<Vec<String>> = self
            .per_fold
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut row = vec![(i + 1).to_string()];
                row.extend(metric_cells(m));
                row
            })
            .collect();
        for (name, s) in [("mean", &self.mean), ("std", &self.std)] {
            rows.push(vec![name.into(), score(s.precision), score(s.recall), score(s.weighted_f1)]);
        }
        rows
    }
}

impl Tabular for ReliabilityReport {
    fn headers(&self) -> Vec<&'static str> {
        vec!["Alpha", "Items", "Annotators", "Pairable", "Degenerate"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            format!("{:.4}", self.alpha),
            self.n_items.to_string(),
            self.n_annotators.to_string(),
            self.n_pairable.to_string(),
            self.degenerate.to_string(),
        ]]
    }
}

impl Tabular for QcReport {
    fn headers(&self) -> Vec<&'static str> {
        vec!["Annotator A", "Annotator B", "Agreement", "Items"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.pairs
            .iter()
            .map(|p| vec![p.annotator_a.clone(), p.annotator_b.clone(), format!("{:.3}", p.agreement), p.n_items.to_string()])
            .collect()
    }
}

fn markdown(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", headers.join(" | "));
    let _ = writeln!(out, "|{}", headers.iter().map(|_| "---|").collect::<String>());
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| c.replace('|', "\\|")).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out
}

fn csv_bytes(headers: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    // writing into a Vec cannot fail
    w.write_record(headers).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Renders a report. Output depends only on the report value.
pub fn emit_report<R: Tabular>(report: &R, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv => csv_bytes(&report.headers(), &report.rows()),
        ReportFormat::Markdown => markdown(&report.headers(), &report.rows()).into_bytes(),
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("reports serialize");
            out.push(b'\n');
            out
        }
    }
}
