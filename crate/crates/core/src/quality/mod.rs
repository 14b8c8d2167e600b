//! Inter-rater reliability and QC-overlap reporting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QualityError {
    #[error("need at least 2 items with at least 2 annotations each")]
    InsufficientData,
    #[error("QC answers missing: {0:?}")]
    MissingQcAnnotations(Vec<(String, String)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub alpha: f64,
    pub n_items: usize,
    pub n_annotators: usize,
    /// Number of pairable values (values in items with at least two of them).
    pub n_pairable: usize,
    /// Every pairable value is identical, so expected disagreement is zero.
    pub degenerate: bool,
}

/// Krippendorff's alpha for nominal data with missing entries.
///
/// `table[item][annotator]` holds a category code or `None`. Uses the
/// coincidence-matrix form `alpha = 1 - (n - 1) * sum_{c != k} o_ck / sum_{c != k} n_c n_k`.
pub fn krippendorff_alpha(table: &[Vec<Option<u32>>]) -> Result<ReliabilityReport, QualityError> {
    let mut coincidence: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut pairable_items = 0;
    let mut n_annotators = 0;
    for row in table {
        n_annotators = n_annotators.max(row.len());
        let values: Vec<u32> = row.iter().flatten().copied().collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        pairable_items += 1;
        let weight = 1.0 / (m - 1) as f64;
        for (i, &c) in values.iter().enumerate() {
            for (j, &k) in values.iter().enumerate() {
                if i != j {
                    *coincidence.entry((c, k)).or_insert(0.0) += weight;
                }
            }
        }
    }
    if pairable_items < 2 {
        return Err(QualityError::InsufficientData);
    }

    let mut marginals: BTreeMap<u32, f64> = BTreeMap::new();
    for (&(c, _), &o) in &coincidence {
        *marginals.entry(c).or_insert(0.0) += o;
    }
    let n: f64 = marginals.values().sum();
    let observed: f64 = coincidence
        .iter()
        .filter(|((c, k), _)| c != k)
        .map(|(_, o)| o)
        .sum();
    let mut expected = 0.0;
    for (&c, &nc) in &marginals {
        for (&k, &nk) in &marginals {
            if c != k {
                expected += nc * nk;
            }
        }
    }
    let n_pairable = n.round() as usize;
    let degenerate = expected == 0.0;
    let alpha = if degenerate { 1.0 } else { 1.0 - (n - 1.0) * observed / expected };
    Ok(ReliabilityReport {
        alpha,
        n_items: table.len(),
        n_annotators,
        n_pairable,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub annotator_a: String,
    pub annotator_b: String,
    pub agreement: f64,
    pub n_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub qc_items: usize,
    pub pairs: Vec<PairAgreement>,
    /// Share of QC items on which each annotator matched the majority answer.
    pub majority_agreement: BTreeMap<String, f64>,
    pub flagged: Vec<String>,
    pub agreement_floor: f64,
    pub reliability: Option<ReliabilityReport>,
}

pub const DEFAULT_AGREEMENT_FLOOR: f64 = 0.6;

/// Agreement on the QC items shared by every annotator's slice.
///
/// `answers[annotator][item]` is that annotator's binary label. Annotators
/// whose rate of matching the per-item majority (ties skipped) falls below
/// `floor` are flagged.
pub fn qc_overlap_report(
    answers: &BTreeMap<String, BTreeMap<String, Label>>,
    qc_ids: &BTreeSet<String>,
    floor: f64,
) -> Result<QcReport, QualityError> {
    let missing: Vec<(String, String)> = answers
        .iter()
        .flat_map(|(annotator, given)| {
            qc_ids
                .iter()
                .filter(|id| !given.contains_key(*id))
                .map(move |id| (annotator.clone(), id.clone()))
        })
        .collect();
    if !missing.is_empty() {
        return Err(QualityError::MissingQcAnnotations(missing));
    }

    let annotators: Vec<&String> = answers.keys().collect();
    let mut pairs = Vec::new();
    for (i, a) in annotators.iter().enumerate() {
        for b in &annotators[i + 1..] {
            let agree = qc_ids
                .iter()
                .filter(|id| answers[*a][*id] == answers[*b][*id])
                .count();
            pairs.push(PairAgreement {
                annotator_a: (*a).clone(),
                annotator_b: (*b).clone(),
                agreement: if qc_ids.is_empty() { 1.0 } else { agree as f64 / qc_ids.len() as f64 },
                n_items: qc_ids.len(),
            });
        }
    }

    let mut majority_agreement = BTreeMap::new();
    for a in &annotators {
        let (mut matched, mut counted) = (0usize, 0usize);
        for id in qc_ids {
            let pos = answers.values().filter(|given| given[id].is_positive()).count();
            let neg = answers.len() - pos;
            if pos == neg {
                continue;
            }
            counted += 1;
            if answers[*a][id] == Label::from_bool(pos > neg) {
                matched += 1;
            }
        }
        let rate = if counted == 0 { 1.0 } else { matched as f64 / counted as f64 };
        majority_agreement.insert((*a).clone(), rate);
    }
    let flagged = majority_agreement
        .iter()
        .filter(|(_, rate)| **rate < floor)
        .map(|(a, _)| a.clone())
        .collect();

    let table: Vec<Vec<Option<u32>>> = qc_ids
        .iter()
        .map(|id| annotators.iter().map(|a| Some(answers[*a][id].as_u8() as u32)).collect())
        .collect();
    let reliability = krippendorff_alpha(&table).ok();

    Ok(QcReport {
        qc_items: qc_ids.len(),
        pairs,
        majority_agreement,
        flagged,
        agreement_floor: floor,
        reliability,
    })
}

impl QcReport {
    /// Plain-text table for terminals and logs.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "QC items: {}", self.qc_items);
        let _ = writeln!(out, "{:<20} {:<20} {:>9}", "Annotator A", "Annotator B", "Agreement");
        for p in &self.pairs {
            let _ = writeln!(out, "{:<20} {:<20} {:>9.3}", p.annotator_a, p.annotator_b, p.agreement);
        }
        let _ = writeln!(out, "{:<20} {:>16} {:>8}", "Annotator", "Majority match", "Flagged");
        for (a, rate) in &self.majority_agreement {
            let flag = if self.flagged.contains(a) { "yes" } else { "" };
            let _ = writeln!(out, "{a:<20} {rate:>16.3} {flag:>8}");
        }
        if let Some(r) = &self.reliability {
            let _ = writeln!(out, "Krippendorff alpha (nominal): {:.4}", r.alpha);
        }
        out
    }
}

impl ReliabilityReport {
    pub fn to_table(&self) -> String {
        format!(
            "Krippendorff alpha (nominal): {:.4}{}\nitems: {}  annotators: {}  pairable values: {}\n",
            self.alpha,
            if self.degenerate { " (degenerate: no variation)" } else { "" },
            self.n_items,
            self.n_annotators,
            self.n_pairable
        )
    }
}
