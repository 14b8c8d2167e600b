use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::Label;

/// Probability band in hundredths, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandRange {
    pub lo: u32,
    pub hi: u32,
}

impl BandRange {
    const fn new(lo: u32, hi: u32) -> Self {
        BandRange { lo, hi }
    }

    pub fn contains(&self, cents: u32) -> bool {
        (self.lo..=self.hi).contains(&cents)
    }

    /// `1.00-0.90` style label, high end first.
    pub fn label(&self) -> String {
        format!("{:.2}-{:.2}", f64::from(self.hi) / 100.0, f64::from(self.lo) / 100.0)
    }
}

/// Reporting layout; the second and third bands overlap on purpose.
pub const REPORT_BANDS: [BandRange; 6] = [
    BandRange::new(90, 100),
    BandRange::new(85, 89),
    BandRange::new(80, 89),
    BandRange::new(70, 79),
    BandRange::new(60, 69),
    BandRange::new(50, 59),
];

/// Disjoint decomposition of the same range.
pub const DISJOINT_BANDS: [BandRange; 6] = [
    BandRange::new(90, 100),
    BandRange::new(85, 89),
    BandRange::new(80, 84),
    BandRange::new(70, 79),
    BandRange::new(60, 69),
    BandRange::new(50, 59),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub range: BandRange,
    pub total: usize,
    pub hs: usize,
    pub non_hs: usize,
    pub hs_pct: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBandReport {
    pub bands: Vec<Band>,
    pub disjoint_bands: Vec<Band>,
    pub recommended_threshold: f64,
    pub minimum_threshold: f64,
}

/// Truncates to 0.01 granularity: 0.899 lands in the 0.89 bucket.
pub fn to_cents(p: f64) -> u32 {
    ((p * 100.0 + 1e-9).floor() as u32).min(100)
}

fn pct(hs: usize, total: usize) -> u32 {
    if total == 0 {
        0
    } else {
        (100.0 * hs as f64 / total as f64).round() as u32
    }
}

fn count(range: BandRange, cents: &[(u32, bool)]) -> Band {
    let (mut total, mut hs) = (0, 0);
    for &(c, is_hs) in cents {
        if range.contains(c) {
            total += 1;
            hs += usize::from(is_hs);
        }
    }
    Band { range, total, hs, non_hs: total - hs, hs_pct: pct(hs, total) }
}

pub const RECOMMENDED_PCT: u32 = 90;
pub const MINIMUM_PCT: u32 = 80;

/// Bands positively classified, human-checked items by predicted probability.
///
/// The recommended threshold is the lower edge of the top-most band whose
/// HS% reaches 90. The minimum threshold is the lowest disjoint band edge at
/// which the cumulative HS% of everything at or above it still reaches 80.
/// Either falls back to 1.00 when no band qualifies.
pub fn threshold_band_report(checked: &[(f64, Label)]) -> Result<ThresholdBandReport, EvalError> {
    if checked.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if let Some((p, _)) = checked.iter().find(|(p, _)| !(0.5..=1.0).contains(p)) {
        return Err(EvalError::ProbabilityOutOfRange(*p));
    }
    let cents: Vec<(u32, bool)> = checked.iter().map(|(p, l)| (to_cents(*p), l.is_positive())).collect();
    let bands: Vec<Band> = REPORT_BANDS.iter().map(|r| count(*r, &cents)).collect();
    let disjoint_bands: Vec<Band> = DISJOINT_BANDS.iter().map(|r| count(*r, &cents)).collect();

    let recommended = disjoint_bands
        .iter()
        .find(|b| b.total > 0 && b.hs_pct >= RECOMMENDED_PCT)
        .map_or(100, |b| b.range.lo);
    let (mut cum_total, mut cum_hs, mut minimum) = (0, 0, 100);
    for b in &disjoint_bands {
        cum_total += b.total;
        cum_hs += b.hs;
        if cum_total > 0 && pct(cum_hs, cum_total) >= MINIMUM_PCT {
            minimum = b.range.lo;
        }
    }
    let recommended = recommended.max(minimum);
    Ok(ThresholdBandReport {
        bands,
        disjoint_bands,
        recommended_threshold: f64::from(recommended) / 100.0,
        minimum_threshold: f64::from(minimum) / 100.0,
    })
}
