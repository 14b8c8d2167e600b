//! Shared inputs for integration tests.

#![allow(dead_code)]

use loopsift_core::Label;

/// Reviewed predictions for the reference band table:
/// (probability, total, hate) per disjoint band.
pub const BAND_FIXTURE: [(f64, usize, usize); 6] = [
    (0.95, 3995, 3601),
    (0.87, 3952, 2946),
    (0.82, 3765, 2512),
    (0.75, 7952, 4197),
    (0.65, 7951, 3274),
    (0.55, 6207, 1897),
];

/// The table as printed: band, total, HS, nonHS, HS%.
pub const BAND_TABLE: [(&str, usize, usize, usize, u32); 6] = [
    ("1.00-0.90", 3995, 3601, 394, 90),
    ("0.89-0.85", 3952, 2946, 1006, 75),
    ("0.89-0.80", 7717, 5458, 2259, 71),
    ("0.79-0.70", 7952, 4197, 3755, 53),
    ("0.69-0.60", 7951, 3274, 4677, 41),
    ("0.59-0.50", 6207, 1897, 4310, 31),
];

pub fn band_fixture() -> Vec<(f64, Label)> {
    let mut out = Vec::new();
    for (p, total, hs) in BAND_FIXTURE {
        out.extend((0..total).map(|i| (p, Label::from_bool(i < hs))));
    }
    out
}
