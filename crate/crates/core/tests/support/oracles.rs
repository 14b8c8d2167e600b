//! Slow, direct reimplementations used to check the library.
//!
//! Nothing here calls into the crate under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

/// Classifier fitted with plain loops, dense vectors and probabilities
/// (no logarithms).
pub struct OracleNb {
    terms: Vec<String>,
    idf: Vec<f64>,
    theta: [Vec<f64>; 2],
    prior: [f64; 2],
    ngram: (usize, usize),
    tfidf: bool,
}

fn grams(doc: &[String], ngram: (usize, usize)) -> Vec<String> {
    let mut out = Vec::new();
    for n in ngram.0..=ngram.1 {
        if doc.len() < n {
            continue;
        }
        for start in 0..=doc.len() - n {
            out.push(doc[start..start + n].join(" "));
        }
    }
    out
}

impl OracleNb {
    pub fn fit(
        docs: &[Vec<String>],
        positive: &[bool],
        max_features: usize,
        ngram: (usize, usize),
        tfidf: bool,
        alpha: f64,
    ) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for d in docs {
            let unique: BTreeSet<String> = grams(d, ngram).into_iter().collect();
            for g in unique {
                *df.entry(g).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
        // selection sort: highest df first, then alphabetical
        for i in 0..ranked.len() {
            let mut best = i;
            for j in i + 1..ranked.len() {
                let (a, b) = (&ranked[j], &ranked[best]);
                if a.1 > b.1 || (a.1 == b.1 && a.0 < b.0) {
                    best = j;
                }
            }
            ranked.swap(i, best);
        }
        ranked.truncate(max_features);
        let n = docs.len() as f64;
        let terms: Vec<String> = ranked.iter().map(|r| r.0.clone()).collect();
        let idf: Vec<f64> = ranked.iter().map(|r| ((1.0 + n) / (1.0 + r.1 as f64)).ln() + 1.0).collect();
        let mut model = OracleNb {
            terms,
            idf,
            theta: [vec![], vec![]],
            prior: [0.0; 2],
            ngram,
            tfidf,
        };
        let v = model.terms.len();
        let mut sums = [vec![0.0; v], vec![0.0; v]];
        let mut counts = [0.0f64; 2];
        for (d, &pos) in docs.iter().zip(positive) {
            let c = usize::from(pos);
            counts[c] += 1.0;
            for (j, x) in model.features(d).into_iter().enumerate() {
                sums[c][j] += x;
            }
        }
        for c in 0..2 {
            let total: f64 = sums[c].iter().sum();
            model.theta[c] = sums[c].iter().map(|s| (s + alpha) / (total + alpha * v as f64)).collect();
            model.prior[c] = counts[c] / n;
        }
        model
    }

    pub fn features(&self, doc: &[String]) -> Vec<f64> {
        let mut x = vec![0.0; self.terms.len()];
        for g in grams(doc, self.ngram) {
            if let Some(j) = self.terms.iter().position(|t| *t == g) {
                x[j] += 1.0;
            }
        }
        if self.tfidf {
            for (xj, idf) in x.iter_mut().zip(&self.idf) {
                *xj *= idf;
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                x.iter_mut().for_each(|v| *v /= norm);
            }
        }
        x
    }

    pub fn posterior(&self, doc: &[String]) -> f64 {
        let x = self.features(doc);
        let joint: Vec<f64> = (0..2)
            .map(|c| {
                let mut p = self.prior[c];
                for (xj, t) in x.iter().zip(&self.theta[c]) {
                    p *= t.powf(*xj);
                }
                p
            })
            .collect();
        joint[1] / (joint[0] + joint[1])
    }
}

/// A small random corpus with both classes present.
pub struct RandomCorpus {
    pub docs: Vec<Vec<String>>,
    pub positive: Vec<bool>,
    pub queries: Vec<Vec<String>>,
    pub max_features: usize,
    pub ngram: (usize, usize),
    pub tfidf: bool,
    pub alpha: f64,
}

pub fn random_corpus(rng: &mut impl Rng) -> RandomCorpus {
    const WORDS: [&str; 7] = ["ab", "cd", "ef", "gh", "ij", "kl", "mn"];
    let doc = |rng: &mut dyn rand::RngCore| -> Vec<String> {
        let len = rng.gen_range(1..=8);
        (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect()
    };
    let n = rng.gen_range(2..=20);
    let docs: Vec<Vec<String>> = (0..n).map(|_| doc(rng)).collect();
    let mut positive: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    positive[0] = true;
    positive[1] = false;
    let lo = rng.gen_range(1..=3);
    let hi = rng.gen_range(lo..=4);
    RandomCorpus {
        queries: (0..5).map(|_| doc(rng)).collect(),
        docs,
        positive,
        max_features: rng.gen_range(1..=40),
        ngram: (lo, hi),
        tfidf: rng.gen_bool(0.7),
        alpha: [0.01, 0.1, 0.5, 1.0, 2.0][rng.gen_range(0..5)],
    }
}

/// Support-weighted precision, recall and F1, counted item by item.
pub fn weighted_scores(truth: &[bool], pred: &[bool]) -> (f64, f64, f64) {
    let n = truth.len() as f64;
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for class in [false, true] {
        let support = truth.iter().filter(|&&t| t == class).count() as f64;
        let predicted = pred.iter().filter(|&&q| q == class).count() as f64;
        let hits = truth.iter().zip(pred).filter(|(&t, &q)| t == class && q == class).count() as f64;
        let prec = if predicted > 0.0 { hits / predicted } else { 0.0 };
        let rec = if support > 0.0 { hits / support } else { 0.0 };
        let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
        p += support / n * prec;
        r += support / n * rec;
        f += support / n * f1;
    }
    (p, r, f)
}

/// Nominal alpha from pairwise disagreements. `None` when fewer than two
/// units carry two or more values; `Some(1.0)` when every value is equal.
pub fn pairwise_alpha(table: &[Vec<Option<u32>>]) -> Option<f64> {
    let units: Vec<Vec<u32>> = table
        .iter()
        .map(|row| row.iter().flatten().copied().collect::<Vec<u32>>())
        .filter(|v| v.len() >= 2)
        .collect();
    if units.len() < 2 {
        return None;
    }
    let n: usize = units.iter().map(Vec::len).sum();
    let mut within = 0.0;
    for u in &units {
        let mut d = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j && u[i] != u[j] {
                    d += 1.0;
                }
            }
        }
        within += d / (u.len() - 1) as f64;
    }
    let pooled: Vec<u32> = units.concat();
    let mut between = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && pooled[i] != pooled[j] {
                between += 1.0;
            }
        }
    }
    if between == 0.0 {
        return Some(1.0);
    }
    let observed = within / n as f64;
    let expected = between / (n * (n - 1)) as f64;
    Some(1.0 - observed / expected)
}

/// Every table with `rows` x `cols` cells, each missing or one of `k` codes.
pub fn all_tables(rows: usize, cols: usize, k: u32) -> Vec<Vec<Vec<Option<u32>>>> {
    let states = u64::from(k) + 1;
    let cells = rows * cols;
    let total = states.pow(cells as u32);
    (0..total)
        .map(|mut code| {
            (0..rows)
                .map(|_| {
                    (0..cols)
                        .map(|_| {
                            let s = code % states;
                            code /= states;
                            if s == 0 {
                                None
                            } else {
                                Some(s as u32 - 1)
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn random_table(rng: &mut impl Rng, max_rows: usize, max_cols: usize, k: u32) -> Vec<Vec<Option<u32>>> {
    let rows = rng.gen_range(2..=max_rows);
    let cols = rng.gen_range(2..=max_cols);
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0..k)) })
                .collect()
        })
        .collect()
}
