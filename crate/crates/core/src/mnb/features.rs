//! Word n-gram extraction, document-frequency vocabulary and tfidf vectors.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MnbError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Weighting {
    Tfidf,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub max_features: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub weighting: Weighting,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            max_features: 3000,
            ngram_min: 1,
            ngram_max: 4,
            weighting: Weighting::Tfidf,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), MnbError> {
        if self.ngram_min < 1 || self.ngram_min > self.ngram_max {
            return Err(MnbError::InvalidConfig(format!(
                "n-gram range {}..={} must satisfy 1 <= min <= max",
                self.ngram_min, self.ngram_max
            )));
        }
        if self.max_features < 1 {
            return Err(MnbError::InvalidConfig("max_features must be at least 1".into()));
        }
        Ok(())
    }
}

/// Every contiguous n-gram with n in the configured range, joined by one space.
pub fn extract_ngrams(tokens: &[String], cfg: &FeatureConfig) -> Vec<String> {
    let mut out = Vec::new();
    for n in cfg.ngram_min..=cfg.ngram_max {
        if n > tokens.len() {
            break;
        }
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

/// N-gram term counts of one document.
pub type TermCounts = HashMap<String, u32>;

pub fn term_counts(tokens: &[String], cfg: &FeatureConfig) -> TermCounts {
    let mut counts = TermCounts::new();
    for gram in extract_ngrams(tokens, cfg) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<f64>,
    doc_count: usize,
}

impl Vocabulary {
    pub fn from_parts(terms: Vec<String>, idf: Vec<f64>, doc_count: usize) -> Result<Self, MnbError> {
        if terms.len() != idf.len() {
            return Err(MnbError::InvalidModel("vocabulary and idf lengths differ".into()));
        }
        if idf.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(MnbError::InvalidModel("idf values must be finite and positive".into()));
        }
        let index: HashMap<String, usize> = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != terms.len() {
            return Err(MnbError::InvalidModel("duplicate vocabulary term".into()));
        }
        Ok(Vocabulary { terms, index, idf, doc_count })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in index order (document-frequency rank).
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }
}

/// Keeps the `max_features` n-grams with the highest document frequency
/// (ties lexicographically ascending) and assigns indices in that rank
/// order. `idf = ln((1 + N) / (1 + df)) + 1`.
pub fn fit_vocabulary(corpus: &[Vec<String>], cfg: &FeatureConfig) -> Result<Vocabulary, MnbError> {
    let counts: Vec<TermCounts> = corpus.iter().map(|doc| term_counts(doc, cfg)).collect();
    fit_vocabulary_from_counts(&counts, cfg)
}

pub fn fit_vocabulary_from_counts(docs: &[TermCounts], cfg: &FeatureConfig) -> Result<Vocabulary, MnbError> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(MnbError::EmptyCorpus);
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        for term in doc.keys() {
            *df.entry(term.as_str()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cfg.max_features);

    let n = docs.len() as f64;
    let idf = ranked
        .iter()
        .map(|(_, d)| ((1.0 + n) / (1.0 + *d as f64)).ln() + 1.0)
        .collect();
    let terms = ranked.into_iter().map(|(t, _)| t.to_string()).collect();
    Vocabulary::from_parts(terms, idf, docs.len())
}

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_unstable_by_key(|p| p.0);
        let (indices, values) = pairs.into_iter().unzip();
        SparseVector { indices, values }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut dense = vec![0.0; len];
        for (i, v) in self.iter() {
            dense[i] = v;
        }
        dense
    }
}

/// TFIDF: raw term count times idf, then L2-normalized. COUNT: raw counts.
/// Out-of-vocabulary n-grams are ignored.
pub fn vectorize(tokens: &[String], vocab: &Vocabulary, cfg: &FeatureConfig) -> SparseVector {
    vectorize_counts(&term_counts(tokens, cfg), vocab, cfg.weighting)
}

pub fn vectorize_counts(counts: &TermCounts, vocab: &Vocabulary, weighting: Weighting) -> SparseVector {
    let pairs: Vec<(usize, f64)> = counts
        .iter()
        .filter_map(|(term, &tf)| {
            vocab.get(term).map(|i| match weighting {
                Weighting::Tfidf => (i, tf as f64 * vocab.idf[i]),
                Weighting::Count => (i, tf as f64),
            })
        })
        .collect();
    let mut v = SparseVector::from_pairs(pairs);
    if weighting == Weighting::Tfidf {
        let norm = v.norm();
        if norm > 0.0 {
            v.values.iter_mut().for_each(|x| *x /= norm);
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn cfg(min: usize, max: usize, features: usize) -> FeatureConfig {
        FeatureConfig {
            max_features: features,
            ngram_min: min,
            ngram_max: max,
            weighting: Weighting::Tfidf,
        }
    }

    #[test]
    fn ngram_enumeration() {
        let mut grams = extract_ngrams(&toks("a b c"), &cfg(1, 2, 10));
        grams.sort();
        assert_eq!(grams, ["a", "a b", "b", "b c", "c"]);
        assert_eq!(extract_ngrams(&toks("a"), &cfg(1, 4, 10)), ["a"]);
        assert_eq!(extract_ngrams(&toks("a b c d"), &cfg(4, 4, 10)), ["a b c d"]);
    }

    #[test]
    fn shared_term_has_unit_idf() {
        let vocab = fit_vocabulary(&[toks("x y"), toks("x z")], &cfg(1, 1, 10)).unwrap();
        // ln(3/3) + 1
        assert_eq!(vocab.idf()[vocab.get("x").unwrap()], 1.0);
        // ln(3/2) + 1
        let y = vocab.idf()[vocab.get("y").unwrap()];
        assert!((y - (1.5f64.ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn df_ties_keep_lexicographically_smallest() {
        let vocab = fit_vocabulary(&[toks("m c q")], &cfg(1, 1, 1)).unwrap();
        assert_eq!(vocab.terms(), ["c"]);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert_eq!(fit_vocabulary(&[], &cfg(1, 1, 1)), Err(MnbError::EmptyCorpus));
    }

    #[test]
    fn invalid_ngram_range_rejected() {
        assert!(cfg(2, 1, 5).validate().is_err());
        assert!(cfg(0, 1, 5).validate().is_err());
        assert!(cfg(1, 1, 0).validate().is_err());
    }

    #[test]
    fn vectors_are_l2_normalized() {
        let vocab = fit_vocabulary(&[toks("a b"), toks("a b")], &cfg(1, 1, 10)).unwrap();
        let single = vectorize(&toks("a"), &vocab, &cfg(1, 1, 10));
        assert_eq!(single.values, [1.0]);
        assert!(vectorize(&toks("zzz"), &vocab, &cfg(1, 1, 10)).is_zero());
        // both idf 1.0, both tf 1 -> 1/sqrt(2) each
        let both = vectorize(&toks("a b"), &vocab, &cfg(1, 1, 10));
        for v in both.values {
            assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn count_weighting_keeps_raw_counts() {
        let c = FeatureConfig { weighting: Weighting::Count, ..cfg(1, 1, 10) };
        let vocab = fit_vocabulary(&[toks("a b")], &c).unwrap();
        let v = vectorize(&toks("a a b"), &vocab, &c);
        assert_eq!(v.to_dense(2), vec![2.0, 1.0]);
    }
}
