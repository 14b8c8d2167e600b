//! Seeded synthetic corpora with class-conditional vocabularies.
//!
//! Every word is letters only, so the FULL preprocessing profile leaves it
//! intact. Word families are told apart by their two-letter prefix:
//! `hz` hate, `tz` toxic-only, `nz` neutral, `cz` common filler, `dz` words
//! that replace positive vocabulary after the drift point, and `sh`/`st`/`sn`
//! the disjoint class vocabularies of shifted sources.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{Example, Label, Language, NewExample, Source, TargetGroup};
use crate::hitl::{GoldLabel, SimulatedAnnotator};
use crate::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weighted<T> {
    pub value: T,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    #[serde(with = "crate::timefmt")]
    pub cutoff: DateTime<Utc>,
    /// Share of the positive vocabulary swapped for fresh words after `cutoff`.
    pub replaced_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub n_examples: usize,
    pub seed: u64,
    /// Probability that an example is positive (hate or toxic).
    pub positive_prior: f64,
    /// Share of positives that are toxic rather than targeted hate.
    pub toxic_share: f64,
    pub hate_vocab: usize,
    pub toxic_vocab: usize,
    /// Probability that a class word of a toxic example comes from the hate vocabulary.
    pub toxic_hate_overlap: f64,
    pub neutral_vocab: usize,
    pub common_vocab: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Probability that a token is drawn from the example's class vocabulary.
    pub signal: f64,
    /// Probability that a class token is drawn from the opposite class instead.
    pub cross_talk: f64,
    /// Label noise of the simulated annotator.
    pub noise: f64,
    pub sources: Vec<Weighted<Source>>,
    pub languages: Vec<Weighted<Language>>,
    #[serde(with = "crate::timefmt")]
    pub start: DateTime<Utc>,
    #[serde(with = "crate::timefmt")]
    pub end: DateTime<Utc>,
    #[serde(default)]
    pub drift: Option<DriftSpec>,
    /// Sources whose class vocabularies are disjoint from everyone else's.
    #[serde(default)]
    pub shifted_sources: Vec<Source>,
}

const SHIPPED_SPEC: &str = include_str!("../../resources/specs/shipped.json");

impl SyntheticCorpusSpec {
    /// The bundled desk-scale spec (about 5k examples, drift in the last quarter).
    pub fn shipped() -> Self {
        serde_json::from_str(SHIPPED_SPEC).expect("bundled spec parses")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let invalid = |msg: &str| Err(EvalError::InvalidSpec(msg.to_string()));
        let fractions = [
            ("positive_prior", self.positive_prior),
            ("toxic_share", self.toxic_share),
            ("toxic_hate_overlap", self.toxic_hate_overlap),
            ("signal", self.signal),
            ("cross_talk", self.cross_talk),
            ("noise", self.noise),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(EvalError::InvalidSpec(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if let Some(d) = &self.drift {
            if !(0.0..=1.0).contains(&d.replaced_fraction) {
                return invalid("drift.replaced_fraction must be in [0, 1]");
            }
        }
        if self.n_examples == 0 {
            return invalid("n_examples must be at least 1");
        }
        if self.hate_vocab == 0 || self.toxic_vocab == 0 || self.neutral_vocab == 0 || self.common_vocab == 0 {
            return invalid("every vocabulary needs at least one word");
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return invalid("need 1 <= min_tokens <= max_tokens");
        }
        if self.start >= self.end {
            return invalid("start must precede end");
        }
        for (name, weights) in [
            ("sources", self.sources.iter().map(|w| w.weight).collect::<Vec<_>>()),
            ("languages", self.languages.iter().map(|w| w.weight).collect()),
        ] {
            if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
                return Err(EvalError::InvalidSpec(format!("{name} needs non-negative weights with a positive sum")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Era {
    BeforeDrift,
    AfterDrift,
}

/// Base-26 spelling with at least two letters: 0 -> "aa", 27 -> "bb".
fn letters(mut i: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (i % 26) as u8);
        i /= 26;
        if i == 0 && out.len() >= 2 {
            break;
        }
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

fn family(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{}", letters(i))).collect()
}

#[derive(Debug, Clone)]
struct Vocabularies {
    /// Hate words followed by toxic-only words.
    positive: Vec<String>,
    positive_after: Vec<String>,
    hate_len: usize,
    neutral: Vec<String>,
    common: Vec<String>,
    shifted_positive: Vec<String>,
    shifted_neutral: Vec<String>,
}

impl Vocabularies {
    fn new(spec: &SyntheticCorpusSpec, rng: &mut impl Rng) -> Self {
        let mut positive = family("hz", spec.hate_vocab);
        positive.extend(family("tz", spec.toxic_vocab));
        let mut positive_after = positive.clone();
        if let Some(d) = &spec.drift {
            let n = (d.replaced_fraction * positive.len() as f64).round() as usize;
            let mut idx: Vec<usize> = (0..positive.len()).collect();
            idx.shuffle(rng);
            for (k, &i) in idx[..n].iter().enumerate() {
                positive_after[i] = format!("dz{}", letters(k));
            }
        }
        let mut shifted_positive = family("sh", spec.hate_vocab);
        shifted_positive.extend(family("st", spec.toxic_vocab));
        Vocabularies {
            positive,
            positive_after,
            hate_len: spec.hate_vocab,
            neutral: family("nz", spec.neutral_vocab),
            common: family("cz", spec.common_vocab),
            shifted_positive,
            shifted_neutral: family("sn", spec.neutral_vocab),
        }
    }
}

/// Generated examples together with their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub spec: SyntheticCorpusSpec,
    pub examples: Vec<Example>,
    pub gold: BTreeMap<String, GoldLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Hate,
    Toxic,
    Neutral,
}

const STOPWORDS_DE: [&str; 4] = ["und", "die", "ist", "nicht"];
const STOPWORDS_FR: [&str; 4] = ["le", "et", "la", "est"];

/// Builds a corpus from the spec. Same spec, same corpus, byte for byte.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec) -> Result<SyntheticCorpus, EvalError> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let vocab = Vocabularies::new(spec, &mut rng);
    let source_pick = WeightedIndex::new(spec.sources.iter().map(|w| w.weight)).map_err(|e| EvalError::InvalidSpec(e.to_string()))?;
    let language_pick =
        WeightedIndex::new(spec.languages.iter().map(|w| w.weight)).map_err(|e| EvalError::InvalidSpec(e.to_string()))?;
    let span = (spec.end - spec.start).num_seconds();
    let width = spec.n_examples.to_string().len().max(5);

    let mut examples = Vec::with_capacity(spec.n_examples);
    let mut gold = BTreeMap::new();
    for i in 0..spec.n_examples {
        let id = format!("syn{i:0width$}");
        let created_at = spec.start + Duration::seconds(span * i as i64 / spec.n_examples as i64);
        let source = spec.sources[source_pick.sample(&mut rng)].value.clone();
        let language = spec.languages[language_pick.sample(&mut rng)].value.clone();
        let kind = if rng.gen_bool(spec.positive_prior) {
            if rng.gen_bool(spec.toxic_share) {
                Kind::Toxic
            } else {
                Kind::Hate
            }
        } else {
            Kind::Neutral
        };
        let era = match &spec.drift {
            Some(d) if created_at > d.cutoff => Era::AfterDrift,
            _ => Era::BeforeDrift,
        };
        let shifted = spec.shifted_sources.contains(&source);
        let positive = match (shifted, era) {
            (true, _) => &vocab.shifted_positive,
            (false, Era::BeforeDrift) => &vocab.positive,
            (false, Era::AfterDrift) => &vocab.positive_after,
        };
        let neutral = if shifted { &vocab.shifted_neutral } else { &vocab.neutral };
        let (hate, toxic_own) = positive.split_at(vocab.hate_len);

        let n_tokens = rng.gen_range(spec.min_tokens..=spec.max_tokens);
        let mut tokens: Vec<&str> = Vec::with_capacity(n_tokens + 2);
        for _ in 0..n_tokens {
            let word = if rng.gen_bool(spec.signal) {
                let own = !rng.gen_bool(spec.cross_talk);
                let list = match (kind, own) {
                    (Kind::Hate, true) => hate,
                    (Kind::Toxic, true) if rng.gen_bool(spec.toxic_hate_overlap) => hate,
                    (Kind::Toxic, true) => toxic_own,
                    (Kind::Neutral, true) | (Kind::Hate | Kind::Toxic, false) => neutral.as_slice(),
                    (Kind::Neutral, false) => hate,
                };
                list.choose(&mut rng).expect("vocabularies are non-empty")
            } else {
                vocab.common.choose(&mut rng).expect("vocabularies are non-empty")
            };
            tokens.push(word);
        }
        let stop = match language {
            Language::Fr => &STOPWORDS_FR,
            _ => &STOPWORDS_DE,
        };
        let at = rng.gen_range(0..=tokens.len());
        tokens.insert(at, stop.choose(&mut rng).expect("non-empty"));
        let mut text = tokens.join(" ");
        if rng.gen_bool(0.1) {
            text = format!("@user {text}");
        }
        if rng.gen_bool(0.3) {
            let mut chars = text.chars();
            if let Some(first) = chars.next() {
                text = first.to_uppercase().chain(chars).collect();
            }
        }
        text.push(if rng.gen_bool(0.5) { '.' } else { '!' });

        let label = match kind {
            Kind::Hate => {
                let n = if rng.gen_bool(0.3) { 2 } else { 1 };
                let targets: BTreeSet<TargetGroup> = TargetGroup::ALL.choose_multiple(&mut rng, n).copied().collect();
                GoldLabel::hate(targets)
            }
            Kind::Toxic => GoldLabel::toxic(),
            Kind::Neutral => GoldLabel::negative(),
        };
        gold.insert(id.clone(), label);
        examples.push(Example {
            id,
            text,
            source,
            language,
            created_at,
            ingested_at: created_at,
            wave_tag: None,
            metadata: BTreeMap::new(),
        });
    }
    Ok(SyntheticCorpus { spec: spec.clone(), examples, gold })
}

impl SyntheticCorpus {
    pub fn gold_label(&self, id: &str) -> Option<Label> {
        self.gold.get(id).map(|g| g.label)
    }

    /// The annotator used for training labels, with the spec's noise rate.
    pub fn annotator(&self) -> SimulatedAnnotator {
        SimulatedAnnotator::new("annotator:synthetic", self.spec.noise, self.spec.seed)
    }

    /// What the simulated annotator answers for `id`.
    pub fn observed(&self, id: &str) -> Option<GoldLabel> {
        let gold = self.gold.get(id)?;
        let a = self.annotator().judge(id, gold, self.spec.start);
        Some(GoldLabel { label: a.label, toxic: a.toxic, targets: a.targets })
    }

    pub fn new_examples(&self) -> Vec<NewExample> {
        self.examples.iter().map(NewExample::from).collect()
    }

    /// Positive vocabulary in effect for the given era.
    pub fn positive_vocabulary(&self, era: Era) -> Vec<String> {
        let v = Vocabularies::new(&self.spec, &mut seeded_rng(self.spec.seed));
        match era {
            Era::BeforeDrift => v.positive,
            Era::AfterDrift => v.positive_after,
        }
    }
}
