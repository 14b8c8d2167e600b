//! Corpus records and the append-only store that holds them.
//!
//! Every entity kind lives in its own JSONL file (`examples.jsonl`,
//! `annotations.jsonl`, `labels.jsonl`, `snapshots.jsonl`). The in-memory
//! index is rebuilt from those files when a store is opened.

mod resolve;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use resolve::{resolve_strong_label, ResolveError, ResolvedLabel};
pub use store::{
    CorpusStore, IngestReport, LabelStatus, NewExample, QueryFilter, Rejection, RejectReason,
    StoreError, TimeRange,
};

use crate::timefmt;

/// Where a document came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Ngo,
    On1,
    On2,
    On3,
    Twitter,
    Other(String),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Ngo => f.write_str("NGO"),
            Source::On1 => f.write_str("ON1"),
            Source::On2 => f.write_str("ON2"),
            Source::On3 => f.write_str("ON3"),
            Source::Twitter => f.write_str("TWITTER"),
            Source::Other(name) => write!(f, "OTHER:{name}"),
        }
    }
}

impl FromStr for Source {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "NGO" => Source::Ngo,
            "ON1" => Source::On1,
            "ON2" => Source::On2,
            "ON3" => Source::On3,
            "TWITTER" => Source::Twitter,
            _ => Source::Other(s.strip_prefix("OTHER:").unwrap_or(s).to_string()),
        })
    }
}

/// Declared language of a document. Never detected, always ingestion metadata.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Language {
    De,
    Fr,
    Other(String),
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Language::De => f.write_str("DE"),
            Language::Fr => f.write_str("FR"),
            Language::Other(tag) => write!(f, "OTHER:{tag}"),
        }
    }
}

impl FromStr for Language {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "DE" | "G" => Language::De,
            "FR" => Language::Fr,
            _ => Language::Other(s.strip_prefix("OTHER:").unwrap_or(s).to_string()),
        })
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                Ok(raw.parse().unwrap_or_else(|e: std::convert::Infallible| match e {}))
            }
        }
    };
}

string_serde!(Source);
string_serde!(Language);

/// Binary hate-speech label, persisted as `0` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn flipped(self) -> Self {
        Label::from_bool(!self.is_positive())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

/// The closed set of ten target groups, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TargetGroup {
    Sex,
    Age,
    Gender,
    Religion,
    Nationality,
    Impairment,
    Status,
    Politics,
    Appearance,
    Other,
}

impl TargetGroup {
    pub const ALL: [TargetGroup; 10] = [
        TargetGroup::Sex,
        TargetGroup::Age,
        TargetGroup::Gender,
        TargetGroup::Religion,
        TargetGroup::Nationality,
        TargetGroup::Impairment,
        TargetGroup::Status,
        TargetGroup::Politics,
        TargetGroup::Appearance,
        TargetGroup::Other,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnnotationKind {
    Weak,
    Strong,
    Qc,
}

/// One ingested document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub source: Source,
    pub language: Language,
    #[serde(with = "timefmt")]
    pub created_at: DateTime<Utc>,
    #[serde(with = "timefmt")]
    pub ingested_at: DateTime<Utc>,
    #[serde(default)]
    pub wave_tag: Option<String>,
    /// Free-form metadata without semantics (moderation status, article context, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// One human or machine judgment about an example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub example_id: String,
    /// Machine annotators carry a `model:` prefix.
    pub annotator_id: String,
    pub label: Label,
    pub toxic: bool,
    #[serde(default)]
    pub targets: BTreeSet<TargetGroup>,
    pub kind: AnnotationKind,
    #[serde(with = "timefmt")]
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemeViolation {
    #[error("toxic speech cannot carry target groups")]
    ToxicWithTargets,
    #[error("toxic speech must be labelled positive")]
    ToxicNotPositive,
    #[error("positive label needs the toxic flag or at least one target group")]
    PositiveWithoutReason,
    #[error("negative label cannot carry target groups")]
    NegativeWithTargets,
}

impl Annotation {
    /// Checks the toxic-exclusivity annotation scheme.
    pub fn check_scheme(&self) -> Result<(), SchemeViolation> {
        check_scheme(self.label, self.toxic, &self.targets)
    }

    pub fn is_machine(&self) -> bool {
        self.annotator_id.starts_with("model:")
    }
}

pub fn check_scheme(
    label: Label,
    toxic: bool,
    targets: &BTreeSet<TargetGroup>,
) -> Result<(), SchemeViolation> {
    match (label, toxic, targets.is_empty()) {
        (_, true, false) => Err(SchemeViolation::ToxicWithTargets),
        (Label::Negative, true, _) => Err(SchemeViolation::ToxicNotPositive),
        (Label::Negative, false, false) => Err(SchemeViolation::NegativeWithTargets),
        (Label::Positive, false, true) => Err(SchemeViolation::PositiveWithoutReason),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Resolution {
    Single,
    Majority,
    TiebreakThird,
    QcOverride,
}

/// Current weak and strong label state of one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelState {
    pub example_id: String,
    pub weak_probability: Option<f64>,
    pub weak_label: Option<Label>,
    pub strong_label: Option<Label>,
    pub resolution: Option<Resolution>,
    pub model_version: Option<String>,
    /// Union of target groups from annotators agreeing with a positive majority.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub strong_targets: BTreeSet<TargetGroup>,
    /// Positive strong label with no target group.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub strong_toxic: bool,
}

impl LabelState {
    pub fn empty(example_id: impl Into<String>) -> Self {
        LabelState {
            example_id: example_id.into(),
            weak_probability: None,
            weak_label: None,
            strong_label: None,
            resolution: None,
            model_version: None,
            strong_targets: BTreeSet::new(),
            strong_toxic: false,
        }
    }

    pub fn with_weak(mut self, probability: f64, model_version: &str) -> Self {
        self.weak_probability = Some(probability);
        self.weak_label = Some(Label::from_bool(probability >= 0.5));
        self.model_version = Some(model_version.to_string());
        self
    }
}

/// Immutable, class-balanced training set used for one (re)train.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSnapshot {
    pub version: u64,
    pub example_ids: Vec<String>,
    pub positives: usize,
    pub negatives: usize,
    #[serde(with = "timefmt")]
    pub created_at: DateTime<Utc>,
    pub parent_version: Option<u64>,
}
