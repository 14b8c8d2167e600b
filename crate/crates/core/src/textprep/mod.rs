//! Deterministic text normalization and tokenization.
//!
//! Two profiles exist. `Full` feeds the bag-of-n-grams classifier and ends in
//! stopword removal and lemmatization; `Minimal` keeps sentences intact for
//! external neural scorers.

pub mod resources;
pub mod steps;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Language;
use resources::{bundled, EmojiTable, LemmaProvider, Stopwords};

pub use steps::{emoji_to_words, strip_mentions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProfileName {
    Full,
    Minimal,
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileName::Full => "full",
            ProfileName::Minimal => "minimal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown preprocessing profile {0:?} (expected full or minimal)")]
pub struct UnknownProfile(pub String);

impl FromStr for ProfileName {
    type Err = UnknownProfile;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(ProfileName::Full),
            "minimal" => Ok(ProfileName::Minimal),
            _ => Err(UnknownProfile(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepId {
    NormalizeWs,
    CaseFold,
    StripHtml,
    StripMentions,
    EmojiToWords,
    StripPunctNumSpecial,
    Tokenize,
    RemoveStopwords,
    Lemmatize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessProfile {
    pub name: ProfileName,
    pub steps: Vec<StepId>,
}

impl PreprocessProfile {
    pub fn new(name: ProfileName) -> Self {
        use StepId::*;
        let steps = match name {
            ProfileName::Full => vec![
                NormalizeWs,
                CaseFold,
                StripHtml,
                StripMentions,
                EmojiToWords,
                StripPunctNumSpecial,
                Tokenize,
                RemoveStopwords,
                Lemmatize,
            ],
            ProfileName::Minimal => vec![NormalizeWs, CaseFold, StripHtml, StripMentions, EmojiToWords],
        };
        PreprocessProfile { name, steps }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
    pub source_profile: ProfileName,
}

/// FULL yields tokens, MINIMAL yields a normalized string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Preprocessed {
    Tokens(TokenStream),
    Text(String),
}

impl Preprocessed {
    pub fn into_tokens(self) -> Vec<String> {
        match self {
            Preprocessed::Tokens(ts) => ts.tokens,
            Preprocessed::Text(t) => t.split_whitespace().map(str::to_string).collect(),
        }
    }

    /// Single-string rendering; tokens are joined by one space.
    pub fn render(&self) -> String {
        match self {
            Preprocessed::Tokens(ts) => ts.tokens.join(" "),
            Preprocessed::Text(t) => t.clone(),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Preprocessed::Tokens(ts) => ts.tokens.is_empty(),
            Preprocessed::Text(t) => t.is_empty(),
        }
    }
}

enum Stage {
    Text(String),
    Tokens(Vec<String>),
}

impl Stage {
    fn into_text(self) -> String {
        match self {
            Stage::Text(t) => t,
            Stage::Tokens(tokens) => tokens.join(" "),
        }
    }

    fn into_tokens(self) -> Vec<String> {
        match self {
            Stage::Text(t) => t.split_whitespace().map(str::to_string).collect(),
            Stage::Tokens(tokens) => tokens,
        }
    }
}

/// Preprocessor over a set of resource tables.
pub struct Preprocessor<'r> {
    stopwords: &'r Stopwords,
    emoji: &'r EmojiTable,
    lemmas: &'r dyn LemmaProvider,
}

impl Default for Preprocessor<'static> {
    fn default() -> Self {
        let b = bundled();
        Preprocessor {
            stopwords: &b.stopwords,
            emoji: &b.emoji,
            lemmas: &b.lemmas,
        }
    }
}

impl<'r> Preprocessor<'r> {
    pub fn new(stopwords: &'r Stopwords, emoji: &'r EmojiTable, lemmas: &'r dyn LemmaProvider) -> Self {
        Preprocessor { stopwords, emoji, lemmas }
    }

    /// Runs the profile's steps in order, repeating the sequence until the
    /// output no longer changes, so the result is always a fixed point.
    pub fn run(&self, text: &str, profile: &PreprocessProfile, language: &Language) -> Preprocessed {
        let mut current = self.run_once(text, profile, language);
        for _ in 0..8 {
            let next = self.run_once(&current.render(), profile, language);
            if next == current {
                break;
            }
            current = next;
        }
        current
    }

    fn run_once(&self, text: &str, profile: &PreprocessProfile, language: &Language) -> Preprocessed {
        let mut stage = Stage::Text(text.to_string());
        for step in &profile.steps {
            stage = match step {
                StepId::NormalizeWs => Stage::Text(steps::normalize_ws(&stage.into_text())),
                StepId::CaseFold => Stage::Text(steps::case_fold(&stage.into_text())),
                StepId::StripHtml => Stage::Text(steps::strip_html(&stage.into_text())),
                StepId::StripMentions => Stage::Text(steps::strip_mentions(&stage.into_text())),
                StepId::EmojiToWords => Stage::Text(steps::emoji_to_words(&stage.into_text(), self.emoji)),
                StepId::StripPunctNumSpecial => Stage::Text(steps::strip_punct_num_special(&stage.into_text())),
                StepId::Tokenize => Stage::Tokens(stage.into_tokens()),
                StepId::RemoveStopwords => Stage::Tokens(
                    stage
                        .into_tokens()
                        .into_iter()
                        .filter(|t| !self.stopwords.contains(t, language))
                        .collect(),
                ),
                StepId::Lemmatize => Stage::Tokens(
                    stage
                        .into_tokens()
                        .iter()
                        .map(|t| self.lemmas.lemma(t, language).to_string())
                        .collect(),
                ),
            };
        }
        match stage {
            Stage::Tokens(tokens) => Preprocessed::Tokens(TokenStream {
                tokens,
                source_profile: profile.name,
            }),
            Stage::Text(t) => Preprocessed::Text(t),
        }
    }
}

/// Preprocesses with the bundled tables.
pub fn preprocess(text: &str, profile: ProfileName, language: &Language) -> Preprocessed {
    Preprocessor::default().run(text, &PreprocessProfile::new(profile), language)
}

/// FULL-profile tokens with the bundled tables.
pub fn full_tokens(text: &str, language: &Language) -> Vec<String> {
    preprocess(text, ProfileName::Full, language).into_tokens()
}

/// A lemmatizer that leaves every token unchanged.
pub struct NoLemmatizer;

impl LemmaProvider for NoLemmatizer {
    fn lemma<'a>(&'a self, token: &'a str, _language: &Language) -> &'a str {
        token
    }
}
