//! Bundled stopword, lemma and emoji tables.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use crate::corpus::Language;

const STOPWORDS_DE: &str = include_str!("../../resources/stopwords_de.txt");
const STOPWORDS_FR: &str = include_str!("../../resources/stopwords_fr.txt");
const LEMMAS_DE: &str = include_str!("../../resources/lemmas_de.tsv");
const LEMMAS_FR: &str = include_str!("../../resources/lemmas_fr.tsv");
const EMOJI: &str = include_str!("../../resources/emoji.tsv");

fn entries(raw: &str) -> impl Iterator<Item = &str> {
    raw.lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Parses a one-entry-per-line word list.
pub fn parse_word_list(raw: &str) -> HashSet<String> {
    entries(raw).map(|l| l.trim().to_string()).collect()
}

/// Parses `key<TAB>value` lines; lines without a tab are skipped.
pub fn parse_tab_table(raw: &str) -> HashMap<String, String> {
    entries(raw)
        .filter_map(|l| l.split_once('\t'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Source of lemmas for the FULL profile. Unknown tokens pass through.
pub trait LemmaProvider: Send + Sync {
    fn lemma<'a>(&'a self, token: &'a str, language: &Language) -> &'a str;
}

/// Dictionary lemmatizer backed by the bundled DE/FR tables.
#[derive(Debug, Clone, Default)]
pub struct DictionaryLemmatizer {
    de: HashMap<String, String>,
    fr: HashMap<String, String>,
}

impl DictionaryLemmatizer {
    pub fn bundled() -> Self {
        DictionaryLemmatizer {
            de: parse_tab_table(LEMMAS_DE),
            fr: parse_tab_table(LEMMAS_FR),
        }
    }

    pub fn from_tables(de: &str, fr: &str) -> Self {
        DictionaryLemmatizer {
            de: parse_tab_table(de),
            fr: parse_tab_table(fr),
        }
    }
}

impl LemmaProvider for DictionaryLemmatizer {
    fn lemma<'a>(&'a self, token: &'a str, language: &Language) -> &'a str {
        let table = match language {
            Language::De => &self.de,
            Language::Fr => &self.fr,
            Language::Other(_) => return token,
        };
        table.get(token).map(String::as_str).unwrap_or(token)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Stopwords {
    de: HashSet<String>,
    fr: HashSet<String>,
}

impl Stopwords {
    pub fn bundled() -> Self {
        Stopwords {
            de: parse_word_list(STOPWORDS_DE),
            fr: parse_word_list(STOPWORDS_FR),
        }
    }

    /// Only the list of the declared language applies.
    pub fn contains(&self, token: &str, language: &Language) -> bool {
        match language {
            Language::De => self.de.contains(token),
            Language::Fr => self.fr.contains(token),
            Language::Other(_) => false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EmojiTable {
    shortcodes: HashMap<char, String>,
}

impl EmojiTable {
    pub fn bundled() -> Self {
        Self::parse(EMOJI)
    }

    pub fn parse(raw: &str) -> Self {
        let shortcodes = parse_tab_table(raw)
            .into_iter()
            .filter_map(|(k, v)| {
                let mut chars = k.chars().filter(|c| !is_emoji_modifier(*c));
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Some((c, v)),
                    _ => None,
                }
            })
            .collect();
        EmojiTable { shortcodes }
    }

    pub fn shortcode(&self, c: char) -> Option<&str> {
        self.shortcodes.get(&c).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.shortcodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shortcodes.is_empty()
    }
}

/// Variation selectors, joiners, skin tones and tag characters that only
/// decorate a preceding emoji.
pub fn is_emoji_modifier(c: char) -> bool {
    matches!(c as u32,
        0xFE0E | 0xFE0F | 0x200D | 0x20E3 | 0x1F3FB..=0x1F3FF | 0xE0020..=0xE007F)
}

pub fn is_regional_indicator(c: char) -> bool {
    matches!(c as u32, 0x1F1E6..=0x1F1FF)
}

/// Pictographic code points treated as emoji.
pub fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0x2B05..=0x2B07
        | 0x2B1B..=0x2B1C
        | 0x2B50
        | 0x2B55
        | 0x231A..=0x231B
        | 0x2328
        | 0x23CF
        | 0x23E9..=0x23F3
        | 0x23F8..=0x23FA
        | 0x3030
        | 0x303D
        | 0x3297
        | 0x3299)
}

pub(crate) struct Bundled {
    pub stopwords: Stopwords,
    pub lemmas: DictionaryLemmatizer,
    pub emoji: EmojiTable,
}

pub(crate) fn bundled() -> &'static Bundled {
    static BUNDLED: OnceLock<Bundled> = OnceLock::new();
    BUNDLED.get_or_init(|| Bundled {
        stopwords: Stopwords::bundled(),
        lemmas: DictionaryLemmatizer::bundled(),
        emoji: EmojiTable::bundled(),
    })
}
