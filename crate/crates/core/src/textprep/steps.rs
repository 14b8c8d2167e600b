use std::sync::OnceLock;

use regex::{Captures, Regex};
use unicode_normalization::UnicodeNormalization;

use super::resources::{is_emoji, is_emoji_modifier, is_regional_indicator, EmojiTable};

const QUOTES: &[char] = &['"', '\'', '“', '”', '„', '‟', '«', '»', '‘', '’', '‚', '‹', '›', '`', '´'];

fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// NFC normalization, line-break and whitespace collapse, and runs of
/// quotation marks reduced to one `"`.
pub fn normalize_ws(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    let mut in_quote_run = false;
    let mut chars = nfc.chars().peekable();
    while let Some(c) = chars.next() {
        if QUOTES.contains(&c) {
            let next_is_quote = chars.peek().is_some_and(|n| QUOTES.contains(n));
            if in_quote_run || next_is_quote {
                if !in_quote_run {
                    out.push('"');
                }
                in_quote_run = next_is_quote;
                continue;
            }
        }
        in_quote_run = false;
        out.push(c);
    }
    collapse_ws(&out)
}

pub fn case_fold(text: &str) -> String {
    text.chars().flat_map(char::to_lowercase).collect()
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)<!--.*?-->|</?[A-Za-z][^<>]*>").unwrap())
}

fn entity_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"&(#[0-9]{1,7}|#[xX][0-9a-fA-F]{1,6}|[A-Za-z]+);").unwrap())
}

fn named_entity(name: &str) -> Option<char> {
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "auml" => 'ä',
        "ouml" => 'ö',
        "uuml" => 'ü',
        "Auml" => 'Ä',
        "Ouml" => 'Ö',
        "Uuml" => 'Ü',
        "szlig" => 'ß',
        "eacute" => 'é',
        "egrave" => 'è',
        "ecirc" => 'ê',
        "agrave" => 'à',
        "acirc" => 'â',
        "ccedil" => 'ç',
        "icirc" => 'î',
        "ocirc" => 'ô',
        "ugrave" => 'ù',
        "ucirc" => 'û',
        "laquo" => '«',
        "raquo" => '»',
        "hellip" => '…',
        "ndash" => '–',
        "mdash" => '—',
        _ => return None,
    })
}

fn decode_entities(text: &str) -> String {
    entity_regex()
        .replace_all(text, |caps: &Captures| {
            let body = &caps[1];
            let decoded = if let Some(hex) = body.strip_prefix("#x").or_else(|| body.strip_prefix("#X")) {
                u32::from_str_radix(hex, 16).ok().and_then(char::from_u32)
            } else if let Some(dec) = body.strip_prefix('#') {
                dec.parse::<u32>().ok().and_then(char::from_u32)
            } else {
                named_entity(body)
            };
            decoded.map_or_else(|| caps[0].to_string(), String::from)
        })
        .into_owned()
}

/// Decodes character entities, then removes tags (never their text content).
/// Repeats until stable so that double-escaped markup is removed too.
pub fn strip_html(text: &str) -> String {
    let mut current = text.to_string();
    for _ in 0..8 {
        let decoded = decode_entities(&current);
        let stripped = tag_regex().replace_all(&decoded, " ").into_owned();
        if stripped == current {
            break;
        }
        current = stripped;
    }
    collapse_ws(&current)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Removes `@handle` tokens. An `@` preceded by a word character (an email
/// address) is left alone.
pub fn strip_mentions(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let starts_mention = c == '@'
            && (i == 0 || !is_word_char(chars[i - 1]))
            && chars.get(i + 1).is_some_and(|n| is_word_char(*n));
        if starts_mention {
            i += 1;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            out.push(' ');
            continue;
        }
        out.push(c);
        i += 1;
    }
    collapse_ws(&out)
}

pub const UNKNOWN_EMOJI: &str = ":unknown_emoji:";

/// Replaces emoji with space-delimited English `:shortcode:` tokens.
pub fn emoji_to_words(text: &str, table: &EmojiTable) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if is_emoji_modifier(c) {
            continue;
        }
        if is_regional_indicator(c) {
            // flags are pairs of regional indicators
            if chars.peek().copied().is_some_and(is_regional_indicator) {
                chars.next();
            }
            out.push(' ');
            out.push_str(UNKNOWN_EMOJI);
            out.push(' ');
            continue;
        }
        if is_emoji(c) || table.shortcode(c).is_some() {
            out.push(' ');
            match table.shortcode(c) {
                Some(code) => {
                    out.push(':');
                    out.push_str(code);
                    out.push(':');
                }
                None => out.push_str(UNKNOWN_EMOJI),
            }
            out.push(' ');
            continue;
        }
        out.push(c);
    }
    collapse_ws(&out)
}

fn punct_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // underscores survive so emoji shortcodes stay one token
    RE.get_or_init(|| Regex::new(r"[\p{P}\p{N}\p{S}&&[^_]]+").unwrap())
}

/// Removes punctuation, numbers and symbols (Unicode P*, N*, S*).
pub fn strip_punct_num_special(text: &str) -> String {
    collapse_ws(&punct_regex().replace_all(text, " "))
}
