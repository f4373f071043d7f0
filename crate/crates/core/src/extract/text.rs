//! Rule-based extraction of the chosen option from free-form reply text.
//!
//! Rules run in a fixed order and the first rule that fires decides:
//!
//! 1. explicit option IDs ("the answer is (C)", "Answer: C", a leading
//!    "C." / "(C)" / "C)" or a bare letter);
//! 2. verbatim option contents, longest match wins;
//! 3. out-of-option phrases (refusal, no correct answer, don't know);
//! 4. otherwise NaN.
//!
//! An ID followed directly by another option's content, or two different
//! IDs asserted in the same reply, count as self-contradiction and yield NaN.

use std::path::Path;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::Deserialize;

use super::{ExtractError, ExtractionResult};
use crate::model::{AnswerLabel, ExtractionMethod, OptionEntry, OptionKind};

const BUILTIN_LEXICON: &str = include_str!("../../data/special_phrases.toml");

static ANSWER_IS: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"(?i:\b(?:answer|choice)\s+(?:is|would\s+be|should\s+be))\s*:?\s*(?:(?i:option)\s+)?[(\[]?\*{0,2}([A-G])\*{0,2}[)\]]?(?:[^\p{L}\p{N}]|$)",
    )
    .unwrap()
});

static ANSWER_COLON: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"(?i:\banswer)\s*\*{0,2}:\*{0,2}\s*(?:(?i:option)\s+)?[(\[]?\*{0,2}([A-G])\*{0,2}[)\]]?(?:[^\p{L}\p{N}]|$)",
    )
    .unwrap()
});

static LEADING_ID: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^\s*\*{0,2}(?:\(([A-G])\)|([A-G])(?:[.):]|\*\*|[ \t]*(?:\n|$)))").unwrap()
});

/// Out-of-option phrase lists.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Lexicon {
    pub refusal: Vec<String>,
    pub no_correct_answer: Vec<String>,
    pub dont_know: Vec<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_toml(BUILTIN_LEXICON).expect("bundled lexicon parses")
    }
}

impl Lexicon {
    pub fn from_toml(text: &str) -> Result<Self, ExtractError> {
        let mut lex: Lexicon = toml::from_str(text).map_err(|e| ExtractError::Lexicon(e.to_string()))?;
        for list in [&mut lex.refusal, &mut lex.no_correct_answer, &mut lex.dont_know] {
            for phrase in list.iter_mut() {
                *phrase = normalize(phrase);
            }
        }
        Ok(lex)
    }

    pub fn from_path(path: &Path) -> Result<Self, ExtractError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExtractError::Lexicon(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn classify(&self, normalized: &str) -> Option<(OptionKind, &str)> {
        let lists = [
            (OptionKind::Refuse, &self.refusal),
            (OptionKind::NoCorrectAnswer, &self.no_correct_answer),
            (OptionKind::IDoNotKnow, &self.dont_know),
        ];
        lists.into_iter().find_map(|(kind, list)| {
            list.iter()
                .find(|p| !p.is_empty() && normalized.contains(p.as_str()))
                .map(|p| (kind, p.as_str()))
        })
    }
}

fn normalize(text: &str) -> String {
    text.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'")
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    end: usize,
    option: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Every occurrence of every option content in `haystack` (both already
/// normalized), respecting word boundaries at alphanumeric edges.
fn content_spans(haystack: &str, contents: &[String]) -> Vec<Span> {
    let mut spans = Vec::new();
    for (option, needle) in contents.iter().enumerate() {
        if needle.is_empty() {
            continue;
        }
        let first_alnum = needle.chars().next().is_some_and(is_word_char);
        let last_alnum = needle.chars().next_back().is_some_and(is_word_char);
        for (start, _) in haystack.match_indices(needle.as_str()) {
            let end = start + needle.len();
            let before_ok = !first_alnum || !haystack[..start].chars().next_back().is_some_and(is_word_char);
            let after_ok = !last_alnum || !haystack[end..].chars().next().is_some_and(is_word_char);
            if before_ok && after_ok {
                spans.push(Span { start, end, option });
            }
        }
    }
    spans
}

/// Drops spans strictly covered by a longer span of another option.
fn maximal_spans(spans: Vec<Span>) -> Vec<Span> {
    spans
        .iter()
        .filter(|s| {
            !spans.iter().any(|t| {
                t.option != s.option
                    && t.start <= s.start
                    && s.end <= t.end
                    && (t.end - t.start) > (s.end - s.start)
            })
        })
        .copied()
        .collect()
}

struct IdHit {
    slot: usize,
    end: usize,
    matched: String,
}

fn id_hits(text: &str, options: &[OptionEntry]) -> Vec<IdHit> {
    let slot_of = |letter: &str| {
        let c = letter.chars().next()?;
        options.iter().position(|o| o.id == c)
    };
    let mut hits = Vec::new();
    if let Some(caps) = LEADING_ID.captures(text) {
        let m = caps.get(1).or_else(|| caps.get(2)).unwrap();
        if let Some(slot) = slot_of(m.as_str()) {
            hits.push(IdHit {
                slot,
                end: m.end(),
                matched: caps[0].trim().to_string(),
            });
        }
    }
    for re in [&*ANSWER_IS, &*ANSWER_COLON] {
        for caps in re.captures_iter(text) {
            let m = caps.get(1).unwrap();
            if let Some(slot) = slot_of(m.as_str()) {
                hits.push(IdHit {
                    slot,
                    end: m.end(),
                    matched: caps[0].trim().to_string(),
                });
            }
        }
    }
    hits
}

/// True when the text right after an asserted ID names a different option.
fn contradicts_adjacent(text: &str, hit: &IdHit, contents: &[String]) -> bool {
    let rest = &text[hit.end..];
    let line = rest.split('\n').next().unwrap_or("");
    let trimmed = line.trim_start_matches(|c: char| {
        c.is_whitespace() || matches!(c, '.' | ':' | ')' | ']' | '-' | ',' | '"' | '\'' | '*' | '\u{2013}')
    });
    let segment = normalize(trimmed);
    let spans = maximal_spans(content_spans(&segment, contents));
    match spans.iter().filter(|s| s.start == 0).max_by_key(|s| s.end) {
        Some(adjacent) => adjacent.option != hit.slot,
        None => false,
    }
}

fn special_result(kind: OptionKind, options: &[OptionEntry], evidence: &str) -> ExtractionResult {
    // Extra-options mode carries these meanings on real option IDs.
    let label = match options.iter().position(|o| o.kind == kind) {
        Some(slot) => AnswerLabel::option(slot),
        None => kind.special_label().expect("special kind"),
    };
    ExtractionResult {
        label,
        method: ExtractionMethod::SpecialPhrase,
        evidence: evidence.to_string(),
    }
}

/// Runs the extraction cascade. Total: every input maps to one label.
pub fn extract_text_answer(text: &str, options: &[OptionEntry], lexicon: &Lexicon) -> ExtractionResult {
    let contents: Vec<String> = options.iter().map(|o| normalize(&o.content)).collect();

    // (1) explicit IDs
    let hits = id_hits(text, options);
    if let Some(first) = hits.first() {
        if hits.iter().any(|h| h.slot != first.slot) {
            return ExtractionResult::failed("conflicting option IDs");
        }
        if let Some(bad) = hits.iter().find(|h| contradicts_adjacent(text, h, &contents)) {
            return ExtractionResult::failed(format!("ID contradicts adjacent content: {}", bad.matched));
        }
        return ExtractionResult {
            label: AnswerLabel::option(first.slot),
            method: ExtractionMethod::PatternId,
            evidence: first.matched.clone(),
        };
    }

    // (2) option contents
    let normalized = normalize(text);
    let spans = maximal_spans(content_spans(&normalized, &contents));
    if let Some(first) = spans.first() {
        if spans.iter().any(|s| s.option != first.option) {
            return ExtractionResult::failed("several option contents matched");
        }
        return ExtractionResult {
            label: AnswerLabel::option(first.option),
            method: ExtractionMethod::PatternContent,
            evidence: normalized[first.start..first.end].to_string(),
        };
    }

    // (3) out-of-option phrases
    if let Some((kind, phrase)) = lexicon.classify(&normalized) {
        return special_result(kind, options, phrase);
    }

    ExtractionResult::failed("no rule matched")
}
