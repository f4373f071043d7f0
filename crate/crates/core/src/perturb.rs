//! Seeded generators for the question and option perturbations.
//!
//! All generators are pure functions of their input and a [`SeedStream`].
//! A stream is derived by hashing the master seed together with the run
//! coordinates, so the same coordinates always give the same bytes no matter
//! which thread asks for them or in what order.

use rand::seq::{index, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{reletter, OptionEntry, OptionKind, PermutedOptions, ORIGINAL_OPTION_COUNT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerturbError {
    #[error("extra options need exactly 4 regular options, got {0}")]
    NotFourRegular(usize),
    #[error("invalid perturbation config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationConfig {
    pub typo_word_probability: f64,
    pub word_swap_count: usize,
    pub letter_swap_min_word_length: usize,
    pub master_seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            typo_word_probability: 0.2,
            word_swap_count: 4,
            letter_swap_min_word_length: 4,
            master_seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<(), PerturbError> {
        if !(0.0..=1.0).contains(&self.typo_word_probability) {
            return Err(PerturbError::Config(format!(
                "typo_word_probability {} outside [0, 1]",
                self.typo_word_probability
            )));
        }
        if self.word_swap_count < 2 {
            return Err(PerturbError::Config("word_swap_count must be at least 2".into()));
        }
        if self.letter_swap_min_word_length == 0 {
            return Err(PerturbError::Config(
                "letter_swap_min_word_length must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Deterministic random stream keyed by run coordinates.
///
/// `domain` separates independent uses that share the other coordinates,
/// e.g. the question rewrite and the option shuffle of the same run.
#[derive(Debug, Clone)]
pub struct SeedStream {
    rng: ChaCha8Rng,
}

impl SeedStream {
    pub fn new(
        master_seed: u64,
        item_id: &str,
        domain: &str,
        perturbation_index: u32,
        shuffle_index: u32,
    ) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"mcqscope-seed-v1");
        hasher.update(master_seed.to_le_bytes());
        for part in [item_id, domain] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        hasher.update(perturbation_index.to_le_bytes());
        hasher.update(shuffle_index.to_le_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&hasher.finalize()[..32]);
        Self {
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    /// Stream for callers that only have a plain integer seed.
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl RngCore for SeedStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Splits text into (word, trailing whitespace) pairs plus any leading
/// whitespace, so that rejoining reproduces the input byte for byte.
fn split_words(text: &str) -> (&str, Vec<(&str, &str)>) {
    let lead_end = text
        .char_indices()
        .find(|(_, c)| !c.is_whitespace())
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (lead, mut rest) = text.split_at(lead_end);
    let mut words = Vec::new();
    while !rest.is_empty() {
        let word_end = rest
            .char_indices()
            .find(|(_, c)| c.is_whitespace())
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        let (word, after) = rest.split_at(word_end);
        let ws_end = after
            .char_indices()
            .find(|(_, c)| !c.is_whitespace())
            .map(|(i, _)| i)
            .unwrap_or(after.len());
        let (ws, next) = after.split_at(ws_end);
        words.push((word, ws));
        rest = next;
    }
    (lead, words)
}

fn join_words(lead: &str, words: &[(String, &str)]) -> String {
    let mut out = String::from(lead);
    for (w, ws) in words {
        out.push_str(w);
        out.push_str(ws);
    }
    out
}

/// With probability `p` per word, replaces one letter of the word with a
/// different lowercase letter. Words without letters are left alone.
pub fn letter_typos(question: &str, stream: &mut SeedStream, p: f64) -> String {
    let (lead, words) = split_words(question);
    let out: Vec<(String, &str)> = words
        .into_iter()
        .map(|(word, ws)| {
            let mut chars: Vec<char> = word.chars().collect();
            let letters: Vec<usize> = (0..chars.len())
                .filter(|&i| chars[i].is_alphabetic())
                .collect();
            if letters.is_empty() || !stream.random_bool(p) {
                return (word.to_string(), ws);
            }
            let pos = letters[stream.random_range(0..letters.len())];
            let original = chars[pos].to_lowercase().next().unwrap_or(chars[pos]);
            let choices: Vec<char> = ('a'..='z').filter(|&c| c != original).collect();
            chars[pos] = choices[stream.random_range(0..choices.len())];
            (chars.into_iter().collect(), ws)
        })
        .collect();
    join_words(lead, &out)
}

/// Transposes one uniformly chosen pair of interior characters in every
/// word with at least `min_len` characters. First and last characters
/// never move.
pub fn letter_swap(question: &str, stream: &mut SeedStream, min_len: usize) -> String {
    let (lead, words) = split_words(question);
    let out: Vec<(String, &str)> = words
        .into_iter()
        .map(|(word, ws)| {
            let mut chars: Vec<char> = word.chars().collect();
            let n = chars.len();
            if n < min_len.max(4) {
                return (word.to_string(), ws);
            }
            let interior = n - 2;
            let pair = index::sample(stream, interior, 2);
            chars.swap(1 + pair.index(0), 1 + pair.index(1));
            (chars.into_iter().collect(), ws)
        })
        .collect();
    join_words(lead, &out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSwap {
    pub text: String,
    /// Set when the question was too short and passed through unchanged.
    pub degraded: bool,
}

/// Picks `k` distinct interior words and rearranges them by a uniform
/// non-identity permutation. The first and last word stay in place.
pub fn word_swap(question: &str, stream: &mut SeedStream, k: usize) -> WordSwap {
    let (lead, words) = split_words(question);
    if k < 2 || words.len() < k + 2 {
        return WordSwap {
            text: question.to_string(),
            degraded: true,
        };
    }
    let interior = words.len() - 2;
    let mut slots: Vec<usize> = index::sample(stream, interior, k)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    slots.sort_unstable();
    let mut order: Vec<usize> = (0..k).collect();
    loop {
        order.shuffle(stream);
        if order.iter().enumerate().any(|(i, &o)| i != o) {
            break;
        }
    }
    let mut out: Vec<(String, &str)> = words.iter().map(|(w, ws)| (w.to_string(), *ws)).collect();
    for (i, &slot) in slots.iter().enumerate() {
        out[slot].0 = words[slots[order[i]]].0.to_string();
    }
    WordSwap {
        text: join_words(lead, &out),
        degraded: false,
    }
}

/// Uniformly permutes option contents (identity included) and re-letters.
pub fn option_swap(options: &[OptionEntry], stream: &mut SeedStream) -> PermutedOptions {
    let mut order: Vec<usize> = (0..options.len()).collect();
    order.shuffle(stream);
    // order[new] = canonical
    let mut permutation = vec![0; options.len()];
    for (new, &canon) in order.iter().enumerate() {
        permutation[canon] = new;
    }
    PermutedOptions::from_permutation(options, permutation)
}

/// The four regular options followed by the three injected ones, in
/// canonical (unshuffled) order.
pub fn with_special_options(options: &[OptionEntry]) -> Result<Vec<OptionEntry>, PerturbError> {
    let regular = options
        .iter()
        .filter(|o| o.kind == OptionKind::Regular)
        .count();
    if options.len() != ORIGINAL_OPTION_COUNT || regular != ORIGINAL_OPTION_COUNT {
        return Err(PerturbError::NotFourRegular(regular.min(options.len())));
    }
    let mut out = options.to_vec();
    out.extend(OptionKind::SPECIALS.iter().map(|&k| OptionEntry::special('?', k)));
    reletter(&mut out);
    Ok(out)
}

/// Appends "No correct answer", "Refuse" and "I do not know", then shuffles
/// all seven uniformly. The permutation is over the canonical 7-list from
/// [`with_special_options`].
pub fn add_extra_options(
    options: &[OptionEntry],
    stream: &mut SeedStream,
) -> Result<PermutedOptions, PerturbError> {
    let canonical = with_special_options(options)?;
    Ok(option_swap(&canonical, stream))
}
