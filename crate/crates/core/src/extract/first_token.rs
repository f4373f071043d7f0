//! Probability-based answers: rank option letters by log-probability at one
//! token position of the reply.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ExtractError, ExtractionResult};
use crate::model::{AnswerLabel, ExtractionMethod, ModelResponse, TokenLogprobRecord};

/// Which token position carries the answer letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OffsetMode {
    Fixed { offset: usize },
    Auto,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenOffsetPolicy {
    #[serde(flatten)]
    pub mode: OffsetMode,
    /// Fixed offsets for specific model tags, e.g. 1 for models that open
    /// with a space token, 2 for models that open with "Answer:".
    pub overrides: BTreeMap<String, usize>,
}

impl Default for TokenOffsetPolicy {
    fn default() -> Self {
        Self {
            mode: OffsetMode::Fixed { offset: 0 },
            overrides: BTreeMap::new(),
        }
    }
}

impl TokenOffsetPolicy {
    pub fn fixed(offset: usize) -> Self {
        Self {
            mode: OffsetMode::Fixed { offset },
            ..Default::default()
        }
    }

    pub fn auto() -> Self {
        Self {
            mode: OffsetMode::Auto,
            ..Default::default()
        }
    }

    pub fn resolve(&self, response: &ModelResponse, option_ids: &[char]) -> Result<usize, ExtractError> {
        let mode = match self.overrides.get(&response.model_tag) {
            Some(&offset) => OffsetMode::Fixed { offset },
            None => self.mode,
        };
        let recorded = response.token_logprobs.len();
        match mode {
            OffsetMode::Fixed { offset } if offset < recorded => Ok(offset),
            OffsetMode::Fixed { offset } => Err(ExtractError::OffsetOutOfRange { offset, recorded }),
            OffsetMode::Auto if recorded == 0 => Err(ExtractError::OffsetOutOfRange {
                offset: 0,
                recorded,
            }),
            OffsetMode::Auto => Ok(resolve_offset_auto(response, option_ids)),
        }
    }
}

/// Log-probability of an option letter at a position. A bare letter and the
/// letter behind a single leading space (or SentencePiece `▁`) count as the
/// same candidate; the larger value wins.
pub fn letter_logprob(record: &TokenLogprobRecord, letter: char) -> Option<f64> {
    record
        .candidates
        .iter()
        .filter(|(token, _)| {
            let rest = token
                .strip_prefix(' ')
                .or_else(|| token.strip_prefix('\u{2581}'))
                .unwrap_or(token);
            let mut chars = rest.chars();
            chars.next() == Some(letter) && chars.next().is_none()
        })
        .map(|(_, &lp)| lp)
        .max_by(f64::total_cmp)
}

/// Smallest position whose probability mass on option letters is maximal.
pub fn resolve_offset_auto(response: &ModelResponse, option_ids: &[char]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for record in &response.token_logprobs {
        let mass: f64 = option_ids
            .iter()
            .filter_map(|&id| letter_logprob(record, id))
            .map(f64::exp)
            .sum();
        if mass > best.1 {
            best = (record.position, mass);
        }
    }
    best.0
}

/// Argmax over option letters at the policy's position; ties go to the
/// earliest letter, and NaN is returned when no letter is among the
/// candidates.
pub fn first_token_answer(
    response: &ModelResponse,
    option_ids: &[char],
    policy: &TokenOffsetPolicy,
) -> Result<ExtractionResult, ExtractError> {
    let position = policy.resolve(response, option_ids)?;
    let record = &response.token_logprobs[position];
    let mut best: Option<(usize, f64)> = None;
    for (slot, &id) in option_ids.iter().enumerate() {
        if let Some(lp) = letter_logprob(record, id) {
            if best.is_none_or(|(_, b)| lp > b) {
                best = Some((slot, lp));
            }
        }
    }
    Ok(match best {
        Some((slot, _)) => ExtractionResult {
            label: AnswerLabel::option(slot),
            method: ExtractionMethod::LogprobRank,
            evidence: format!("position {position}"),
        },
        None => ExtractionResult::failed(format!("no option letter at position {position}")),
    })
}

/// Probability of each option letter at `position`, in ID order. Letters
/// missing from a truncated top-k list get the smallest listed probability,
/// which bounds them from above. Entries need not sum to one.
pub fn option_probabilities(response: &ModelResponse, option_ids: &[char], position: usize) -> Vec<f64> {
    let Some(record) = response.token_logprobs.get(position) else {
        return Vec::new();
    };
    let floor = record
        .candidates
        .values()
        .copied()
        .min_by(f64::total_cmp)
        .unwrap_or(f64::NEG_INFINITY);
    option_ids
        .iter()
        .map(|&id| letter_logprob(record, id).unwrap_or(floor).exp())
        .collect()
}
