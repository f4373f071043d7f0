//! Accuracy, recall spread (RStD), answer entropy, mismatch, majority vote,
//! answer floating and answer distributions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnswerLabel, ContentClass, RunRecord, OPTION_LETTERS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("empty record set")]
    Empty,
    #[error("RStD needs at least 2 defined recalls, got {0}")]
    TooFewRecalls(usize),
    #[error("record {0} has no debiased label")]
    MissingDebiased(String),
    #[error("vote sets are not aligned: {0}")]
    Misaligned(String),
}

/// Which extracted answer a metric reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    FirstToken,
    Text,
    Debiased,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::FirstToken, Channel::Text, Channel::Debiased];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::FirstToken => "first_token",
            Channel::Text => "text",
            Channel::Debiased => "debiased",
        }
    }

    pub fn label(self, record: &RunRecord) -> Result<AnswerLabel, MetricsError> {
        match self {
            Channel::FirstToken => Ok(record.first_token_label),
            Channel::Text => Ok(record.text_label),
            Channel::Debiased => record
                .debiased_label
                .ok_or_else(|| MetricsError::MissingDebiased(record.key.to_string())),
        }
    }

    pub fn content(self, record: &RunRecord) -> Result<ContentClass, MetricsError> {
        match self {
            Channel::FirstToken => Ok(record.first_token_content.clone()),
            Channel::Text => Ok(record.text_content.clone()),
            Channel::Debiased => record
                .debiased_content
                .clone()
                .ok_or_else(|| MetricsError::MissingDebiased(record.key.to_string())),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Correct / total counts; adds commutatively.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn merge(self, other: Tally) -> Tally {
        Tally {
            correct: self.correct + other.correct,
            total: self.total + other.total,
        }
    }

    pub fn fraction(self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

/// Counts correct records. NaN and X/Y/Z are never correct because gold
/// labels are always regular options.
pub fn tally<'a>(
    records: impl IntoIterator<Item = &'a RunRecord>,
    channel: Channel,
) -> Result<Tally, MetricsError> {
    let mut t = Tally::default();
    for r in records {
        t.total += 1;
        if channel.label(r)? == r.gold_label {
            t.correct += 1;
        }
    }
    Ok(t)
}

pub fn accuracy<'a>(
    records: impl IntoIterator<Item = &'a RunRecord>,
    channel: Channel,
) -> Result<f64, MetricsError> {
    tally(records, channel)?.fraction().ok_or(MetricsError::Empty)
}

/// Per-option-ID recall with support counts. IDs without support have no
/// recall and are left out of RStD.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecallVector {
    /// Recall per option ID; `None` when the ID never held the gold answer.
    pub recalls: BTreeMap<char, Option<f64>>,
    pub support: BTreeMap<char, usize>,
}

impl RecallVector {
    /// Recall over the option IDs of the gold answers as shown.
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a RunRecord>,
        channel: Channel,
    ) -> Result<Self, MetricsError> {
        let mut tallies: BTreeMap<char, Tally> = BTreeMap::new();
        for r in records {
            let Some(letter) = r.gold_label.letter() else {
                continue;
            };
            let entry = tallies.entry(letter).or_default();
            entry.total += 1;
            if channel.label(r)? == r.gold_label {
                entry.correct += 1;
            }
        }
        Ok(Self::from_tallies(&tallies))
    }

    pub fn from_tallies(tallies: &BTreeMap<char, Tally>) -> Self {
        RecallVector {
            recalls: tallies.iter().map(|(&id, t)| (id, t.fraction())).collect(),
            support: tallies.iter().map(|(&id, t)| (id, t.total)).collect(),
        }
    }

    /// Recall values for IDs A, B, ... with unknown support.
    pub fn from_recalls(recalls: &[f64]) -> Self {
        RecallVector {
            recalls: OPTION_LETTERS.iter().zip(recalls).map(|(&id, &r)| (id, Some(r))).collect(),
            support: BTreeMap::new(),
        }
    }

    /// Defined recalls in ID order.
    pub fn defined(&self) -> Vec<(char, f64)> {
        self.recalls
            .iter()
            .filter_map(|(&id, r)| r.map(|r| (id, r)))
            .collect()
    }

    pub fn recall(&self, id: char) -> Option<f64> {
        self.recalls.get(&id).copied().flatten()
    }
}

/// Population standard deviation of recall values.
pub fn rstd_of(recalls: &[f64]) -> Result<f64, MetricsError> {
    if recalls.len() < 2 {
        return Err(MetricsError::TooFewRecalls(recalls.len()));
    }
    let n = recalls.len() as f64;
    let mean = recalls.iter().sum::<f64>() / n;
    let var = recalls.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// RStD over the defined recalls of `rv`.
pub fn rstd(rv: &RecallVector, expected_ids: usize) -> Result<f64, MetricsError> {
    let recalls: Vec<f64> = rv.defined().into_iter().map(|(_, r)| r).collect();
    if recalls.len() < expected_ids {
        log::warn!(
            "RStD over {} of {expected_ids} option IDs; IDs without gold support are excluded",
            recalls.len()
        );
    }
    rstd_of(&recalls)
}

/// Answers collected from N runs of the same question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerMultiset<T> {
    answers: Vec<T>,
}

impl<T: Ord> AnswerMultiset<T> {
    pub fn new(answers: Vec<T>) -> Result<Self, MetricsError> {
        if answers.is_empty() {
            return Err(MetricsError::Empty);
        }
        Ok(Self { answers })
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    fn counts(&self) -> BTreeMap<&T, usize> {
        let mut counts = BTreeMap::new();
        for a in &self.answers {
            *counts.entry(a).or_insert(0usize) += 1;
        }
        counts
    }

    /// Shannon entropy in bits of the empirical answer distribution.
    pub fn entropy(&self) -> f64 {
        let n = self.answers.len() as f64;
        let h: f64 = self
            .counts()
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum();
        // -0.0 for a single outcome
        h.max(0.0)
    }

    /// Most frequent answer; ties go to the smallest in `Ord`, which for
    /// [`ContentClass`] is canonical option order then X, Y, Z, NaN.
    pub fn majority(&self) -> &T {
        let counts = self.counts();
        let mut best: Option<(&T, usize)> = None;
        for (a, c) in counts {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((a, c));
            }
        }
        best.expect("non-empty").0
    }
}

pub fn entropy<T: Ord>(answers: &AnswerMultiset<T>) -> f64 {
    answers.entropy()
}

pub fn majority_vote<T: Ord + Clone>(answers: &[T]) -> Result<T, MetricsError> {
    Ok(AnswerMultiset::new(answers.to_vec())?.majority().clone())
}

/// Fraction of records whose two channels land on different content.
pub fn mismatch_rate<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Result<f64, MetricsError> {
    let mut t = Tally::default();
    for r in records {
        t.total += 1;
        if r.first_token_content != r.text_content {
            t.correct += 1;
        }
    }
    t.fraction().ok_or(MetricsError::Empty)
}

/// Fraction of items whose voted content changed between two conditions.
pub fn floating_rate(
    before: &BTreeMap<String, ContentClass>,
    after: &BTreeMap<String, ContentClass>,
) -> Result<f64, MetricsError> {
    if before.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(id) = before.keys().find(|k| !after.contains_key(*k)) {
        return Err(MetricsError::Misaligned(format!("{id} missing after")));
    }
    if let Some(id) = after.keys().find(|k| !before.contains_key(*k)) {
        return Err(MetricsError::Misaligned(format!("{id} missing before")));
    }
    let changed = before.iter().filter(|(k, v)| after[*k] != **v).count();
    Ok(changed as f64 / before.len() as f64)
}

/// Histogram bins: regular contents by canonical position, then X, Y, Z, NaN.
pub const DISTRIBUTION_BINS: [&str; 8] = ["A", "B", "C", "D", "X", "Y", "Z", "NaN"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
}

impl AnswerDistribution {
    pub fn frequency(&self, bin: &str) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        *self.counts.get(bin).unwrap_or(&0) as f64 / self.total as f64
    }

    /// Share of answers on the out-of-option classes X, Y and Z.
    pub fn special_mass(&self) -> f64 {
        ["X", "Y", "Z"].iter().map(|b| self.frequency(b)).sum()
    }

    pub fn frequencies(&self) -> Vec<(&'static str, f64)> {
        DISTRIBUTION_BINS.iter().map(|&b| (b, self.frequency(b))).collect()
    }
}

pub fn answer_distribution<'a>(answers: impl IntoIterator<Item = &'a ContentClass>) -> AnswerDistribution {
    let mut counts: BTreeMap<String, usize> = DISTRIBUTION_BINS.iter().map(|b| (b.to_string(), 0)).collect();
    let mut total = 0;
    for a in answers {
        *counts.entry(a.short_name()).or_insert(0) += 1;
        total += 1;
    }
    AnswerDistribution { counts, total }
}
