//! Domain types shared across the harness.
//!
//! Everything here is plain data: immutable once validated, `Send + Sync`,
//! and serializable so that replay logs and record files can carry it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Option identifiers in presentation order.
pub const OPTION_LETTERS: [char; 7] = ['A', 'B', 'C', 'D', 'E', 'F', 'G'];

/// Number of options in an unmodified item.
pub const ORIGINAL_OPTION_COUNT: usize = 4;

/// Number of options once the three out-of-choice options are injected.
pub const EXTRA_OPTION_COUNT: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("option count {0} is neither 4 nor 7")]
    OptionCount(usize),
    #[error("gold out of range: index {gold} with {len} options")]
    GoldOutOfRange { gold: usize, len: usize },
    #[error("empty option content at {0}")]
    EmptyContent(char),
    #[error("duplicate option content {0:?}")]
    DuplicateContent(String),
    #[error("option ids not consecutive from A: found {found} at slot {slot}")]
    NonConsecutiveIds { slot: usize, found: char },
    #[error("special option kind {0:?} not allowed in a 4-option item")]
    UnexpectedSpecial(OptionKind),
    #[error("7-option item must carry exactly one option of each special kind")]
    SpecialKindsIncomplete,
    #[error("gold points at a non-regular option")]
    GoldNotRegular,
    #[error("token log-probability record at position {position} is invalid: {reason}")]
    BadLogprobRecord { position: usize, reason: String },
    #[error("token positions must be 0..P without gaps, found {found} at slot {slot}")]
    PositionGap { slot: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContentError {
    #[error("label {label} is not present among {available} options")]
    UnknownLabel { label: AnswerLabel, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Regular,
    NoCorrectAnswer,
    Refuse,
    IDoNotKnow,
}

impl OptionKind {
    /// The injected kinds in canonical append order.
    pub const SPECIALS: [OptionKind; 3] = [
        OptionKind::NoCorrectAnswer,
        OptionKind::Refuse,
        OptionKind::IDoNotKnow,
    ];

    /// Option text used when this kind is injected.
    pub fn injected_content(self) -> Option<&'static str> {
        match self {
            OptionKind::Regular => None,
            OptionKind::NoCorrectAnswer => Some("No correct answer"),
            OptionKind::Refuse => Some("Refuse"),
            OptionKind::IDoNotKnow => Some("I do not know"),
        }
    }

    /// The out-of-option label this kind stands for.
    pub fn special_label(self) -> Option<AnswerLabel> {
        match self {
            OptionKind::Regular => None,
            OptionKind::NoCorrectAnswer => Some(AnswerLabel::X),
            OptionKind::Refuse => Some(AnswerLabel::Y),
            OptionKind::IDoNotKnow => Some(AnswerLabel::Z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OptionEntry {
    pub id: char,
    pub content: String,
    pub kind: OptionKind,
}

impl OptionEntry {
    pub fn regular(id: char, content: impl Into<String>) -> Self {
        Self {
            id,
            content: content.into(),
            kind: OptionKind::Regular,
        }
    }

    pub fn special(id: char, kind: OptionKind) -> Self {
        Self {
            id,
            content: kind.injected_content().unwrap_or_default().to_string(),
            kind,
        }
    }
}

/// Builds regular options lettered A, B, C, ... from plain contents.
pub fn lettered_options<S: AsRef<str>>(contents: &[S]) -> Vec<OptionEntry> {
    contents
        .iter()
        .zip(OPTION_LETTERS)
        .map(|(c, id)| OptionEntry::regular(id, c.as_ref()))
        .collect()
}

/// Re-assigns consecutive letters to a reordered option list.
pub fn reletter(options: &mut [OptionEntry]) {
    for (opt, id) in options.iter_mut().zip(OPTION_LETTERS) {
        opt.id = id;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqItem {
    pub item_id: String,
    pub question: String,
    pub options: Vec<OptionEntry>,
    /// 0-based index of the correct option.
    pub gold: usize,
    pub task: String,
    pub subcategory: String,
}

impl McqItem {
    /// Builds an item from plain option contents. When `item_id` is `None`
    /// a stable content digest is used instead.
    pub fn new<S: AsRef<str>>(
        item_id: Option<String>,
        question: impl Into<String>,
        contents: &[S],
        gold: usize,
        task: impl Into<String>,
        subcategory: impl Into<String>,
    ) -> Result<Self, ValidationError> {
        let question = question.into();
        let task = task.into();
        let options = lettered_options(contents);
        let item_id = item_id.unwrap_or_else(|| content_digest(&task, &question, &options));
        McqItem {
            item_id,
            question,
            options,
            gold,
            task,
            subcategory: subcategory.into(),
        }
        .validate()
    }

    /// Returns the item iff every structural invariant holds.
    pub fn validate(self) -> Result<Self, ValidationError> {
        let len = self.options.len();
        if len != ORIGINAL_OPTION_COUNT && len != EXTRA_OPTION_COUNT {
            return Err(ValidationError::OptionCount(len));
        }
        if self.gold >= len {
            return Err(ValidationError::GoldOutOfRange {
                gold: self.gold,
                len,
            });
        }
        for (slot, (opt, expected)) in self.options.iter().zip(OPTION_LETTERS).enumerate() {
            if opt.id != expected {
                return Err(ValidationError::NonConsecutiveIds {
                    slot,
                    found: opt.id,
                });
            }
            if opt.content.trim().is_empty() {
                return Err(ValidationError::EmptyContent(opt.id));
            }
        }
        if len == ORIGINAL_OPTION_COUNT {
            if let Some(opt) = self.options.iter().find(|o| o.kind != OptionKind::Regular) {
                return Err(ValidationError::UnexpectedSpecial(opt.kind));
            }
        } else {
            for kind in OptionKind::SPECIALS {
                let count = self.options.iter().filter(|o| o.kind == kind).count();
                if count != 1 {
                    return Err(ValidationError::SpecialKindsIncomplete);
                }
            }
        }
        for (i, a) in self.options.iter().enumerate() {
            if self.options[..i].iter().any(|b| b.content == a.content) {
                return Err(ValidationError::DuplicateContent(a.content.clone()));
            }
        }
        if self.options[self.gold].kind != OptionKind::Regular {
            return Err(ValidationError::GoldNotRegular);
        }
        Ok(self)
    }

    pub fn option_ids(&self) -> Vec<char> {
        self.options.iter().map(|o| o.id).collect()
    }

    pub fn gold_label(&self) -> AnswerLabel {
        AnswerLabel::option(self.gold)
    }
}

/// Stable hex digest over an item's task, question and option contents.
pub fn content_digest(task: &str, question: &str, options: &[OptionEntry]) -> String {
    let mut hasher = Sha256::new();
    for part in std::iter::once(task)
        .chain(std::iter::once(question))
        .chain(options.iter().map(|o| o.content.as_str()))
    {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hex::encode(&hasher.finalize()[..12])
}

/// Hex SHA-256 of arbitrary text; used for prompt digests.
pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// The closed answer vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnswerLabel {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    /// No correct answer.
    X,
    /// Refusal.
    Y,
    /// I do not know.
    Z,
    /// Unparseable or self-contradictory.
    NaN,
}

impl AnswerLabel {
    const OPTIONS: [AnswerLabel; 7] = [
        AnswerLabel::A,
        AnswerLabel::B,
        AnswerLabel::C,
        AnswerLabel::D,
        AnswerLabel::E,
        AnswerLabel::F,
        AnswerLabel::G,
    ];

    /// Label of the option at a 0-based slot. Panics beyond G.
    pub fn option(index: usize) -> Self {
        Self::OPTIONS[index]
    }

    pub fn from_letter(letter: char) -> Option<Self> {
        OPTION_LETTERS
            .iter()
            .position(|&l| l == letter)
            .map(Self::option)
    }

    pub fn option_index(self) -> Option<usize> {
        Self::OPTIONS.iter().position(|&l| l == self)
    }

    pub fn letter(self) -> Option<char> {
        self.option_index().map(|i| OPTION_LETTERS[i])
    }

    pub fn is_special(self) -> bool {
        matches!(self, AnswerLabel::X | AnswerLabel::Y | AnswerLabel::Z)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerLabel::A => "A",
            AnswerLabel::B => "B",
            AnswerLabel::C => "C",
            AnswerLabel::D => "D",
            AnswerLabel::E => "E",
            AnswerLabel::F => "F",
            AnswerLabel::G => "G",
            AnswerLabel::X => "X",
            AnswerLabel::Y => "Y",
            AnswerLabel::Z => "Z",
            AnswerLabel::NaN => "NaN",
        }
    }
}

impl fmt::Display for AnswerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnswerLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "X" => Ok(AnswerLabel::X),
            "Y" => Ok(AnswerLabel::Y),
            "Z" => Ok(AnswerLabel::Z),
            "NaN" | "nan" | "NAN" => Ok(AnswerLabel::NaN),
            _ => {
                let mut chars = s.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => {
                        AnswerLabel::from_letter(c).ok_or_else(|| format!("unknown label {s:?}"))
                    }
                    _ => Err(format!("unknown label {s:?}")),
                }
            }
        }
    }
}

/// What an answer means independently of how options were lettered.
///
/// Regular options are identified by their canonical (unpermuted) index, so
/// the derived ordering is canonical option order followed by X, Y, Z, NaN.
/// Majority-vote tie breaking relies on that ordering.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentClass {
    Option { index: usize, content: String },
    NoCorrectAnswer,
    Refusal,
    DontKnow,
    Unparsed,
}

impl ContentClass {
    pub fn is_special(&self) -> bool {
        matches!(
            self,
            ContentClass::NoCorrectAnswer | ContentClass::Refusal | ContentClass::DontKnow
        )
    }

    /// Short name: the canonical letter for regular contents, else X/Y/Z/NaN.
    pub fn short_name(&self) -> String {
        match self {
            ContentClass::Option { index, .. } => OPTION_LETTERS
                .get(*index)
                .map(|c| c.to_string())
                .unwrap_or_else(|| format!("#{index}")),
            ContentClass::NoCorrectAnswer => "X".into(),
            ContentClass::Refusal => "Y".into(),
            ContentClass::DontKnow => "Z".into(),
            ContentClass::Unparsed => "NaN".into(),
        }
    }

    fn from_special(label: AnswerLabel) -> Option<Self> {
        match label {
            AnswerLabel::X => Some(ContentClass::NoCorrectAnswer),
            AnswerLabel::Y => Some(ContentClass::Refusal),
            AnswerLabel::Z => Some(ContentClass::DontKnow),
            AnswerLabel::NaN => Some(ContentClass::Unparsed),
            _ => None,
        }
    }
}

/// A reordered option list together with the permutation that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutedOptions {
    pub options: Vec<OptionEntry>,
    /// `permutation[canonical_index] == new_index`.
    pub permutation: Vec<usize>,
}

impl PermutedOptions {
    pub fn identity(options: Vec<OptionEntry>) -> Self {
        let permutation = (0..options.len()).collect();
        Self {
            options,
            permutation,
        }
    }

    /// Applies `permutation` to canonical options and re-letters them.
    pub fn from_permutation(canonical: &[OptionEntry], permutation: Vec<usize>) -> Self {
        debug_assert_eq!(canonical.len(), permutation.len());
        let mut options = canonical.to_vec();
        for (canon, &new) in permutation.iter().enumerate() {
            options[new] = canonical[canon].clone();
        }
        reletter(&mut options);
        Self {
            options,
            permutation,
        }
    }

    /// Canonical index of the option shown at `slot`.
    pub fn canonical_index(&self, slot: usize) -> Option<usize> {
        self.permutation.iter().position(|&p| p == slot)
    }
}

/// Maps a label onto the content class it denotes under a given ordering.
pub fn content_of(label: AnswerLabel, permuted: &PermutedOptions) -> Result<ContentClass, ContentError> {
    if let Some(class) = ContentClass::from_special(label) {
        return Ok(class);
    }
    let unknown = || ContentError::UnknownLabel {
        label,
        available: permuted.options.len(),
    };
    let slot = label.option_index().ok_or_else(unknown)?;
    let entry = permuted.options.get(slot).ok_or_else(unknown)?;
    Ok(match entry.kind {
        OptionKind::Regular => ContentClass::Option {
            index: permuted.canonical_index(slot).ok_or_else(unknown)?,
            content: entry.content.clone(),
        },
        OptionKind::NoCorrectAnswer => ContentClass::NoCorrectAnswer,
        OptionKind::Refuse => ContentClass::Refusal,
        OptionKind::IDoNotKnow => ContentClass::DontKnow,
    })
}

/// Candidate tokens and their natural-log probabilities at one position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprobRecord {
    pub position: usize,
    pub candidates: BTreeMap<String, f64>,
}

impl TokenLogprobRecord {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let bad = |reason: &str| ValidationError::BadLogprobRecord {
            position: self.position,
            reason: reason.to_string(),
        };
        if self.candidates.is_empty() {
            return Err(bad("no candidates"));
        }
        if self.candidates.values().any(|&lp| lp.is_nan() || lp > 0.0) {
            return Err(bad("log-probability above zero or NaN"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub token_logprobs: Vec<TokenLogprobRecord>,
    pub model_tag: String,
}

impl ModelResponse {
    pub fn validate(self) -> Result<Self, ValidationError> {
        for (slot, record) in self.token_logprobs.iter().enumerate() {
            if record.position != slot {
                return Err(ValidationError::PositionGap {
                    slot,
                    found: record.position,
                });
            }
            record.validate()?;
        }
        Ok(self)
    }

    pub fn has_logprobs(&self) -> bool {
        !self.token_logprobs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationType {
    None,
    LetterTypos,
    LetterSwap,
    WordSwap,
    OptionSwap,
    ExtraOptions,
}

impl PerturbationType {
    pub const ALL: [PerturbationType; 6] = [
        PerturbationType::None,
        PerturbationType::LetterTypos,
        PerturbationType::LetterSwap,
        PerturbationType::WordSwap,
        PerturbationType::OptionSwap,
        PerturbationType::ExtraOptions,
    ];

    /// Perturbations that rewrite the question text.
    pub const TEXTUAL: [PerturbationType; 3] = [
        PerturbationType::LetterTypos,
        PerturbationType::LetterSwap,
        PerturbationType::WordSwap,
    ];

    /// Columns of the entropy table.
    pub const ENTROPY: [PerturbationType; 4] = [
        PerturbationType::LetterTypos,
        PerturbationType::LetterSwap,
        PerturbationType::WordSwap,
        PerturbationType::OptionSwap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationType::None => "none",
            PerturbationType::LetterTypos => "letter_typos",
            PerturbationType::LetterSwap => "letter_swap",
            PerturbationType::WordSwap => "word_swap",
            PerturbationType::OptionSwap => "option_swap",
            PerturbationType::ExtraOptions => "extra_options",
        }
    }

    pub fn is_textual(self) -> bool {
        Self::TEXTUAL.contains(&self)
    }
}

impl fmt::Display for PerturbationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown perturbation type {s:?}"))
    }
}

/// Identifies one inference within a campaign.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub item_id: String,
    pub perturbation_type: PerturbationType,
    pub perturbation_index: u32,
    pub shuffle_index: u32,
}

impl RunKey {
    pub fn new(
        item_id: impl Into<String>,
        perturbation_type: PerturbationType,
        perturbation_index: u32,
        shuffle_index: u32,
    ) -> Self {
        Self {
            item_id: item_id.into(),
            perturbation_type,
            perturbation_index,
            shuffle_index,
        }
    }
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.item_id, self.perturbation_type, self.perturbation_index, self.shuffle_index
        )
    }
}

/// How a label was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    LogprobRank,
    PatternId,
    PatternContent,
    SpecialPhrase,
    ExternalClassifier,
    Failed,
}

/// One scored inference: the response plus both extraction channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub key: RunKey,
    pub task: String,
    pub subcategory: String,
    pub prompt: String,
    /// Options as shown, after permutation and re-lettering.
    pub options: Vec<OptionEntry>,
    pub option_permutation: Vec<usize>,
    pub gold_label: AnswerLabel,
    pub response: ModelResponse,
    /// Token position the first-token label was read from.
    pub first_token_offset: Option<usize>,
    /// Probability per shown option ID at that position, in ID order.
    pub option_probs: Vec<f64>,
    pub first_token_label: AnswerLabel,
    pub first_token_method: ExtractionMethod,
    pub text_label: AnswerLabel,
    pub text_method: ExtractionMethod,
    pub first_token_content: ContentClass,
    pub text_content: ContentClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debiased_label: Option<AnswerLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debiased_content: Option<ContentClass>,
}

impl RunRecord {
    pub fn permuted_options(&self) -> PermutedOptions {
        PermutedOptions {
            options: self.options.clone(),
            permutation: self.option_permutation.clone(),
        }
    }
}
