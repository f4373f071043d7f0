//! Turning a model reply into labels: one from token log-probabilities,
//! one from the generated text.

pub mod classifier;
pub mod first_token;
pub mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnswerLabel, ExtractionMethod};

pub use classifier::{ClassifierClient, ClassifierSettings};
pub use first_token::{
    first_token_answer, option_probabilities, resolve_offset_auto, OffsetMode, TokenOffsetPolicy,
};
pub use text::{extract_text_answer, Lexicon};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error("token offset {offset} requested but only {recorded} positions recorded")]
    OffsetOutOfRange { offset: usize, recorded: usize },
    #[error("classifier transport failure for request {request_id}: {reason}")]
    ClassifierTransport { request_id: String, reason: String },
    #[error("malformed classifier reply for request {request_id}: {reason}")]
    ClassifierProtocol { request_id: String, reason: String },
    #[error("lexicon: {0}")]
    Lexicon(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub label: AnswerLabel,
    pub method: ExtractionMethod,
    /// Matched substring or token position.
    pub evidence: String,
}

impl ExtractionResult {
    pub fn failed(evidence: impl Into<String>) -> Self {
        Self {
            label: AnswerLabel::NaN,
            method: ExtractionMethod::Failed,
            evidence: evidence.into(),
        }
    }
}
