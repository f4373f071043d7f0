//! Client for an external answer classifier reached over HTTP.
//!
//! Wire contract (JSON over POST):
//!
//! ```text
//! request:  {"request_id": "...", "text": "...", "options": [{"id": "A", "content": "..."}],
//!            "input": "<reply>\nReferences:\nA. ...\nB. ..."}
//! response: {"label": "C", "confidence": 0.97}
//! ```
//!
//! `label` is an option letter, one of X/Y/Z, or NaN. `input` repeats the
//! reply with a rendered reference block for classifiers trained on that
//! layout; services that only read `text` and `options` may ignore it.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::text::{extract_text_answer, Lexicon};
use super::{ExtractError, ExtractionResult};
use crate::model::{AnswerLabel, ExtractionMethod, OptionEntry, OptionKind};

#[derive(Debug, Serialize)]
pub struct ClassifierOption<'a> {
    pub id: String,
    pub content: &'a str,
}

#[derive(Debug, Serialize)]
pub struct ClassifierRequest<'a> {
    pub request_id: &'a str,
    pub text: &'a str,
    pub options: Vec<ClassifierOption<'a>>,
    pub input: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ClassifierReply {
    pub label: String,
    #[serde(default)]
    pub confidence: Option<f64>,
}

/// Reply text followed by a `References:` block of the options.
pub fn render_reference_input(text: &str, options: &[OptionEntry]) -> String {
    let mut out = format!("{text}\nReferences:");
    for o in options {
        out.push_str(&format!("\n{}. {}", o.id, o.content));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSettings {
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Fall back to the rule-based cascade when the service is unreachable.
    #[serde(default = "default_fallback")]
    pub fallback: bool,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_fallback() -> bool {
    true
}

pub struct ClassifierClient {
    settings: ClassifierSettings,
    agent: ureq::Agent,
}

impl ClassifierClient {
    pub fn new(settings: ClassifierSettings) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(settings.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { settings, agent }
    }

    pub fn settings(&self) -> &ClassifierSettings {
        &self.settings
    }

    fn call(&self, request: &ClassifierRequest<'_>) -> Result<String, String> {
        let body = serde_json::to_string(request).map_err(|e| e.to_string())?;
        let mut resp = self
            .agent
            .post(&self.settings.endpoint)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {text}"));
        }
        Ok(text)
    }

    /// Classifies one reply. Transport failures fall back to the pattern
    /// cascade when enabled; malformed replies are always errors.
    pub fn classify(
        &self,
        request_id: &str,
        text: &str,
        options: &[OptionEntry],
        lexicon: &Lexicon,
    ) -> Result<ExtractionResult, ExtractError> {
        let request = ClassifierRequest {
            request_id,
            text,
            options: options
                .iter()
                .map(|o| ClassifierOption {
                    id: o.id.to_string(),
                    content: &o.content,
                })
                .collect(),
            input: render_reference_input(text, options),
        };
        let body = match self.call(&request) {
            Ok(body) => body,
            Err(reason) if self.settings.fallback => {
                log::warn!("classifier unavailable for {request_id}, using pattern cascade: {reason}");
                return Ok(extract_text_answer(text, options, lexicon));
            }
            Err(reason) => {
                return Err(ExtractError::ClassifierTransport {
                    request_id: request_id.to_string(),
                    reason,
                })
            }
        };
        let protocol = |reason: String| ExtractError::ClassifierProtocol {
            request_id: request_id.to_string(),
            reason,
        };
        let reply: ClassifierReply =
            serde_json::from_str(&body).map_err(|e| protocol(format!("{e}: {body}")))?;
        let label = map_classifier_label(&reply.label, options).map_err(protocol)?;
        let evidence = match reply.confidence {
            Some(c) => format!("classifier {} ({c:.3})", reply.label),
            None => format!("classifier {}", reply.label),
        };
        if label == AnswerLabel::NaN {
            return Ok(ExtractionResult::failed(evidence));
        }
        Ok(ExtractionResult {
            label,
            method: ExtractionMethod::ExternalClassifier,
            evidence,
        })
    }
}

/// Maps a classifier class onto the label space of `options`. X/Y/Z become
/// the injected option of matching kind when one is present.
pub fn map_classifier_label(raw: &str, options: &[OptionEntry]) -> Result<AnswerLabel, String> {
    let label: AnswerLabel = raw.parse()?;
    if let Some(letter) = label.letter() {
        return match options.iter().position(|o| o.id == letter) {
            Some(slot) => Ok(AnswerLabel::option(slot)),
            None => Err(format!("label {raw} not among {} options", options.len())),
        };
    }
    let kind = match label {
        AnswerLabel::X => OptionKind::NoCorrectAnswer,
        AnswerLabel::Y => OptionKind::Refuse,
        AnswerLabel::Z => OptionKind::IDoNotKnow,
        _ => return Ok(AnswerLabel::NaN),
    };
    Ok(options
        .iter()
        .position(|o| o.kind == kind)
        .map(AnswerLabel::option)
        .unwrap_or(label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lettered_options;

    #[test]
    fn reference_block_layout() {
        let opts = lettered_options(&["14", "20", "40", "60"]);
        assert_eq!(
            render_reference_input("so the answer is (C) 40.", &opts),
            "so the answer is (C) 40.\nReferences:\nA. 14\nB. 20\nC. 40\nD. 60"
        );
    }

    #[test]
    fn label_mapping() {
        let opts = lettered_options(&["a", "b", "c", "d"]);
        assert_eq!(map_classifier_label("C", &opts), Ok(AnswerLabel::C));
        assert_eq!(map_classifier_label("Y", &opts), Ok(AnswerLabel::Y));
        assert_eq!(map_classifier_label("NaN", &opts), Ok(AnswerLabel::NaN));
        assert!(map_classifier_label("F", &opts).is_err());
        assert!(map_classifier_label("maybe", &opts).is_err());
        let mut seven = opts.clone();
        seven.extend(OptionKind::SPECIALS.map(|k| OptionEntry::special('?', k)));
        crate::model::reletter(&mut seven);
        assert_eq!(map_classifier_label("Y", &seven), Ok(AnswerLabel::F));
    }
}
