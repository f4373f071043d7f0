//! Synthetic responders: deterministic stand-ins for a model with a tunable
//! position bias, content knowledge, refusal rate and disagreement between
//! the first answer token and the written answer.
//!
//! Per-item traits (whether the gold is known, which content is preferred,
//! how strongly) are keyed by item id and question text only, so they are
//! the same under every option ordering. Per-run noise is keyed by the full
//! prompt, so identical prompts always get identical replies.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{McqItem, ModelResponse, OptionKind, TokenLogprobRecord};
use crate::perturb::SeedStream;
use crate::prompt::Prompt;

/// Token layout of the reply, mirroring patterns seen in chat models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStyle {
    /// Letter is the first token.
    BareLetter,
    /// A space token comes first, the letter second.
    LeadingSpace,
    /// "Answer", ":" and then the letter as third token.
    AnswerPrefix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticResponder {
    /// Additive logit per shown position; positions past the end get 0.
    pub position_bias: Vec<f64>,
    /// Probability the responder prefers the gold content.
    pub content_skill: f64,
    /// Upper bound of the per-item content logit, drawn from (0, max].
    pub content_strength: f64,
    /// Probability the written answer names a different option than the
    /// first answer token.
    pub mismatch_prob: f64,
    pub refusal_prob: f64,
    /// Logits added to injected options: no correct answer, refuse, don't know.
    pub special_pref: [f64; 3],
    /// Probability that a given question wording shifts the preference.
    pub perturbation_sensitivity: f64,
    pub style: ResponseStyle,
    /// Omit token log-probabilities, like an endpoint without logprob support.
    pub text_only: bool,
    pub seed: u64,
    pub model_tag: String,
}

impl Default for SyntheticResponder {
    fn default() -> Self {
        Self {
            position_bias: vec![0.0; 4],
            content_skill: 0.7,
            content_strength: 2.5,
            mismatch_prob: 0.0,
            refusal_prob: 0.0,
            special_pref: [-3.0, -3.0, -3.0],
            perturbation_sensitivity: 0.0,
            style: ResponseStyle::BareLetter,
            text_only: false,
            seed: 0,
            model_tag: "synthetic".to_string(),
        }
    }
}

const REFUSALS: [&str; 3] = [
    "I cannot answer this question for safety reasons.",
    "As an AI, I must stay neutral on this topic.",
    "I'm not able to help with that question.",
];

/// Share of first-position mass placed on filler tokens.
const FILLER_MASS: f64 = 0.02;

impl SyntheticResponder {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("content_skill", self.content_skill),
            ("mismatch_prob", self.mismatch_prob),
            ("refusal_prob", self.refusal_prob),
            ("perturbation_sensitivity", self.perturbation_sensitivity),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} outside [0, 1]"));
            }
        }
        let finite = self
            .position_bias
            .iter()
            .chain(&self.special_pref)
            .chain(std::iter::once(&self.content_strength))
            .all(|v| v.is_finite());
        if !finite || self.content_strength < 0.0 {
            return Err("bias, preference and strength values must be finite".into());
        }
        Ok(())
    }

    /// Content the responder leans toward for this wording of the item.
    fn preferred_content(&self, view: &McqItem) -> (String, f64) {
        let mut regular: Vec<&str> = view
            .options
            .iter()
            .filter(|o| o.kind == OptionKind::Regular)
            .map(|o| o.content.as_str())
            .collect();
        regular.sort_unstable();
        let mut traits = SeedStream::new(self.seed, &view.item_id, "responder/item", 0, 0);
        let knows = traits.random_bool(self.content_skill);
        let guess = regular[traits.random_range(0..regular.len())];
        let strength = self.content_strength * (1.0 - traits.random::<f64>());
        let mut preferred = if knows {
            view.options[view.gold].content.as_str()
        } else {
            guess
        };
        if self.perturbation_sensitivity > 0.0 {
            let domain = format!("responder/question/{}", view.question);
            let mut wording = SeedStream::new(self.seed, &view.item_id, &domain, 0, 0);
            if wording.random_bool(self.perturbation_sensitivity) {
                preferred = regular[wording.random_range(0..regular.len())];
            }
        }
        (preferred.to_string(), strength)
    }

    /// Content term of each shown option's logit, before position bias.
    fn content_terms(&self, view: &McqItem) -> Vec<f64> {
        let (preferred, strength) = self.preferred_content(view);
        view.options
            .iter()
            .map(|o| match o.kind {
                OptionKind::Regular if o.content == preferred => strength,
                OptionKind::Regular => 0.0,
                OptionKind::NoCorrectAnswer => self.special_pref[0],
                OptionKind::Refuse => self.special_pref[1],
                OptionKind::IDoNotKnow => self.special_pref[2],
            })
            .collect()
    }

    /// First-token logits per shown option.
    pub fn logits(&self, view: &McqItem) -> Vec<f64> {
        self.content_terms(view)
            .into_iter()
            .enumerate()
            .map(|(slot, c)| c + self.position_bias.get(slot).copied().unwrap_or(0.0))
            .collect()
    }

    pub fn respond(&self, view: &McqItem, prompt: &Prompt) -> ModelResponse {
        let logits = self.logits(view);
        let n = logits.len();
        let first = argmax(&logits);
        let preferred_slot = argmax(&self.content_terms(view));

        let domain = format!("responder/run/{}", prompt.digest());
        let mut run = SeedStream::new(self.seed, &view.item_id, &domain, 0, 0);
        let refuse = run.random_bool(self.refusal_prob);
        let mismatch = run.random_bool(self.mismatch_prob);
        let other = {
            let k = run.random_range(0..n - 1);
            if k >= first {
                k + 1
            } else {
                k
            }
        };
        let template = run.random_range(0..3usize);
        let refusal_text = REFUSALS[run.random_range(0..REFUSALS.len())];

        let text = if refuse {
            refusal_text.to_string()
        } else {
            let slot = match (mismatch, preferred_slot != first) {
                (false, _) => first,
                (true, true) => preferred_slot,
                (true, false) => other,
            };
            let o = &view.options[slot];
            match (self.style, template) {
                (ResponseStyle::AnswerPrefix, _) => format!("Answer: {}", o.id),
                (ResponseStyle::LeadingSpace, 0) => format!(" {}", o.id),
                (ResponseStyle::LeadingSpace, _) => format!(" {}. {}", o.id, o.content),
                (ResponseStyle::BareLetter, 0) => o.id.to_string(),
                (ResponseStyle::BareLetter, 1) => format!("{}. {}", o.id, o.content),
                (ResponseStyle::BareLetter, _) => format!("The answer is ({}) {}.", o.id, o.content),
            }
        };

        let token_logprobs = if self.text_only {
            Vec::new()
        } else {
            self.token_layout(view, &logits)
        };
        ModelResponse {
            text,
            token_logprobs,
            model_tag: self.model_tag.clone(),
        }
    }

    fn token_layout(&self, view: &McqItem, logits: &[f64]) -> Vec<TokenLogprobRecord> {
        let letters = log_softmax(logits);
        let letter_record = |position: usize| TokenLogprobRecord {
            position,
            candidates: view
                .options
                .iter()
                .zip(&letters)
                .map(|(o, lp)| (o.id.to_string(), lp + (1.0 - FILLER_MASS).ln()))
                .chain(std::iter::once(("<filler>".to_string(), FILLER_MASS.ln())))
                .collect(),
        };
        let fixed = |position: usize, pairs: &[(&str, f64)]| TokenLogprobRecord {
            position,
            candidates: pairs
                .iter()
                .map(|(t, p)| (t.to_string(), p.ln()))
                .collect::<BTreeMap<_, _>>(),
        };
        match self.style {
            ResponseStyle::BareLetter => vec![
                letter_record(0),
                fixed(1, &[(".", 0.9), ("\n", 0.1)]),
                fixed(2, &[("</s>", 1.0)]),
            ],
            ResponseStyle::LeadingSpace => vec![
                fixed(0, &[("\u{2581}", 0.995), ("A", 0.005)]),
                letter_record(1),
                fixed(2, &[(".", 0.9), ("\n", 0.1)]),
            ],
            ResponseStyle::AnswerPrefix => vec![
                fixed(0, &[("Answer", 0.95), ("The", 0.05)]),
                fixed(1, &[(":", 1.0)]),
                letter_record(2),
            ],
        }
    }
}

fn argmax(values: &[f64]) -> usize {
    crate::debias::argmax(values).unwrap_or(0)
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - log_z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{first_token_answer, TokenOffsetPolicy};
    use crate::model::AnswerLabel;
    use crate::prompt::{build_prompt, PromptTemplate};

    fn item(i: usize) -> McqItem {
        McqItem::new(
            Some(format!("it{i}")),
            format!("Question number {i}?"),
            &[format!("w{i}"), format!("x{i}"), format!("y{i}"), format!("z{i}")],
            i % 4,
            "t",
            "s",
        )
        .unwrap()
    }

    #[test]
    fn perfect_responder_always_gold() {
        let r = SyntheticResponder {
            content_skill: 1.0,
            ..Default::default()
        };
        for i in 0..40 {
            let it = item(i);
            let resp = r.respond(&it, &build_prompt(&it, &PromptTemplate::default()));
            let ft = first_token_answer(&resp, &it.option_ids(), &TokenOffsetPolicy::default()).unwrap();
            assert_eq!(ft.label, it.gold_label());
            assert!(resp.clone().validate().is_ok());
        }
    }

    #[test]
    fn styles_put_letter_where_expected() {
        for (style, pos) in [
            (ResponseStyle::BareLetter, 0),
            (ResponseStyle::LeadingSpace, 1),
            (ResponseStyle::AnswerPrefix, 2),
        ] {
            let r = SyntheticResponder {
                style,
                content_skill: 1.0,
                ..Default::default()
            };
            let it = item(2);
            let resp = r.respond(&it, &build_prompt(&it, &PromptTemplate::default()));
            assert_eq!(resp.token_logprobs.len(), 3);
            assert_eq!(crate::extract::resolve_offset_auto(&resp, &it.option_ids()), pos);
            let ft = first_token_answer(&resp, &it.option_ids(), &TokenOffsetPolicy::auto()).unwrap();
            assert_eq!(ft.label, AnswerLabel::C);
        }
    }

    #[test]
    fn deterministic_per_prompt() {
        let r = SyntheticResponder {
            mismatch_prob: 0.5,
            refusal_prob: 0.2,
            ..Default::default()
        };
        let it = item(5);
        let p = build_prompt(&it, &PromptTemplate::default());
        assert_eq!(r.respond(&it, &p), r.respond(&it, &p));
    }

    #[test]
    fn validation() {
        assert!(SyntheticResponder::default().validate().is_ok());
        let bad = SyntheticResponder {
            mismatch_prob: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
