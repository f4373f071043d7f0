use crate::extract::{
    extract_text_answer, first_token_answer, option_probabilities, ClassifierClient, ExtractError,
    ExtractionResult, Lexicon, TokenOffsetPolicy,
};
use crate::model::{content_of, ModelResponse, RunRecord};
use crate::protocol::plan::PlannedRun;

/// Extraction settings applied to every reply of a campaign.
pub struct Extractor {
    pub policy: TokenOffsetPolicy,
    pub lexicon: Lexicon,
    pub classifier: Option<ClassifierClient>,
    pub first_token: bool,
    pub text: bool,
}

impl Default for Extractor {
    fn default() -> Self {
        Self {
            policy: TokenOffsetPolicy::default(),
            lexicon: Lexicon::default(),
            classifier: None,
            first_token: true,
            text: true,
        }
    }
}

impl Extractor {
    pub fn score(&self, run: &PlannedRun, response: ModelResponse) -> Result<RunRecord, ExtractError> {
        let ids = run.view.option_ids();
        let (first, offset, option_probs) = if !self.first_token {
            (ExtractionResult::failed("first-token channel disabled"), None, Vec::new())
        } else if !response.has_logprobs() {
            (ExtractionResult::failed("no token log-probabilities"), None, Vec::new())
        } else {
            let offset = self.policy.resolve(&response, &ids)?;
            let result = first_token_answer(&response, &ids, &self.policy)?;
            let probs = option_probabilities(&response, &ids, offset);
            (result, Some(offset), probs)
        };
        let text = if !self.text {
            ExtractionResult::failed("text channel disabled")
        } else if let Some(client) = &self.classifier {
            client.classify(&run.key.to_string(), &response.text, &run.view.options, &self.lexicon)?
        } else {
            extract_text_answer(&response.text, &run.view.options, &self.lexicon)
        };

        let permuted = run.permuted_options();
        // labels come from the shown option set, so mapping cannot fail
        let first_content = content_of(first.label, &permuted).expect("label from shown options");
        let text_content = content_of(text.label, &permuted).expect("label from shown options");
        Ok(RunRecord {
            key: run.key.clone(),
            task: run.view.task.clone(),
            subcategory: run.view.subcategory.clone(),
            prompt: run.prompt.text(),
            options: run.view.options.clone(),
            option_permutation: run.permutation.clone(),
            gold_label: run.view.gold_label(),
            response,
            first_token_offset: offset,
            option_probs,
            first_token_label: first.label,
            first_token_method: first.method,
            text_label: text.label,
            text_method: text.method,
            first_token_content: first_content,
            text_content,
            debiased_label: None,
            debiased_content: None,
        })
    }
}
