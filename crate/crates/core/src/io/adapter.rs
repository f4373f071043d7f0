//! Chat-completions client for OpenAI-compatible endpoints.
//!
//! Every request asks for greedy decoding (`temperature: 0`) and the top-k
//! log-probabilities of each generated token. Rate limits and server errors
//! are retried with exponential backoff.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::model::{ModelResponse, TokenLogprobRecord};
use crate::protocol::{InferError, ModelBackend, PlannedRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointSettings {
    /// Base URL, e.g. `https://api.openai.com/v1`; `/chat/completions` is
    /// appended unless already present.
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub top_logprobs: u32,
    pub max_tokens: u32,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for EndpointSettings {
    fn default() -> Self {
        Self {
            url: String::new(),
            model: String::new(),
            api_key_env: None,
            top_logprobs: 20,
            max_tokens: 64,
            timeout_ms: 60_000,
            max_retries: 5,
            backoff_ms: 500,
        }
    }
}

impl EndpointSettings {
    pub fn completions_url(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

pub struct OpenAiBackend {
    settings: EndpointSettings,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiBackend {
    /// Reads the API key from the configured environment variable.
    pub fn new(settings: EndpointSettings) -> Result<Self, InferError> {
        let api_key = match &settings.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| InferError::Auth(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(settings.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            settings,
            api_key,
            agent,
        })
    }

    pub fn request_body(&self, system: &str, user: &str) -> Value {
        let mut messages = Vec::new();
        if !system.is_empty() {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": user}));
        json!({
            "model": self.settings.model,
            "messages": messages,
            "temperature": 0,
            "max_tokens": self.settings.max_tokens,
            "logprobs": true,
            "top_logprobs": self.settings.top_logprobs,
        })
    }

    fn post(&self, body: &str) -> Result<(u16, String), String> {
        let mut req = self
            .agent
            .post(self.settings.completions_url())
            .header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, text))
    }

    pub fn complete(&self, system: &str, user: &str) -> Result<ModelResponse, InferError> {
        let body = self.request_body(system, user).to_string();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let retryable = match self.post(&body) {
                Ok((200..=299, text)) => return parse_completion(&text, &self.settings.model),
                Ok((401 | 403, text)) => return Err(InferError::Auth(text)),
                Ok((429, _)) => InferError::RateLimited { attempts: attempt },
                Ok((status @ 500..=599, text)) => InferError::Transport(format!("HTTP {status}: {text}")),
                Ok((status, text)) => return Err(InferError::Protocol(format!("HTTP {status}: {text}"))),
                Err(e) => InferError::Transport(e),
            };
            if attempt > self.settings.max_retries {
                return Err(retryable);
            }
            let delay = self.settings.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
            log::debug!("retrying after {delay} ms: {retryable}");
            std::thread::sleep(Duration::from_millis(delay));
        }
    }
}

impl ModelBackend for OpenAiBackend {
    fn infer(&self, run: &PlannedRun) -> Result<ModelResponse, InferError> {
        self.complete(&run.prompt.system, &run.prompt.body)
    }

    fn model_tag(&self) -> String {
        self.settings.model.clone()
    }

    fn is_remote(&self) -> bool {
        true
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
    #[serde(default)]
    model: Option<String>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenEntry>>,
}

#[derive(Deserialize)]
struct TokenEntry {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<TopEntry>,
}

#[derive(Deserialize)]
struct TopEntry {
    token: String,
    logprob: f64,
}

/// Normalizes a chat-completions reply. A reply without log-probabilities
/// gives an empty `token_logprobs`.
pub fn parse_completion(body: &str, fallback_tag: &str) -> Result<ModelResponse, InferError> {
    let completion: Completion =
        serde_json::from_str(body).map_err(|e| InferError::Protocol(format!("{e}: {body}")))?;
    let choice = completion
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| InferError::Protocol("reply has no choices".into()))?;
    let tokens = choice.logprobs.and_then(|l| l.content).unwrap_or_default();
    let token_logprobs = tokens
        .into_iter()
        .enumerate()
        .map(|(position, entry)| {
            let mut candidates: BTreeMap<String, f64> = BTreeMap::new();
            let chosen = std::iter::once((entry.token, entry.logprob));
            let top = entry.top_logprobs.into_iter().map(|t| (t.token, t.logprob));
            for (token, lp) in chosen.chain(top) {
                let lp = lp.min(0.0);
                let slot = candidates.entry(token).or_insert(lp);
                *slot = slot.max(lp);
            }
            TokenLogprobRecord { position, candidates }
        })
        .collect();
    Ok(ModelResponse {
        text: choice.message.content.unwrap_or_default(),
        token_logprobs,
        model_tag: completion.model.unwrap_or_else(|| fallback_tag.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_logprobs() {
        let body = r#"{"model":"m1","choices":[{"message":{"content":"B"},
            "logprobs":{"content":[{"token":"B","logprob":-0.1,
              "top_logprobs":[{"token":"B","logprob":-0.1},{"token":"A","logprob":-2.5},{"token":" B","logprob":-3.0}]},
              {"token":".","logprob":-0.01,"top_logprobs":[]}]}}]}"#;
        let r = parse_completion(body, "x").unwrap();
        assert_eq!(r.text, "B");
        assert_eq!(r.model_tag, "m1");
        assert_eq!(r.token_logprobs.len(), 2);
        assert_eq!(r.token_logprobs[0].candidates["A"], -2.5);
        assert_eq!(r.token_logprobs[0].candidates.len(), 3);
        assert_eq!(r.token_logprobs[1].candidates["."], -0.01);
    }

    #[test]
    fn missing_logprobs_is_empty() {
        let r = parse_completion(r#"{"choices":[{"message":{"content":"A"}}]}"#, "x").unwrap();
        assert!(r.token_logprobs.is_empty());
        assert_eq!(r.model_tag, "x");
        assert!(parse_completion(r#"{"choices":[]}"#, "x").is_err());
    }

    #[test]
    fn greedy_always_requested() {
        let b = OpenAiBackend::new(EndpointSettings {
            url: "http://localhost:1/v1/".into(),
            model: "m".into(),
            ..Default::default()
        })
        .unwrap();
        let body = b.request_body("sys", "user");
        assert_eq!(body["temperature"], 0);
        assert_eq!(body["logprobs"], true);
        assert_eq!(body["top_logprobs"], 20);
        assert_eq!(body["messages"].as_array().unwrap().len(), 2);
        assert_eq!(b.request_body("", "u")["messages"].as_array().unwrap().len(), 1);
        assert_eq!(b.settings.completions_url(), "http://localhost:1/v1/chat/completions");
    }

    #[test]
    fn missing_key_variable_is_auth_error() {
        let s = EndpointSettings {
            api_key_env: Some("MCQSCOPE_TEST_SURELY_UNSET".into()),
            ..Default::default()
        };
        assert!(matches!(OpenAiBackend::new(s), Err(InferError::Auth(_))));
    }
}
