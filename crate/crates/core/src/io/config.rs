//! TOML harness configuration.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//!
//! [dataset]
//! path = "data/mmlu"
//! format = "mmlu"
//!
//! [model]
//! endpoint = "synthetic:"          # or an OpenAI-compatible base URL
//!
//! [synthetic]
//! position_bias = [2.0, 0.0, 0.0, 0.0]
//!
//! [plan]
//! perturbations = ["none", "letter_typos", "option_swap"]
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{ClassifierSettings, TokenOffsetPolicy};
use crate::io::adapter::EndpointSettings;
use crate::prompt::PromptTemplate;
use crate::protocol::CampaignPlan;
use crate::sim::SyntheticResponder;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("{what} not found: {path}")]
    MissingPath { what: &'static str, path: PathBuf },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// `mmlu` (directory of subject files) or `jsonl`.
    #[serde(default = "default_format")]
    pub format: String,
    #[serde(default)]
    pub skip_invalid: bool,
    /// Use only the first N items after loading.
    #[serde(default)]
    pub limit: Option<usize>,
}

fn default_format() -> String {
    "mmlu".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// `synthetic:` or `synthetic:<tag>` for the built-in responder,
    /// otherwise an HTTP base URL.
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: u32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_top_logprobs() -> u32 {
    20
}
fn default_max_tokens() -> u32 {
    64
}
fn default_timeout_ms() -> u64 {
    60_000
}
fn default_max_retries() -> u32 {
    5
}
fn default_backoff_ms() -> u64 {
    500
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            endpoint: "synthetic:".to_string(),
            model: String::new(),
            api_key_env: None,
            top_logprobs: default_top_logprobs(),
            max_tokens: default_max_tokens(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Synthetic { tag: Option<String> },
    Http(String),
}

impl ModelConfig {
    pub fn endpoint(&self) -> Endpoint {
        match self.endpoint.strip_prefix("synthetic:") {
            Some("") => Endpoint::Synthetic { tag: None },
            Some(tag) => Endpoint::Synthetic {
                tag: Some(tag.to_string()),
            },
            None => Endpoint::Http(self.endpoint.clone()),
        }
    }

    pub fn endpoint_settings(&self) -> EndpointSettings {
        EndpointSettings {
            url: self.endpoint.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            top_logprobs: self.top_logprobs,
            max_tokens: self.max_tokens,
            timeout_ms: self.timeout_ms,
            max_retries: self.max_retries,
            backoff_ms: self.backoff_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub offset: TokenOffsetPolicy,
    /// Special-phrase lexicon overriding the bundled one.
    pub lexicon: Option<PathBuf>,
    pub classifier: Option<ClassifierSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub synthetic: SyntheticResponder,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub prompt: PromptTemplate,
    #[serde(default)]
    pub plan: CampaignPlan,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl HarnessConfig {
    /// A config with defaults everywhere but the seed.
    pub fn with_seed(seed: u64) -> Self {
        Self::from_toml(&format!("seed = {seed}"), Path::new("<inline>")).expect("minimal config parses")
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let mut cfg: HarnessConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        cfg.set_seed(cfg.seed);
        Ok(cfg)
    }

    /// Loads, resolves relative paths against the file's directory and
    /// checks that referenced paths exist.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.output_dir);
        if let Some(d) = &mut self.dataset {
            resolve(&mut d.path);
        }
        if let Some(l) = &mut self.extraction.lexicon {
            resolve(l);
        }
    }

    /// Seed shared by the plan and the synthetic responder.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.plan.perturbation.master_seed = seed;
        self.synthetic.seed = seed;
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if let Some(d) = &self.dataset {
            if !d.path.exists() {
                return Err(ConfigError::MissingPath {
                    what: "dataset",
                    path: d.path.clone(),
                });
            }
            if d.format != "mmlu" && d.format != "jsonl" {
                return Err(ConfigError::Invalid(format!("unknown dataset format {}", d.format)));
            }
        }
        if let Some(l) = &self.extraction.lexicon {
            if !l.exists() {
                return Err(ConfigError::MissingPath {
                    what: "lexicon",
                    path: l.clone(),
                });
            }
        }
        self.plan.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.synthetic.validate().map_err(ConfigError::Invalid)?;
        if let Endpoint::Http(_) = self.model.endpoint() {
            if self.model.model.is_empty() {
                return Err(ConfigError::Invalid("model.model is required for HTTP endpoints".into()));
            }
        }
        Ok(())
    }
}
