use thiserror::Error;

use crate::model::ModelResponse;
use crate::protocol::plan::PlannedRun;
use crate::sim::SyntheticResponder;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("endpoint returned no token log-probabilities")]
    MissingLogprobs,
    #[error("malformed reply: {0}")]
    Protocol(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error("prompt digest mismatch for {key}: stored {stored}, regenerated {regenerated}")]
    DigestMismatch {
        key: String,
        stored: String,
        regenerated: String,
    },
}

impl InferError {
    /// Errors that will repeat for every run, so the campaign stops.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            InferError::Auth(_) | InferError::MissingLogprobs | InferError::DigestMismatch { .. }
        )
    }
}

/// Something that answers prompts.
pub trait ModelBackend: Sync {
    fn infer(&self, run: &PlannedRun) -> Result<ModelResponse, InferError>;

    fn model_tag(&self) -> String;

    /// Network-backed backends get wall-clock timestamps in the replay log.
    fn is_remote(&self) -> bool {
        false
    }
}

/// Previously stored replies consulted before the backend.
pub trait ResponseCache: Sync {
    fn lookup(&self, run: &PlannedRun) -> Result<Option<ModelResponse>, InferError>;
}

pub struct SyntheticBackend {
    pub responder: SyntheticResponder,
}

impl SyntheticBackend {
    pub fn new(responder: SyntheticResponder) -> Self {
        Self { responder }
    }
}

impl ModelBackend for SyntheticBackend {
    fn infer(&self, run: &PlannedRun) -> Result<ModelResponse, InferError> {
        Ok(self.responder.respond(&run.view, &run.prompt))
    }

    fn model_tag(&self) -> String {
        self.responder.model_tag.clone()
    }
}
