//! Robustness measurement for multiple-choice question answering.
//!
//! Items are perturbed ([`perturb`]), rendered ([`prompt`]), sent to a
//! model backend, and each reply is read two ways ([`extract`]): from the
//! log-probabilities of the first answer token and from the generated text.
//! [`metrics`] and [`protocol`] turn the labels into selection bias, answer
//! entropy, mismatch and floating rates; [`debias`] removes an estimated
//! position prior from first-token distributions.

pub mod debias;
pub mod extract;
pub mod io;
pub mod metrics;
pub mod model;
pub mod perturb;
pub mod prompt;
pub mod protocol;
pub mod sim;

pub use model::{
    content_of, AnswerLabel, ContentClass, ExtractionMethod, McqItem, ModelResponse, OptionEntry, OptionKind,
    PermutedOptions, PerturbationType, RunKey, RunRecord, TokenLogprobRecord,
};
pub use metrics::Channel;
pub use perturb::{PerturbationConfig, SeedStream};
pub use prompt::{build_prompt, Prompt, PromptTemplate};
pub use protocol::{CampaignPlan, MetricsReport};
pub use sim::SyntheticResponder;
