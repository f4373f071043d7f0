//! Campaign orchestration: which runs to make, executing them against a
//! backend, and turning scored records into metric reports.

pub mod analysis;
pub mod backend;
pub mod campaign;
pub mod plan;
pub mod score;

pub use analysis::{
    analyze, entropy_report, floating_report, mismatch_report, plan_channels, score_perturbation_entropy,
    selection_bias, AnalysisError, EntropyReport, FloatingReport, MetricsReport, MismatchReport,
    SelectionBiasReport, TrackMetrics,
};
pub use backend::{InferError, ModelBackend, ResponseCache, SyntheticBackend};
pub use campaign::{
    apply_debias, estimation_items, plan_campaign, run_campaign, CampaignError, CampaignOptions,
    CampaignOutcome, FailureStage, FreshResponse, RunFailure,
};
pub use plan::{plan_runs, CampaignPlan, EntropyMode, PlanError, PlannedRun, INJECTED_ARM, ORIGINAL_ARM};
pub use score::Extractor;
