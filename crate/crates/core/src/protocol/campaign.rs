use std::collections::{BTreeMap, BTreeSet};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::debias::{argmax, debias, estimate_prior, estimation_subset_size, PositionPrior, RotationObservations};
use crate::model::{content_of, AnswerLabel, McqItem, ModelResponse, PerturbationType, RunKey, RunRecord};
use crate::prompt::PromptTemplate;
use crate::protocol::backend::{InferError, ModelBackend, ResponseCache};
use crate::protocol::plan::{plan_runs, CampaignPlan, PlanError, PlannedRun};
use crate::protocol::score::Extractor;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("duplicate item id {0}")]
    DuplicateItem(String),
    #[error("fatal error at {key}: {source}")]
    Fatal { key: RunKey, source: InferError },
    #[error("response sink: {0}")]
    Sink(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Inference,
    Extraction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    pub key: RunKey,
    pub stage: FailureStage,
    pub reason: String,
}

/// A reply obtained from the backend during this campaign (not from cache).
pub struct FreshResponse<'a> {
    pub run: &'a PlannedRun,
    pub response: &'a ModelResponse,
    pub requested_at_ms: Option<u64>,
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CampaignOptions {
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    /// Runs scheduled between sink flushes.
    pub chunk_size: usize,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        Self {
            jobs: 0,
            chunk_size: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CampaignOutcome {
    pub model_tag: String,
    pub planned: usize,
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub priors: BTreeMap<String, PositionPrior>,
    pub degraded: Vec<RunKey>,
    pub warnings: Vec<String>,
}

/// Items used for prior estimation: the first few of each task in dataset
/// order.
pub fn estimation_items(items: &[McqItem]) -> BTreeSet<String> {
    let mut by_task: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for item in items {
        by_task.entry(&item.task).or_default().push(&item.item_id);
    }
    by_task
        .values()
        .flat_map(|ids| {
            let n = estimation_subset_size(ids.len());
            ids[..n].iter().map(|s| s.to_string())
        })
        .collect()
}

/// All planned runs of a campaign in execution order.
pub fn plan_campaign(
    items: &[McqItem],
    plan: &CampaignPlan,
    template: &PromptTemplate,
) -> Result<Vec<PlannedRun>, CampaignError> {
    plan.validate()?;
    let mut seen = BTreeSet::new();
    for item in items {
        if !seen.insert(item.item_id.as_str()) {
            return Err(CampaignError::DuplicateItem(item.item_id.clone()));
        }
    }
    let estimation = if plan.debias { estimation_items(items) } else { BTreeSet::new() };
    let mut runs = Vec::new();
    for item in items {
        runs.extend(plan_runs(item, plan, template, estimation.contains(&item.item_id))?);
    }
    Ok(runs)
}

enum RunOutcome {
    Scored {
        record: Box<RunRecord>,
        fresh: Option<(Option<u64>, Option<u64>)>,
    },
    Failed(RunFailure, Option<InferError>),
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn execute(
    run: &PlannedRun,
    backend: &dyn ModelBackend,
    cache: Option<&dyn ResponseCache>,
    extractor: &Extractor,
) -> RunOutcome {
    let inference_failure = |e: InferError| {
        RunOutcome::Failed(
            RunFailure {
                key: run.key.clone(),
                stage: FailureStage::Inference,
                reason: e.to_string(),
            },
            Some(e),
        )
    };
    let cached = match cache.map(|c| c.lookup(run)).transpose() {
        Ok(hit) => hit.flatten(),
        Err(e) => return inference_failure(e),
    };
    let (response, fresh) = match cached {
        Some(r) => (r, None),
        None => {
            let started = Instant::now();
            let requested = backend.is_remote().then(now_ms);
            match backend.infer(run) {
                Ok(r) => {
                    let latency = backend.is_remote().then(|| started.elapsed().as_millis() as u64);
                    (r, Some((requested, latency)))
                }
                Err(e) => return inference_failure(e),
            }
        }
    };
    if extractor.first_token && !response.has_logprobs() {
        return inference_failure(InferError::MissingLogprobs);
    }
    match extractor.score(run, response) {
        Ok(record) => RunOutcome::Scored {
            record: Box::new(record),
            fresh,
        },
        Err(e) => RunOutcome::Failed(
            RunFailure {
                key: run.key.clone(),
                stage: FailureStage::Extraction,
                reason: e.to_string(),
            },
            None,
        ),
    }
}

/// Runs every planned inference, scores replies and, when the plan asks for
/// it, estimates priors and attaches debiased labels.
///
/// Runs execute in parallel chunks; records, failures and sink calls follow
/// plan order regardless of the worker count. Per-run failures are recorded
/// and the campaign continues, except for authentication and missing
/// log-probability errors, which abort.
#[allow(clippy::too_many_arguments)]
pub fn run_campaign(
    items: &[McqItem],
    plan: &CampaignPlan,
    template: &PromptTemplate,
    backend: &dyn ModelBackend,
    cache: Option<&dyn ResponseCache>,
    extractor: &Extractor,
    sink: &mut dyn FnMut(FreshResponse<'_>) -> Result<(), String>,
    options: CampaignOptions,
) -> Result<CampaignOutcome, CampaignError> {
    let runs = plan_campaign(items, plan, template)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| CampaignError::Pool(e.to_string()))?;

    let mut outcome = CampaignOutcome {
        model_tag: backend.model_tag(),
        planned: runs.len(),
        ..Default::default()
    };
    outcome.degraded = runs.iter().filter(|r| r.degraded).map(|r| r.key.clone()).collect();
    if !extractor.first_token {
        outcome
            .warnings
            .push("first-token channel disabled; running text-only".to_string());
    }

    let chunk_size = options.chunk_size.max(1);
    for (chunk_no, chunk) in runs.chunks(chunk_size).enumerate() {
        let results: Vec<RunOutcome> =
            pool.install(|| chunk.par_iter().map(|run| execute(run, backend, cache, extractor)).collect());
        for (run, result) in chunk.iter().zip(results) {
            match result {
                RunOutcome::Scored { record, fresh } => {
                    if let Some((requested_at_ms, latency_ms)) = fresh {
                        sink(FreshResponse {
                            run,
                            response: &record.response,
                            requested_at_ms,
                            latency_ms,
                        })
                        .map_err(CampaignError::Sink)?;
                    }
                    outcome.records.push(*record);
                }
                RunOutcome::Failed(failure, err) => {
                    if let Some(e) = err.filter(InferError::is_fatal) {
                        return Err(CampaignError::Fatal {
                            key: failure.key,
                            source: e,
                        });
                    }
                    log::warn!("{} failed: {}", failure.key, failure.reason);
                    outcome.failures.push(failure);
                }
            }
        }
        log::info!(
            "progress: {}/{} runs, {} failed",
            (chunk_no * chunk_size + chunk.len()).min(runs.len()),
            runs.len(),
            outcome.failures.len()
        );
    }

    if plan.debias && extractor.first_token {
        let (priors, warnings) = apply_debias(&mut outcome.records, plan.num_cycles as usize);
        outcome.priors = priors;
        outcome.warnings.extend(warnings);
    }
    Ok(outcome)
}

/// Estimates one position prior per task from the rotation runs of its
/// estimation items and attaches debiased labels to every 4-option record
/// with option probabilities. Tasks without a complete estimation item are
/// reported in the returned warnings and left without debiased labels.
pub fn apply_debias(
    records: &mut [RunRecord],
    num_cycles: usize,
) -> (BTreeMap<String, PositionPrior>, Vec<String>) {
    let mut rotations: BTreeMap<(&str, &str), BTreeMap<u32, &[f64]>> = BTreeMap::new();
    let estimation: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.key.perturbation_type == PerturbationType::None && r.key.shuffle_index > 0)
        .map(|r| r.key.item_id.as_str())
        .collect();
    let mut tasks: BTreeSet<&str> = BTreeSet::new();
    for r in records.iter() {
        tasks.insert(&r.task);
        if r.key.perturbation_type == PerturbationType::None
            && r.key.perturbation_index == 0
            && estimation.contains(r.key.item_id.as_str())
            && !r.option_probs.is_empty()
        {
            rotations
                .entry((&r.task, &r.key.item_id))
                .or_default()
                .insert(r.key.shuffle_index, &r.option_probs);
        }
    }

    let mut per_task: BTreeMap<&str, Vec<RotationObservations>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for ((task, item_id), by_shift) in &rotations {
        let complete = (0..num_cycles as u32).all(|s| by_shift.contains_key(&s));
        if !complete {
            warnings.push(format!("{item_id}: incomplete rotations, excluded from prior estimation"));
            continue;
        }
        per_task.entry(task).or_default().push(RotationObservations {
            item_id: item_id.to_string(),
            rotations: (0..num_cycles as u32).map(|s| by_shift[&s].to_vec()).collect(),
        });
    }

    let mut priors = BTreeMap::new();
    for task in &tasks {
        match per_task.get(task).map(|obs| estimate_prior(task, obs, num_cycles)) {
            Some(Ok(prior)) => {
                priors.insert(task.to_string(), prior);
            }
            Some(Err(e)) => warnings.push(format!("{task}: prior estimation failed: {e}")),
            None => warnings.push(format!("{task}: no estimation items, debiased track unavailable")),
        }
    }

    for r in records.iter_mut() {
        let Some(prior) = priors.get(&r.task) else { continue };
        if r.option_probs.len() != prior.prior.len() {
            continue;
        }
        let Ok(adjusted) = debias(&r.option_probs, prior) else { continue };
        let Some(slot) = argmax(&adjusted) else { continue };
        let label = AnswerLabel::option(slot);
        let content = content_of(label, &r.permuted_options()).expect("slot within shown options");
        r.debiased_label = Some(label);
        r.debiased_content = Some(content);
    }
    (priors, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::backend::SyntheticBackend;
    use crate::sim::SyntheticResponder;

    fn items(n: usize) -> Vec<McqItem> {
        (0..n)
            .map(|i| {
                McqItem::new(
                    Some(format!("q{i:03}")),
                    format!("In which of these places would you find object number {i} today?"),
                    &[format!("alpha {i}"), format!("beta {i}"), format!("gamma {i}"), format!("delta {i}")],
                    i % 4,
                    if i % 2 == 0 { "even" } else { "odd" },
                    "misc",
                )
                .unwrap()
            })
            .collect()
    }

    fn run(jobs: usize, plan: &CampaignPlan) -> CampaignOutcome {
        let backend = SyntheticBackend::new(SyntheticResponder {
            position_bias: vec![1.0, 0.0, 0.0, 0.0],
            mismatch_prob: 0.2,
            ..Default::default()
        });
        run_campaign(
            &items(24),
            plan,
            &PromptTemplate::default(),
            &backend,
            None,
            &Extractor::default(),
            &mut |_| Ok(()),
            CampaignOptions { jobs, chunk_size: 7 },
        )
        .unwrap()
    }

    #[test]
    fn every_planned_key_once() {
        let plan = CampaignPlan::default();
        let out = run(2, &plan);
        assert!(out.failures.is_empty());
        assert_eq!(out.records.len(), out.planned);
        let keys: BTreeSet<_> = out.records.iter().map(|r| &r.key).collect();
        assert_eq!(keys.len(), out.records.len());
        assert_eq!(out.priors.len(), 2);
        assert!(out
            .records
            .iter()
            .filter(|r| r.options.len() == 4)
            .all(|r| r.debiased_label.is_some()));
    }

    #[test]
    fn worker_count_does_not_change_records() {
        let plan = CampaignPlan::default();
        assert_eq!(run(1, &plan), run(4, &plan));
    }

    #[test]
    fn estimation_subset_per_task() {
        let est = estimation_items(&items(24));
        assert_eq!(est.len(), 20);
        assert!(!est.contains("q020"));
        assert!(est.contains("q019"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut v = items(2);
        v[1].item_id = v[0].item_id.clone();
        assert!(matches!(
            plan_campaign(&v, &CampaignPlan::default(), &PromptTemplate::default()),
            Err(CampaignError::DuplicateItem(_))
        ));
    }

    #[test]
    fn text_only_backend_is_fatal_for_first_token() {
        let backend = SyntheticBackend::new(SyntheticResponder {
            text_only: true,
            ..Default::default()
        });
        let err = run_campaign(
            &items(2),
            &CampaignPlan::default(),
            &PromptTemplate::default(),
            &backend,
            None,
            &Extractor::default(),
            &mut |_| Ok(()),
            CampaignOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CampaignError::Fatal { source: InferError::MissingLogprobs, .. }));

        let plan = CampaignPlan {
            first_token: false,
            debias: false,
            ..Default::default()
        };
        let extractor = Extractor {
            first_token: false,
            ..Default::default()
        };
        let out = run_campaign(
            &items(2),
            &plan,
            &PromptTemplate::default(),
            &backend,
            None,
            &extractor,
            &mut |_| Ok(()),
            CampaignOptions::default(),
        )
        .unwrap();
        assert_eq!(out.records.len(), out.planned);
        assert_eq!(out.warnings.len(), 1);
    }
}
