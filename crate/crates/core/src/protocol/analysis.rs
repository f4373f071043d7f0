use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    accuracy, answer_distribution, floating_rate, mismatch_rate, rstd, AnswerDistribution, AnswerMultiset,
    Channel, MetricsError, RecallVector,
};
use crate::model::{ContentClass, PerturbationType, RunKey, RunRecord, ORIGINAL_OPTION_COUNT};
use crate::protocol::plan::{CampaignPlan, EntropyMode, INJECTED_ARM, ORIGINAL_ARM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("missing runs: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    Missing(Vec<RunKey>),
    #[error("{0} is not scored by answer entropy")]
    NotEntropyType(PerturbationType),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Channels a plan produces labels for.
pub fn plan_channels(plan: &CampaignPlan) -> Vec<Channel> {
    let mut out = Vec::new();
    if plan.first_token {
        out.push(Channel::FirstToken);
    }
    if plan.text {
        out.push(Channel::Text);
    }
    if plan.first_token && plan.debias {
        out.push(Channel::Debiased);
    }
    out
}

fn is_baseline(r: &RunRecord) -> bool {
    r.key.perturbation_type == PerturbationType::None && r.key.perturbation_index == 0 && r.key.shuffle_index == 0
}

/// Keys an item needs for the entropy of `kind`.
pub fn expected_entropy_keys(
    item_id: &str,
    kind: PerturbationType,
    plan: &CampaignPlan,
) -> Result<Vec<RunKey>, AnalysisError> {
    match kind {
        PerturbationType::OptionSwap => Ok((0..plan.option_swap_runs)
            .map(|s| RunKey::new(item_id, kind, 0, s))
            .collect()),
        k if k.is_textual() => Ok((0..plan.runs_per_perturbation)
            .flat_map(|p| (0..plan.shuffles_per_run).map(move |s| RunKey::new(item_id, k, p, s)))
            .collect()),
        k => Err(AnalysisError::NotEntropyType(k)),
    }
}

/// Answer entropy of one item under one perturbation type.
///
/// Textual types in voted mode: majority content over the shuffles of each
/// perturbation index, then entropy over the voted answers. Option swap and
/// raw mode: entropy over every answer.
pub fn score_perturbation_entropy(
    item_id: &str,
    records: &[&RunRecord],
    kind: PerturbationType,
    plan: &CampaignPlan,
    channel: Channel,
) -> Result<f64, AnalysisError> {
    let by_key: BTreeMap<&RunKey, &RunRecord> = records.iter().map(|r| (&r.key, *r)).collect();
    let expected = expected_entropy_keys(item_id, kind, plan)?;
    let missing: Vec<RunKey> = expected.iter().filter(|k| !by_key.contains_key(k)).cloned().collect();
    if !missing.is_empty() {
        return Err(AnalysisError::Missing(missing));
    }
    let answer = |k: &RunKey| channel.content(by_key[k]);
    if kind == PerturbationType::OptionSwap || plan.entropy_mode == EntropyMode::Raw {
        let all = expected.iter().map(answer).collect::<Result<Vec<_>, _>>()?;
        return Ok(AnswerMultiset::new(all)?.entropy());
    }
    let mut voted = Vec::new();
    for group in expected.chunks(plan.shuffles_per_run as usize) {
        let answers = group.iter().map(answer).collect::<Result<Vec<_>, _>>()?;
        voted.push(AnswerMultiset::new(answers)?.majority().clone());
    }
    Ok(AnswerMultiset::new(voted)?.entropy())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackMetrics {
    pub accuracy: f64,
    /// `None` when fewer than two option IDs held a gold answer.
    pub rstd: Option<f64>,
    pub recalls: RecallVector,
    pub runs: usize,
}

fn track(records: &[&RunRecord], channel: Channel) -> Result<TrackMetrics, MetricsError> {
    let recalls = RecallVector::from_records(records.iter().copied(), channel)?;
    Ok(TrackMetrics {
        accuracy: accuracy(records.iter().copied(), channel)?,
        rstd: rstd(&recalls, ORIGINAL_OPTION_COUNT).ok(),
        recalls,
        runs: records.len(),
    })
}

fn tracks(records: &[&RunRecord], channels: &[Channel]) -> BTreeMap<Channel, TrackMetrics> {
    channels
        .iter()
        .filter_map(|&c| track(records, c).ok().map(|t| (c, t)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionBiasReport {
    pub per_task: BTreeMap<String, BTreeMap<Channel, TrackMetrics>>,
    pub per_subcategory: BTreeMap<String, BTreeMap<Channel, TrackMetrics>>,
    pub aggregate: BTreeMap<Channel, TrackMetrics>,
}

/// Accuracy, recalls and RStD of the baseline runs for every channel, per
/// task, per subcategory and pooled. A channel missing labels for a group
/// (debiased without a prior) is left out of that group.
pub fn selection_bias(records: &[RunRecord], channels: &[Channel]) -> Option<SelectionBiasReport> {
    let baseline: Vec<&RunRecord> = records.iter().filter(|r| is_baseline(r)).collect();
    if baseline.is_empty() {
        return None;
    }
    let mut by_task: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    let mut by_sub: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in &baseline {
        by_task.entry(&r.task).or_default().push(r);
        by_sub.entry(&r.subcategory).or_default().push(r);
    }
    Some(SelectionBiasReport {
        per_task: by_task.iter().map(|(k, v)| (k.to_string(), tracks(v, channels))).collect(),
        per_subcategory: by_sub.iter().map(|(k, v)| (k.to_string(), tracks(v, channels))).collect(),
        aggregate: tracks(&baseline, channels),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySummary {
    pub mean: f64,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub mode: EntropyMode,
    /// Mean entropy per perturbation type and channel.
    pub per_type: BTreeMap<PerturbationType, BTreeMap<Channel, EntropySummary>>,
    pub per_item: BTreeMap<String, BTreeMap<PerturbationType, BTreeMap<Channel, f64>>>,
    /// Items left out of a type because runs were missing.
    pub excluded: BTreeMap<PerturbationType, Vec<String>>,
}

pub fn entropy_report(records: &[RunRecord], plan: &CampaignPlan) -> Option<EntropyReport> {
    let kinds: Vec<PerturbationType> = PerturbationType::ENTROPY
        .into_iter()
        .filter(|k| plan.enabled(*k))
        .collect();
    if kinds.is_empty() {
        return None;
    }
    let channels: Vec<Channel> = plan_channels(plan)
        .into_iter()
        .filter(|c| *c != Channel::Debiased)
        .collect();
    let mut by_item: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_item.entry(&r.key.item_id).or_default().push(r);
    }
    let mut report = EntropyReport {
        mode: plan.entropy_mode,
        per_type: BTreeMap::new(),
        per_item: BTreeMap::new(),
        excluded: BTreeMap::new(),
    };
    for kind in kinds {
        let mut sums: BTreeMap<Channel, (f64, usize)> = BTreeMap::new();
        for (item_id, recs) in &by_item {
            let of_kind: Vec<&RunRecord> = recs
                .iter()
                .filter(|r| r.key.perturbation_type == kind)
                .copied()
                .collect();
            let mut values = BTreeMap::new();
            for &c in &channels {
                match score_perturbation_entropy(item_id, &of_kind, kind, plan, c) {
                    Ok(h) => {
                        values.insert(c, h);
                    }
                    Err(e) => {
                        log::warn!("{item_id}: {kind} entropy skipped: {e}");
                        break;
                    }
                }
            }
            if values.len() != channels.len() {
                report.excluded.entry(kind).or_default().push(item_id.to_string());
                continue;
            }
            for (c, h) in &values {
                let s = sums.entry(*c).or_insert((0.0, 0));
                s.0 += h;
                s.1 += 1;
            }
            report
                .per_item
                .entry(item_id.to_string())
                .or_default()
                .insert(kind, values);
        }
        report.per_type.insert(
            kind,
            sums.into_iter()
                .map(|(c, (sum, n))| (c, EntropySummary { mean: sum / n as f64, items: n }))
                .collect(),
        );
    }
    Some(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    /// Over the baseline runs.
    pub baseline: Option<f64>,
    /// Over every scored run.
    pub all_runs: f64,
    pub baseline_runs: usize,
    pub runs: usize,
}

pub fn mismatch_report(records: &[RunRecord], plan: &CampaignPlan) -> Option<MismatchReport> {
    if !(plan.first_token && plan.text) || records.is_empty() {
        return None;
    }
    let baseline: Vec<&RunRecord> = records.iter().filter(|r| is_baseline(r)).collect();
    Some(MismatchReport {
        baseline: mismatch_rate(baseline.iter().copied()).ok(),
        all_runs: mismatch_rate(records).ok()?,
        baseline_runs: baseline.len(),
        runs: records.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloatingChannel {
    pub rate: f64,
    pub before: AnswerDistribution,
    pub after: AnswerDistribution,
    /// Voted content per item, as short class names.
    pub voted_before: BTreeMap<String, String>,
    pub voted_after: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloatingReport {
    pub items: usize,
    pub per_channel: BTreeMap<Channel, FloatingChannel>,
    /// Items missing runs in either arm.
    pub unpaired: Vec<String>,
}

/// Voted content of one arm, or the missing keys.
fn voted_arm(
    item_id: &str,
    by_key: &BTreeMap<&RunKey, &RunRecord>,
    arm: u32,
    plan: &CampaignPlan,
    channel: Channel,
) -> Result<ContentClass, AnalysisError> {
    let keys: Vec<RunKey> = (0..plan.shuffles_per_run)
        .map(|s| RunKey::new(item_id, PerturbationType::ExtraOptions, arm, s))
        .collect();
    let missing: Vec<RunKey> = keys.iter().filter(|k| !by_key.contains_key(k)).cloned().collect();
    if !missing.is_empty() {
        return Err(AnalysisError::Missing(missing));
    }
    let answers = keys
        .iter()
        .map(|k| channel.content(by_key[k]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AnswerMultiset::new(answers)?.majority().clone())
}

/// Floating rate and before/after distributions of voted contents. Voted
/// answers are binned by canonical option position.
pub fn floating_report(records: &[RunRecord], plan: &CampaignPlan) -> Option<FloatingReport> {
    if !plan.enabled(PerturbationType::ExtraOptions) {
        return None;
    }
    let channels: Vec<Channel> = plan_channels(plan)
        .into_iter()
        .filter(|c| *c != Channel::Debiased)
        .collect();
    let mut by_item: BTreeMap<&str, BTreeMap<&RunKey, &RunRecord>> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.key.perturbation_type == PerturbationType::ExtraOptions)
    {
        by_item.entry(&r.key.item_id).or_default().insert(&r.key, r);
    }
    let all_items: BTreeSet<&str> = records.iter().map(|r| r.key.item_id.as_str()).collect();
    let mut unpaired = Vec::new();
    let mut before: BTreeMap<Channel, BTreeMap<String, ContentClass>> = BTreeMap::new();
    let mut after: BTreeMap<Channel, BTreeMap<String, ContentClass>> = BTreeMap::new();
    let empty = BTreeMap::new();
    for item_id in all_items {
        let by_key = by_item.get(item_id).unwrap_or(&empty);
        let mut pairs = Vec::new();
        for &c in &channels {
            match (
                voted_arm(item_id, by_key, ORIGINAL_ARM, plan, c),
                voted_arm(item_id, by_key, INJECTED_ARM, plan, c),
            ) {
                (Ok(b), Ok(a)) => pairs.push((c, b, a)),
                (Err(e), _) | (_, Err(e)) => {
                    log::warn!("{item_id}: unpaired floating runs: {e}");
                    break;
                }
            }
        }
        if pairs.len() != channels.len() {
            unpaired.push(item_id.to_string());
            continue;
        }
        for (c, b, a) in pairs {
            before.entry(c).or_default().insert(item_id.to_string(), b);
            after.entry(c).or_default().insert(item_id.to_string(), a);
        }
    }
    let mut per_channel = BTreeMap::new();
    for &c in &channels {
        let (Some(b), Some(a)) = (before.get(&c), after.get(&c)) else { continue };
        let Ok(rate) = floating_rate(b, a) else { continue };
        let names = |m: &BTreeMap<String, ContentClass>| m.iter().map(|(k, v)| (k.clone(), v.short_name())).collect();
        per_channel.insert(
            c,
            FloatingChannel {
                rate,
                before: answer_distribution(b.values()),
                after: answer_distribution(a.values()),
                voted_before: names(b),
                voted_after: names(a),
            },
        );
    }
    Some(FloatingReport {
        items: before.values().next().map_or(0, BTreeMap::len),
        per_channel,
        unpaired,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_tag: String,
    pub runs: usize,
    pub items: usize,
    pub selection_bias: Option<SelectionBiasReport>,
    pub entropy: Option<EntropyReport>,
    pub mismatch: Option<MismatchReport>,
    pub floating: Option<FloatingReport>,
}

/// Every metric the plan supports, computed from scored records.
pub fn analyze(records: &[RunRecord], plan: &CampaignPlan) -> MetricsReport {
    let items: BTreeSet<&str> = records.iter().map(|r| r.key.item_id.as_str()).collect();
    MetricsReport {
        model_tag: records
            .first()
            .map(|r| r.response.model_tag.clone())
            .unwrap_or_default(),
        runs: records.len(),
        items: items.len(),
        selection_bias: selection_bias(records, &plan_channels(plan)),
        entropy: entropy_report(records, plan),
        mismatch: mismatch_report(records, plan),
        floating: floating_report(records, plan),
    }
}
