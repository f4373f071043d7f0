use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::debias::cyclic_rotation;
use crate::model::{McqItem, PerturbationType, PermutedOptions, RunKey};
use crate::perturb::{
    add_extra_options, letter_swap, letter_typos, option_swap, word_swap, PerturbError,
    PerturbationConfig, SeedStream,
};
use crate::prompt::{build_prompt, Prompt, PromptTemplate};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("invalid campaign plan: {0}")]
    Invalid(String),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
}

/// How textual-perturbation entropy is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// Majority vote over the shuffles of each perturbation, entropy over
    /// the voted answers.
    Voted,
    /// Entropy over every raw answer.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignPlan {
    pub perturbations: Vec<PerturbationType>,
    pub runs_per_perturbation: u32,
    pub shuffles_per_run: u32,
    pub option_swap_runs: u32,
    pub first_token: bool,
    pub text: bool,
    pub debias: bool,
    /// Cyclic rotations per estimation item when debiasing.
    pub num_cycles: u32,
    pub entropy_mode: EntropyMode,
    pub perturbation: PerturbationConfig,
}

impl Default for CampaignPlan {
    fn default() -> Self {
        Self {
            perturbations: PerturbationType::ALL.to_vec(),
            runs_per_perturbation: 4,
            shuffles_per_run: 5,
            option_swap_runs: 20,
            first_token: true,
            text: true,
            debias: true,
            num_cycles: 4,
            entropy_mode: EntropyMode::Voted,
            perturbation: PerturbationConfig::default(),
        }
    }
}

impl CampaignPlan {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.perturbation.master_seed = seed;
        self
    }

    pub fn master_seed(&self) -> u64 {
        self.perturbation.master_seed
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        self.perturbation.validate()?;
        for (name, v) in [
            ("runs_per_perturbation", self.runs_per_perturbation),
            ("shuffles_per_run", self.shuffles_per_run),
            ("option_swap_runs", self.option_swap_runs),
            ("num_cycles", self.num_cycles),
        ] {
            if v == 0 {
                return Err(PlanError::Invalid(format!("{name} must be positive")));
            }
        }
        if !self.first_token && !self.text {
            return Err(PlanError::Invalid("no extraction channel enabled".into()));
        }
        Ok(())
    }

    pub fn enabled(&self, p: PerturbationType) -> bool {
        self.perturbations.contains(&p)
    }

    /// Baseline runs happen when asked for, when nothing else is, or when
    /// debiasing needs them.
    pub fn baseline_enabled(&self) -> bool {
        self.perturbations.is_empty() || self.enabled(PerturbationType::None) || self.debias
    }
}

/// Extra-options arm without injected options.
pub const ORIGINAL_ARM: u32 = 0;
/// Extra-options arm with the three injected options.
pub const INJECTED_ARM: u32 = 1;

/// One inference to perform: the key, what the model is shown, and the
/// rendered prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    pub key: RunKey,
    /// The item as shown: perturbed question, permuted and re-lettered
    /// options, gold index remapped.
    pub view: McqItem,
    pub permutation: Vec<usize>,
    pub prompt: Prompt,
    /// Word swap fell back to the unperturbed question.
    pub degraded: bool,
}

impl PlannedRun {
    pub fn permuted_options(&self) -> PermutedOptions {
        PermutedOptions {
            options: self.view.options.clone(),
            permutation: self.permutation.clone(),
        }
    }
}

fn make_run(
    item: &McqItem,
    key: RunKey,
    question: String,
    permuted: PermutedOptions,
    template: &PromptTemplate,
    degraded: bool,
) -> PlannedRun {
    let gold = permuted.permutation[item.gold];
    let view = McqItem {
        item_id: item.item_id.clone(),
        question,
        options: permuted.options,
        gold,
        task: item.task.clone(),
        subcategory: item.subcategory.clone(),
    };
    let prompt = build_prompt(&view, template);
    PlannedRun {
        key,
        view,
        permutation: permuted.permutation,
        prompt,
        degraded,
    }
}

/// Option order for shuffle `s` of a textual perturbation. Shared by every
/// perturbation index and type so that the only difference between their
/// vote sets is the question wording.
fn shared_shuffle(seed: u64, item: &McqItem, shuffle: u32) -> PermutedOptions {
    option_swap(&item.options, &mut SeedStream::new(seed, &item.item_id, "shuffle", 0, shuffle))
}

fn perturbed_question(
    plan: &CampaignPlan,
    item: &McqItem,
    kind: PerturbationType,
    index: u32,
) -> (String, bool) {
    let cfg = &plan.perturbation;
    let domain = format!("{kind}/question");
    let mut stream = SeedStream::new(cfg.master_seed, &item.item_id, &domain, index, 0);
    match kind {
        PerturbationType::LetterTypos => (
            letter_typos(&item.question, &mut stream, cfg.typo_word_probability),
            false,
        ),
        PerturbationType::LetterSwap => (
            letter_swap(&item.question, &mut stream, cfg.letter_swap_min_word_length),
            false,
        ),
        PerturbationType::WordSwap => {
            let out = word_swap(&item.question, &mut stream, cfg.word_swap_count);
            (out.text, out.degraded)
        }
        _ => (item.question.clone(), false),
    }
}

/// Every run for one item, in a fixed order.
///
/// * baseline: `(none, 0, 0)` with canonical options; estimation items for
///   debiasing add `(none, 0, r)` for cyclic rotations `r = 1..num_cycles`;
/// * textual types: `runs_per_perturbation x shuffles_per_run` runs;
/// * option swap: `option_swap_runs` shuffles of the original question,
///   perturbation index 0;
/// * extra options: arm 0 (original options) and arm 1 (injected
///   options), `shuffles_per_run` shuffles each.
pub fn plan_runs(
    item: &McqItem,
    plan: &CampaignPlan,
    template: &PromptTemplate,
    estimation_item: bool,
) -> Result<Vec<PlannedRun>, PlanError> {
    let seed = plan.master_seed();
    let id = item.item_id.as_str();
    let mut runs = Vec::new();

    if plan.baseline_enabled() {
        let rotations = if plan.debias && estimation_item {
            plan.num_cycles
        } else {
            1
        };
        for r in 0..rotations {
            let permuted = if r == 0 {
                PermutedOptions::identity(item.options.clone())
            } else {
                cyclic_rotation(&item.options, r as usize)
            };
            let key = RunKey::new(id, PerturbationType::None, 0, r);
            runs.push(make_run(item, key, item.question.clone(), permuted, template, false));
        }
    }

    for kind in PerturbationType::TEXTUAL {
        if !plan.enabled(kind) {
            continue;
        }
        for p in 0..plan.runs_per_perturbation {
            let (question, degraded) = perturbed_question(plan, item, kind, p);
            if degraded {
                log::warn!("{id}: question too short for {kind}, left unchanged");
            }
            for s in 0..plan.shuffles_per_run {
                let key = RunKey::new(id, kind, p, s);
                let permuted = shared_shuffle(seed, item, s);
                runs.push(make_run(item, key, question.clone(), permuted, template, degraded));
            }
        }
    }

    if plan.enabled(PerturbationType::OptionSwap) {
        for s in 0..plan.option_swap_runs {
            let key = RunKey::new(id, PerturbationType::OptionSwap, 0, s);
            let mut stream = SeedStream::new(seed, id, "option_swap", 0, s);
            let permuted = option_swap(&item.options, &mut stream);
            runs.push(make_run(item, key, item.question.clone(), permuted, template, false));
        }
    }

    if plan.enabled(PerturbationType::ExtraOptions) {
        for s in 0..plan.shuffles_per_run {
            let key = RunKey::new(id, PerturbationType::ExtraOptions, ORIGINAL_ARM, s);
            let permuted = shared_shuffle(seed, item, s);
            runs.push(make_run(item, key, item.question.clone(), permuted, template, false));
        }
        for s in 0..plan.shuffles_per_run {
            let key = RunKey::new(id, PerturbationType::ExtraOptions, INJECTED_ARM, s);
            let mut stream = SeedStream::new(seed, id, "extra_options", INJECTED_ARM, s);
            let permuted = add_extra_options(&item.options, &mut stream)?;
            runs.push(make_run(item, key, item.question.clone(), permuted, template, false));
        }
    }

    Ok(runs)
}
