//! Prior-estimation debiasing of first-token option distributions.
//!
//! The observed distribution over option positions is modelled as a
//! position prior times a content preference. Showing each estimation item
//! under every cyclic rotation of its contents lets the content term average
//! out: the mean log-probability per position is the log prior up to a
//! constant, so a softmax over those means recovers the prior. Dividing
//! observed probabilities by the prior then leaves the content preference.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{OptionEntry, PermutedOptions};

/// Probabilities below this are clamped before taking logs.
const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DebiasError {
    #[error("no estimation items")]
    NoItems,
    #[error("item {item_id} has {found} rotations, expected {expected}")]
    MissingRotations {
        item_id: String,
        found: usize,
        expected: usize,
    },
    #[error("item {item_id}: probability vector of length {found}, expected {expected}")]
    LengthMismatch {
        item_id: String,
        found: usize,
        expected: usize,
    },
    #[error("observed length {observed} does not match prior length {prior}")]
    PriorLength { observed: usize, prior: usize },
    #[error("prior component {0} is zero")]
    ZeroPrior(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionPrior {
    pub task: String,
    pub prior: Vec<f64>,
    pub estimation_size: usize,
    pub num_cycles: usize,
    /// Set when fewer rotations than positions were used, so content
    /// preference has not fully averaged out.
    pub low_confidence: bool,
}

/// Observed option-position probabilities for one estimation item under
/// successive cyclic rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationObservations {
    pub item_id: String,
    pub rotations: Vec<Vec<f64>>,
}

/// Contents shifted left by `shift` with IDs fixed in place: slot `i` shows
/// canonical option `(i + shift) % n`.
pub fn cyclic_rotation(canonical: &[OptionEntry], shift: usize) -> PermutedOptions {
    let n = canonical.len();
    let permutation = (0..n).map(|c| (c + n - shift % n) % n).collect();
    PermutedOptions::from_permutation(canonical, permutation)
}

/// Number of items used for prior estimation in a task of `task_size`
/// items: the first 5%, at least 10, never more than the task has.
pub fn estimation_subset_size(task_size: usize) -> usize {
    let five_percent = (task_size * 5).div_ceil(100);
    five_percent.max(10).min(task_size)
}

fn normalized_logs(probs: &[f64]) -> Vec<f64> {
    let total: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    probs
        .iter()
        .map(|&p| {
            if total > 0.0 {
                (p.max(0.0) / total).max(LOG_FLOOR).ln()
            } else {
                (1.0 / probs.len() as f64).ln()
            }
        })
        .collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Estimates the position prior for one task.
///
/// Each observation vector is renormalized over option positions (mass on
/// other tokens is dropped) before logs are taken. Per-position sums are
/// taken over sorted values so the result does not depend on item order.
pub fn estimate_prior(
    task: &str,
    items: &[RotationObservations],
    num_cycles: usize,
) -> Result<PositionPrior, DebiasError> {
    let first = items.first().ok_or(DebiasError::NoItems)?;
    let width = first.rotations.first().map(Vec::len).unwrap_or(0);
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); width];
    for item in items {
        if item.rotations.len() < num_cycles || num_cycles == 0 {
            return Err(DebiasError::MissingRotations {
                item_id: item.item_id.clone(),
                found: item.rotations.len(),
                expected: num_cycles,
            });
        }
        for probs in &item.rotations[..num_cycles] {
            if probs.len() != width {
                return Err(DebiasError::LengthMismatch {
                    item_id: item.item_id.clone(),
                    found: probs.len(),
                    expected: width,
                });
            }
            for (col, lp) in columns.iter_mut().zip(normalized_logs(probs)) {
                col.push(lp);
            }
        }
    }
    let means: Vec<f64> = columns
        .iter_mut()
        .map(|col| {
            col.sort_by(f64::total_cmp);
            col.iter().sum::<f64>() / col.len() as f64
        })
        .collect();
    Ok(PositionPrior {
        task: task.to_string(),
        prior: softmax(&means),
        estimation_size: items.len(),
        num_cycles,
        low_confidence: num_cycles < width,
    })
}

/// Divides out the position prior and renormalizes over positions.
pub fn debias(observed: &[f64], prior: &PositionPrior) -> Result<Vec<f64>, DebiasError> {
    if observed.len() != prior.prior.len() {
        return Err(DebiasError::PriorLength {
            observed: observed.len(),
            prior: prior.prior.len(),
        });
    }
    if let Some(i) = prior.prior.iter().position(|&p| p <= 0.0) {
        return Err(DebiasError::ZeroPrior(i));
    }
    let raw: Vec<f64> = observed
        .iter()
        .zip(&prior.prior)
        .map(|(o, p)| o.max(0.0) / p)
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Ok(vec![1.0 / raw.len() as f64; raw.len()]);
    }
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// Index of the largest entry, earliest on ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}
