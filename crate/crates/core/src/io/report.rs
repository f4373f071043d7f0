//! Report bundle: a directory of CSV tables plus JSON manifest, metrics and
//! priors. Contents depend only on the records and plan, so reruns are
//! byte-identical.
//!
//! | file | contents |
//! |---|---|
//! | `manifest.json` | plan, counts, failures, degraded runs, warnings |
//! | `metrics.json` | the full metrics report |
//! | `priors.json` | estimated position priors per task |
//! | `selection_bias.csv` | accuracy, RStD and recalls per scope, group and track |
//! | `entropy.csv` | mean answer entropy per channel and perturbation type |
//! | `entropy_items.csv` | entropy per item, type and channel |
//! | `mismatch.csv` | first-token/text mismatch rates |
//! | `floating.csv` | floating rate per channel |
//! | `distribution.csv` | voted answer histograms before and after extra options |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::debias::PositionPrior;
use crate::metrics::{Channel, DISTRIBUTION_BINS};
use crate::model::{PerturbationType, RunKey, OPTION_LETTERS, ORIGINAL_OPTION_COUNT};
use crate::protocol::{CampaignOutcome, CampaignPlan, MetricsReport, RunFailure, TrackMetrics};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub model_tag: String,
    pub master_seed: u64,
    pub plan: CampaignPlan,
    pub items: usize,
    pub planned_runs: usize,
    pub scored_runs: usize,
    pub failures: Vec<RunFailure>,
    pub degraded: Vec<RunKey>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(plan: &CampaignPlan, metrics: &MetricsReport) -> Self {
        Self {
            tool: "mcqscope".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            model_tag: metrics.model_tag.clone(),
            master_seed: plan.master_seed(),
            plan: plan.clone(),
            items: metrics.items,
            planned_runs: metrics.runs,
            scored_runs: metrics.runs,
            failures: Vec::new(),
            degraded: Vec::new(),
            warnings: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn from_outcome(plan: &CampaignPlan, outcome: &CampaignOutcome, metrics: &MetricsReport) -> Self {
        Self {
            model_tag: outcome.model_tag.clone(),
            planned_runs: outcome.planned,
            scored_runs: outcome.records.len(),
            failures: outcome.failures.clone(),
            degraded: outcome.degraded.clone(),
            warnings: outcome.warnings.clone(),
            ..Self::new(plan, metrics)
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

struct Bundle<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Bundle<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), ReportError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).expect("report values serialize");
        text.push('\n');
        fs::write(&path, text).map_err(|source| ReportError::Io { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), ReportError> {
        let path = self.path(name);
        let err = |source| ReportError::Csv {
            path: path.clone(),
            source,
        };
        let mut w = csv::Writer::from_path(&path).map_err(err)?;
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(row).map_err(err)?;
        }
        w.flush().map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn selection_rows(model: &str, m: &MetricsReport) -> Vec<Vec<String>> {
    let Some(sb) = &m.selection_bias else {
        return Vec::new();
    };
    let mut rows = Vec::new();
    let mut push = |scope: &str, group: &str, tracks: &BTreeMap<Channel, TrackMetrics>| {
        for (channel, t) in tracks {
            let mut row = vec![
                model.to_string(),
                scope.to_string(),
                group.to_string(),
                channel.to_string(),
                t.runs.to_string(),
                t.accuracy.to_string(),
                opt(t.rstd),
            ];
            row.extend(OPTION_LETTERS[..ORIGINAL_OPTION_COUNT].iter().map(|&id| opt(t.recalls.recall(id))));
            rows.push(row);
        }
    };
    push("aggregate", "all", &sb.aggregate);
    for (task, tracks) in &sb.per_task {
        push("task", task, tracks);
    }
    for (sub, tracks) in &sb.per_subcategory {
        push("subcategory", sub, tracks);
    }
    rows
}

/// Writes the bundle into `dir`, creating it if needed, and returns the
/// manifest as written.
pub fn emit_report(
    dir: &Path,
    mut manifest: Manifest,
    metrics: &MetricsReport,
    priors: &BTreeMap<String, PositionPrior>,
) -> Result<Manifest, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut b = Bundle { dir, files: Vec::new() };
    let model = metrics.model_tag.as_str();

    b.json("metrics.json", metrics)?;
    b.json("priors.json", priors)?;

    let mut header = strings(&["model", "scope", "group", "track", "runs", "accuracy", "rstd"]);
    header.extend(OPTION_LETTERS[..ORIGINAL_OPTION_COUNT].iter().map(|c| format!("recall_{c}")));
    b.csv("selection_bias.csv", &header, &selection_rows(model, metrics))?;

    if let Some(ent) = &metrics.entropy {
        let kinds: Vec<PerturbationType> = PerturbationType::ENTROPY
            .into_iter()
            .filter(|k| ent.per_type.contains_key(k))
            .collect();
        let channels: Vec<Channel> = {
            let mut c: Vec<Channel> = ent.per_type.values().flat_map(|m| m.keys().copied()).collect();
            c.sort();
            c.dedup();
            c
        };
        let mut header = strings(&["model", "channel"]);
        header.extend(kinds.iter().map(|k| k.to_string()));
        let rows: Vec<Vec<String>> = channels
            .iter()
            .map(|c| {
                let mut row = vec![model.to_string(), c.to_string()];
                row.extend(
                    kinds
                        .iter()
                        .map(|k| opt(ent.per_type[k].get(c).map(|s| s.mean))),
                );
                row
            })
            .collect();
        b.csv("entropy.csv", &header, &rows)?;

        let mut rows = Vec::new();
        for (item, by_kind) in &ent.per_item {
            for (kind, by_channel) in by_kind {
                for (c, h) in by_channel {
                    rows.push(vec![item.clone(), kind.to_string(), c.to_string(), h.to_string()]);
                }
            }
        }
        b.csv(
            "entropy_items.csv",
            &strings(&["item_id", "perturbation_type", "channel", "entropy"]),
            &rows,
        )?;
    }

    if let Some(mm) = &metrics.mismatch {
        b.csv(
            "mismatch.csv",
            &strings(&["model", "baseline_rate", "all_runs_rate", "baseline_runs", "runs"]),
            &[vec![
                model.to_string(),
                opt(mm.baseline),
                mm.all_runs.to_string(),
                mm.baseline_runs.to_string(),
                mm.runs.to_string(),
            ]],
        )?;
    }

    if let Some(fl) = &metrics.floating {
        let rows: Vec<Vec<String>> = fl
            .per_channel
            .iter()
            .map(|(c, f)| vec![model.to_string(), c.to_string(), f.rate.to_string(), fl.items.to_string()])
            .collect();
        b.csv(
            "floating.csv",
            &strings(&["model", "channel", "floating_rate", "items"]),
            &rows,
        )?;
        let mut rows = Vec::new();
        for (c, f) in &fl.per_channel {
            for (arm, dist) in [("before", &f.before), ("after", &f.after)] {
                for bin in DISTRIBUTION_BINS {
                    rows.push(vec![
                        model.to_string(),
                        c.to_string(),
                        arm.to_string(),
                        bin.to_string(),
                        dist.counts.get(bin).copied().unwrap_or(0).to_string(),
                        dist.frequency(bin).to_string(),
                    ]);
                }
            }
        }
        b.csv(
            "distribution.csv",
            &strings(&["model", "channel", "arm", "bin", "count", "frequency"]),
            &rows,
        )?;
    }

    b.files.push("manifest.json".to_string());
    b.files.sort();
    manifest.files = b.files.clone();
    b.json("manifest.json", &manifest)?;
    Ok(manifest)
}
