#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mcqscope_core::io::{load_items_jsonl, HarnessConfig};
use mcqscope_core::model::{lettered_options, OptionEntry};
use mcqscope_core::perturb::with_special_options;
use mcqscope_core::protocol::{run_campaign, CampaignOptions, CampaignOutcome, Extractor, SyntheticBackend};
use mcqscope_core::{McqItem, MetricsReport};
use serde::Deserialize;
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn items50() -> Vec<McqItem> {
    load_items_jsonl(&fixture("items50.jsonl")).unwrap()
}

#[derive(Debug, Clone, Deserialize)]
pub struct CorpusCase {
    pub id: String,
    pub rule: String,
    pub text: String,
    pub options: Vec<String>,
    pub extra_options: bool,
    pub expected: String,
}

impl CorpusCase {
    pub fn option_entries(&self) -> Vec<OptionEntry> {
        let regular = lettered_options(&self.options);
        if self.extra_options {
            with_special_options(&regular).unwrap()
        } else {
            regular
        }
    }
}

pub fn corpus() -> Vec<CorpusCase> {
    std::fs::read_to_string(fixture("extraction_corpus.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn campaign50_config() -> HarnessConfig {
    HarnessConfig::load(&fixture("campaign50.toml")).unwrap()
}

/// Runs the fixture campaign in process with `jobs` workers, collecting
/// replay lines.
pub fn campaign50(jobs: usize) -> (HarnessConfig, CampaignOutcome, Vec<String>) {
    let cfg = campaign50_config();
    let mut responder = cfg.synthetic.clone();
    responder.model_tag = "fixture-model".into();
    let backend = SyntheticBackend::new(responder);
    let extractor = Extractor {
        policy: cfg.extraction.offset.clone(),
        ..Default::default()
    };
    let mut log = Vec::new();
    let outcome = run_campaign(
        &items50(),
        &cfg.plan,
        &cfg.prompt,
        &backend,
        None,
        &extractor,
        &mut |fresh| {
            let rec = mcqscope_core::io::ReplayRecord::from_fresh(&fresh);
            log.push(serde_json::to_string(&rec).unwrap());
            Ok(())
        },
        CampaignOptions { jobs, chunk_size: 512 },
    )
    .unwrap();
    (cfg, outcome, log)
}

pub fn oracle() -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture("oracle_metrics.json")).unwrap()).unwrap()
}

fn same(what: &str, got: f64, want: &Value) -> Result<(), String> {
    let want = want.as_f64().ok_or_else(|| format!("{what}: oracle value missing"))?;
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, oracle {want}"))
    }
}

/// Compares a metrics report with the precomputed oracle; every value must
/// match exactly.
pub fn check_against_oracle(m: &MetricsReport, oracle: &Value) -> Result<usize, String> {
    let mut checked = 0;
    let mut check = |what: String, got: f64, want: &Value| {
        checked += 1;
        same(&what, got, want)
    };
    check("runs".into(), m.runs as f64, &oracle["runs"])?;
    check("items".into(), m.items as f64, &oracle["items"])?;
    let sb = m.selection_bias.as_ref().ok_or("no selection bias")?;
    for (name, track) in &sb.aggregate {
        let o = &oracle["selection_bias"][name.as_str()];
        check(format!("{name} accuracy"), track.accuracy, &o["accuracy"])?;
        check(format!("{name} rstd"), track.rstd.ok_or("rstd undefined")?, &o["rstd"])?;
        for (id, r) in track.recalls.defined() {
            check(format!("{name} recall {id}"), r, &o["recalls"][id.to_string()])?;
        }
    }
    let mm = m.mismatch.as_ref().ok_or("no mismatch")?;
    check("mismatch baseline".into(), mm.baseline.ok_or("undefined")?, &oracle["mismatch"]["baseline"])?;
    check("mismatch all".into(), mm.all_runs, &oracle["mismatch"]["all_runs"])?;
    let ent = m.entropy.as_ref().ok_or("no entropy")?;
    for (kind, by_channel) in &ent.per_type {
        for (ch, s) in by_channel {
            check(
                format!("{kind} {ch} entropy"),
                s.mean,
                &oracle["entropy"][kind.as_str()][ch.as_str()],
            )?;
        }
    }
    let fl = m.floating.as_ref().ok_or("no floating")?;
    for (ch, f) in &fl.per_channel {
        let o = &oracle["floating"][ch.as_str()];
        check(format!("{ch} floating"), f.rate, &o["rate"])?;
        for (arm, dist) in [("before", &f.before), ("after", &f.after)] {
            for (bin, &count) in dist.counts.iter().filter(|(_, c)| **c > 0) {
                check(format!("{ch} {arm} {bin}"), count as f64, &o[arm][bin])?;
            }
            let total: u64 = o[arm].as_object().ok_or("bad oracle")?.values().filter_map(Value::as_u64).sum();
            check(format!("{ch} {arm} total"), dist.total as f64, &Value::from(total))?;
        }
    }
    Ok(checked)
}

/// Synthetic 4-option items with distinct contents, gold cycling A..D.
pub fn synthetic_items(n: usize, task: &str) -> Vec<McqItem> {
    (0..n)
        .map(|i| {
            McqItem::new(
                Some(format!("{task}/{i:05}")),
                format!("Which of the listed values is correct for synthetic question number {i}?"),
                &[format!("{i}-alpha"), format!("{i}-beta"), format!("{i}-gamma"), format!("{i}-delta")],
                i % 4,
                task,
                "synthetic",
            )
            .unwrap()
        })
        .collect()
}
