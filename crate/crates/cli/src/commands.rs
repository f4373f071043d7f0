use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mcqscope_core::extract::{ClassifierClient, Lexicon};
use mcqscope_core::io::{
    emit_report, load_dataset, load_items_jsonl, read_records, write_records, Endpoint, HarnessConfig, Manifest,
    OpenAiBackend, ReplayLog, ReplayRecord, ReplayWriter,
};
use mcqscope_core::protocol::{
    analyze, apply_debias, plan_campaign, plan_runs, run_campaign, CampaignOptions, CampaignOutcome, Extractor,
    ModelBackend, ResponseCache, SyntheticBackend,
};
use mcqscope_core::{McqItem, RunRecord, SyntheticResponder};

use crate::{Cli, Command, DebiasArgs, ExtractArgs, Mode, PerturbArgs, PlanArgs, ReportArgs, RunArgs, ScoreArgs};

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Perturb(a) => perturb(cli, a),
        Command::Plan(a) => plan(cli, a),
        Command::Run(a) => run(cli, a),
        Command::Extract(a) => extract(cli, a),
        Command::Debias(a) => debias(cli, a),
        Command::Score(a) => score(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

/// Config from --config, or defaults around --seed.
fn config(cli: &Cli) -> Result<HarnessConfig> {
    let mut cfg = match &cli.config {
        Some(path) => HarnessConfig::load(path)?,
        None => {
            let seed = cli
                .seed
                .ok_or_else(|| anyhow!("a seed is required: pass --config or --seed"))?;
            HarnessConfig::with_seed(seed)
        }
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

/// Config for commands that only read records; the seed may be absent.
fn scoring_config(cli: &Cli) -> Result<HarnessConfig> {
    if cli.config.is_none() && cli.seed.is_none() {
        return Ok(HarnessConfig::with_seed(0));
    }
    config(cli)
}

fn dataset(cfg: &HarnessConfig) -> Result<Vec<McqItem>> {
    let d = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| anyhow!("no [dataset] in the configuration"))?;
    let mut items = load_dataset(&d.path, &d.format, d.skip_invalid)?;
    if let Some(n) = d.limit {
        items.truncate(n);
    }
    log::info!("loaded {} items from {}", items.len(), d.path.display());
    Ok(items)
}

fn extractor(cfg: &HarnessConfig) -> Result<Extractor> {
    let lexicon = match &cfg.extraction.lexicon {
        Some(path) => Lexicon::from_path(path)?,
        None => Lexicon::default(),
    };
    Ok(Extractor {
        policy: cfg.extraction.offset.clone(),
        lexicon,
        classifier: cfg.extraction.classifier.clone().map(ClassifierClient::new),
        first_token: cfg.plan.first_token,
        text: cfg.plan.text,
    })
}

fn live_backend(cfg: &HarnessConfig) -> Result<Box<dyn ModelBackend>> {
    Ok(match cfg.model.endpoint() {
        Endpoint::Synthetic { tag } => {
            let mut responder: SyntheticResponder = cfg.synthetic.clone();
            if let Some(tag) = tag {
                responder.model_tag = tag;
            }
            Box::new(SyntheticBackend::new(responder))
        }
        Endpoint::Http(_) => Box::new(OpenAiBackend::new(cfg.model.endpoint_settings())?),
    })
}

fn options(cli: &Cli) -> CampaignOptions {
    CampaignOptions {
        jobs: cli.jobs.unwrap_or(0),
        ..Default::default()
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn summarize(outcome: &CampaignOutcome) {
    eprintln!(
        "{} of {} runs scored, {} failed",
        outcome.records.len(),
        outcome.planned,
        outcome.failures.len()
    );
    for f in &outcome.failures {
        eprintln!("  failed {}: {}", f.key, f.reason);
    }
    for w in &outcome.warnings {
        eprintln!("  warning: {w}");
    }
}

fn perturb(cli: &Cli, a: &PerturbArgs) -> Result<()> {
    let cfg = config(cli)?;
    let item = match (&a.question, &a.items) {
        (Some(q), _) => {
            let opts: Vec<String> = if a.options.is_empty() {
                ["first option", "second option", "third option", "fourth option"]
                    .map(String::from)
                    .to_vec()
            } else {
                a.options.clone()
            };
            McqItem::new(None, q, &opts, 0, "cli", "cli")?
        }
        (None, Some(path)) => {
            let items = load_items_jsonl(path)?;
            match &a.item_id {
                Some(id) => items
                    .into_iter()
                    .find(|i| &i.item_id == id)
                    .ok_or_else(|| anyhow!("no item {id} in {}", path.display()))?,
                None => items
                    .into_iter()
                    .next()
                    .ok_or_else(|| anyhow!("{} is empty", path.display()))?,
            }
        }
        (None, None) => bail!("pass --question or --items"),
    };
    let mut plan = cfg.plan.clone();
    plan.perturbations = vec![a.kind];
    plan.debias = false;
    let runs = plan_runs(&item, &plan, &cfg.prompt, false)?;
    let mut out = std::io::stdout().lock();
    for run in runs.iter().filter(|r| a.shuffle.is_none_or(|s| r.key.shuffle_index == s)) {
        writeln!(out, "== {}{}", run.key, if run.degraded { " (unchanged)" } else { "" })?;
        writeln!(out, "{}\n", run.prompt.body)?;
    }
    Ok(())
}

fn plan(cli: &Cli, a: &PlanArgs) -> Result<()> {
    let cfg = config(cli)?;
    let items = dataset(&cfg)?;
    let runs = plan_campaign(&items, &cfg.plan, &cfg.prompt)?;
    let mut text = String::new();
    for run in &runs {
        let line = serde_json::json!({
            "key": run.key,
            "prompt_digest": run.prompt.digest(),
            "permutation": run.permutation,
            "degraded": run.degraded,
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    match &a.out {
        Some(path) => {
            create_parent(path)?;
            fs::write(path, text)?;
        }
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    eprintln!("{} runs over {} items", runs.len(), items.len());
    Ok(())
}

fn write_bundle(dir: &Path, cfg: &HarnessConfig, outcome: &CampaignOutcome) -> Result<()> {
    let metrics = analyze(&outcome.records, &cfg.plan);
    let manifest = Manifest::from_outcome(&cfg.plan, outcome, &metrics);
    emit_report(&dir.join("report"), manifest, &metrics, &outcome.priors)?;
    Ok(())
}

fn run(cli: &Cli, a: &RunArgs) -> Result<()> {
    let cfg = config(cli)?;
    let out_dir = a.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    if cli.mode == Mode::Replay && a.log.is_none() {
        bail!("replay mode needs --log <replay.jsonl>");
    }
    let items = dataset(&cfg)?;
    let extractor = extractor(&cfg)?;
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let log_path: PathBuf = a.log.clone().unwrap_or_else(|| out_dir.join("replay.jsonl"));

    let outcome = match cli.mode {
        Mode::Replay => {
            let log = ReplayLog::load(&log_path)?;
            run_campaign(
                &items,
                &cfg.plan,
                &cfg.prompt,
                &log,
                None,
                &extractor,
                &mut |_| Ok(()),
                options(cli),
            )?
        }
        Mode::Live | Mode::Cache => {
            let backend = live_backend(&cfg)?;
            let (cache, writer) = if cli.mode == Mode::Cache && log_path.exists() {
                (Some(ReplayLog::load(&log_path)?), ReplayWriter::append(&log_path)?)
            } else {
                (None, ReplayWriter::create(&log_path)?)
            };
            let outcome = run_campaign(
                &items,
                &cfg.plan,
                &cfg.prompt,
                backend.as_ref(),
                cache.as_ref().map(|c| c as &dyn ResponseCache),
                &extractor,
                &mut |fresh| writer.put(&ReplayRecord::from_fresh(&fresh)).map_err(|e| e.to_string()),
                options(cli),
            )?;
            writer.flush()?;
            outcome
        }
    };
    write_records(&out_dir.join("records.jsonl"), &outcome.records)?;
    write_bundle(&out_dir, &cfg, &outcome)?;
    summarize(&outcome);
    eprintln!("wrote {}", out_dir.display());
    Ok(())
}

fn extract(cli: &Cli, a: &ExtractArgs) -> Result<()> {
    let cfg = config(cli)?;
    let items = dataset(&cfg)?;
    let log = ReplayLog::load(&a.log)?;
    let outcome = run_campaign(
        &items,
        &cfg.plan,
        &cfg.prompt,
        &log,
        None,
        &extractor(&cfg)?,
        &mut |_| Ok(()),
        options(cli),
    )?;
    create_parent(&a.out)?;
    write_records(&a.out, &outcome.records)?;
    summarize(&outcome);
    Ok(())
}

fn debias(cli: &Cli, a: &DebiasArgs) -> Result<()> {
    let cfg = scoring_config(cli)?;
    let mut records = read_records(&a.records)?;
    for r in &mut records {
        r.debiased_label = None;
        r.debiased_content = None;
    }
    let (priors, warnings) = apply_debias(&mut records, cfg.plan.num_cycles as usize);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let out = a.out.clone().unwrap_or_else(|| a.records.clone());
    create_parent(&out)?;
    write_records(&out, &records)?;
    if let Some(path) = &a.priors {
        create_parent(path)?;
        fs::write(path, serde_json::to_string_pretty(&priors)? + "\n")?;
    }
    eprintln!("estimated priors for {} tasks", priors.len());
    Ok(())
}

fn scored(cli: &Cli, records: &Path, entropy_mode: Option<mcqscope_core::protocol::EntropyMode>) -> Result<(HarnessConfig, Vec<RunRecord>)> {
    let mut cfg = scoring_config(cli)?;
    if let Some(mode) = entropy_mode {
        cfg.plan.entropy_mode = mode;
    }
    let records = read_records(records)?;
    Ok((cfg, records))
}

fn score(cli: &Cli, a: &ScoreArgs) -> Result<()> {
    let (cfg, records) = scored(cli, &a.records, a.entropy_mode)?;
    let metrics = analyze(&records, &cfg.plan);
    let text = serde_json::to_string_pretty(&metrics)? + "\n";
    match &a.out {
        Some(path) => {
            create_parent(path)?;
            fs::write(path, text)?;
        }
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn report(cli: &Cli, a: &ReportArgs) -> Result<()> {
    let (cfg, mut records) = scored(cli, &a.records, a.entropy_mode)?;
    let priors = if cfg.plan.debias {
        let (priors, warnings) = apply_debias(&mut records, cfg.plan.num_cycles as usize);
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        priors
    } else {
        Default::default()
    };
    let metrics = analyze(&records, &cfg.plan);
    let manifest = Manifest::new(&cfg.plan, &metrics);
    let written = emit_report(&a.out, manifest, &metrics, &priors)?;
    eprintln!("wrote {} files to {}", written.files.len(), a.out.display());
    Ok(())
}
