//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mcqscope_core::extract::{extract_text_answer, Lexicon};
use mcqscope_core::io::{emit_report, Manifest};
use mcqscope_core::metrics::{rstd_of, AnswerMultiset, Channel};
use mcqscope_core::model::{lettered_options, AnswerLabel, OptionKind};
use mcqscope_core::perturb::{add_extra_options, letter_swap, letter_typos, option_swap, word_swap, SeedStream};
use mcqscope_core::protocol::{
    analyze, plan_runs, run_campaign, selection_bias, CampaignOptions, CampaignPlan, Extractor, SyntheticBackend,
    INJECTED_ARM, ORIGINAL_ARM,
};
use mcqscope_core::{McqItem, PerturbationType, PromptTemplate, SyntheticResponder};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < limit, format!("took {took:?}, limit {limit:?}"))
}

// direct evaluation of the recall standard deviation
fn direct_rstd(r: &[f64]) -> f64 {
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

// direct evaluation of answer entropy in bits
fn direct_entropy(a: &[u8]) -> f64 {
    let mut counts: HashMap<u8, usize> = HashMap::new();
    for &x in a {
        *counts.entry(x).or_default() += 1;
    }
    let n = a.len() as f64;
    -counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

fn metric_oracles() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_r = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.random_range(2..=7);
        let r: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        worst_r = worst_r.max((rstd_of(&r).unwrap() - direct_rstd(&r)).abs());
    }
    let mut worst_h = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=40);
        let k = rng.random_range(1..=8u8);
        let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let h = AnswerMultiset::new(a.clone()).unwrap().entropy();
        worst_h = worst_h.max((h - direct_entropy(&a)).abs());
    }
    ensure(worst_r <= 1e-12, format!("rstd deviation {worst_r:e}"))?;
    ensure(worst_h <= 1e-12, format!("entropy deviation {worst_h:e}"))?;
    let fixed = rstd_of(&[1.0, 0.5, 0.5, 0.0]).unwrap();
    ensure(
        format!("{fixed:.10}") == "0.3535533906",
        format!("(1,.5,.5,0) gave {fixed}"),
    )?;
    let uniform = AnswerMultiset::new(vec!['A', 'B', 'C', 'D']).unwrap().entropy();
    ensure(uniform == 2.0, format!("{{A,B,C,D}} gave {uniform}"))?;
    within(Duration::from_secs(5), started)?;
    Ok(format!(
        "max |rstd - direct| = {worst_r:.1e}, max |entropy - direct| = {worst_h:.1e}, {:?}",
        started.elapsed()
    ))
}

fn random_question(rng: &mut ChaCha8Rng) -> String {
    const ALPHA: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
    let words = rng.random_range(3..=24);
    let mut out = Vec::new();
    for _ in 0..words {
        let len = rng.random_range(1..=11);
        let w: String = (0..len).map(|_| *ALPHA.choose(rng).unwrap() as char).collect();
        out.push(w);
    }
    let mut q = out.join(" ");
    if rng.random_bool(0.5) {
        q.push('?');
    }
    q
}

fn sorted_chars(s: &str) -> Vec<char> {
    let mut c: Vec<char> = s.chars().collect();
    c.sort_unstable();
    c
}

fn perturbation_invariants() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut words_total, mut words_changed) = (0usize, 0usize);
    for i in 0..10_000u32 {
        let q = random_question(&mut rng);
        let words: Vec<&str> = q.split_whitespace().collect();

        let ws = word_swap(&q, &mut SeedStream::new(3, "q", "ws", i, 0), 4);
        let swapped: Vec<&str> = ws.text.split_whitespace().collect();
        let mut a = words.clone();
        let mut b = swapped.clone();
        a.sort_unstable();
        b.sort_unstable();
        ensure(a == b, format!("word_swap multiset changed: {q:?} -> {:?}", ws.text))?;
        ensure(
            words.first() == swapped.first() && words.last() == swapped.last(),
            format!("word_swap moved an endpoint: {q:?} -> {:?}", ws.text),
        )?;

        let ls = letter_swap(&q, &mut SeedStream::new(3, "q", "ls", i, 0), 4);
        for (w, v) in words.iter().zip(ls.split_whitespace()) {
            ensure(
                w.chars().next() == v.chars().next() && w.chars().last() == v.chars().last(),
                format!("letter_swap moved a word endpoint: {w} -> {v}"),
            )?;
            ensure(sorted_chars(w) == sorted_chars(v), format!("letter_swap changed letters: {w} -> {v}"))?;
        }

        let lt = letter_typos(&q, &mut SeedStream::new(3, "q", "lt", i, 0), 0.2);
        let typo_words: Vec<&str> = lt.split_whitespace().collect();
        ensure(typo_words.len() == words.len(), "letter_typos changed word count")?;
        for (w, v) in words.iter().zip(&typo_words) {
            let diff = w.chars().zip(v.chars()).filter(|(x, y)| x != y).count();
            ensure(
                diff <= 1 && w.chars().count() == v.chars().count(),
                format!("letter_typos changed {diff} characters: {w} -> {v}"),
            )?;
            words_total += 1;
            words_changed += usize::from(diff == 1);
        }

        let contents = [
            format!("c{i}"),
            format!("d{i}"),
            format!("e{i}"),
            format!("f{i}"),
        ];
        let opts = lettered_options(&contents);
        let sorted = |o: &[mcqscope_core::OptionEntry]| {
            let mut v: Vec<String> = o.iter().map(|e| e.content.clone()).collect();
            v.sort();
            v
        };
        let os = option_swap(&opts, &mut SeedStream::new(3, "q", "os", i, 0));
        ensure(sorted(&os.options) == sorted(&opts), "option_swap changed contents")?;
        let ex = add_extra_options(&opts, &mut SeedStream::new(3, "q", "ex", i, 0)).unwrap();
        ensure(ex.options.len() == 7, "extra options count")?;
        for kind in OptionKind::SPECIALS {
            ensure(
                ex.options.iter().filter(|o| o.kind == kind).count() == 1,
                format!("extra options lack exactly one {kind:?}"),
            )?;
        }
        let regular: Vec<_> = ex
            .options
            .iter()
            .filter(|o| o.kind == OptionKind::Regular)
            .cloned()
            .collect();
        ensure(sorted(&regular) == sorted(&opts), "extra options changed regular contents")?;
    }
    let fraction = words_changed as f64 / words_total as f64;
    ensure(
        (0.15..=0.25).contains(&fraction),
        format!("changed-word fraction {fraction}"),
    )?;
    within(Duration::from_secs(30), started)?;
    Ok(format!(
        "10k questions, changed-word fraction {fraction:.4}, {:?}",
        started.elapsed()
    ))
}

fn report_bytes(jobs: usize) -> (Vec<String>, BTreeMap<String, Vec<u8>>) {
    let (cfg, outcome, log) = common::campaign50(jobs);
    let metrics = analyze(&outcome.records, &cfg.plan);
    let dir = tempfile::tempdir().unwrap();
    let manifest = Manifest::from_outcome(&cfg.plan, &outcome, &metrics);
    let written = emit_report(dir.path(), manifest, &metrics, &outcome.priors).unwrap();
    let files = written
        .files
        .iter()
        .map(|f| (f.clone(), std::fs::read(dir.path().join(f)).unwrap()))
        .collect();
    (log, files)
}

fn determinism() -> Outcome {
    let (log1, rep1) = report_bytes(1);
    let (log8, rep8) = report_bytes(8);
    let (log8b, rep8b) = report_bytes(8);
    ensure(!log1.is_empty(), "empty replay log")?;
    ensure(log1 == log8 && log8 == log8b, "replay logs differ between runs")?;
    ensure(rep1 == rep8 && rep8 == rep8b, "report bundles differ between runs")?;
    Ok(format!(
        "{} replay lines and {} report files identical at 1 and 8 workers",
        log1.len(),
        rep1.len()
    ))
}

fn extraction() -> Outcome {
    let lex = Lexicon::default();
    let table = extract_text_answer(
        "Sure! The least common multiple (LCM) of 4 and 10 is 40, so the answer is (C) 40.",
        &lettered_options(&["14", "20", "40", "60"]),
        &lex,
    );
    ensure(table.label == AnswerLabel::C, format!("worked example gave {}", table.label))?;
    let cases = common::corpus();
    let mut correct = 0;
    let mut wrong = Vec::new();
    for c in &cases {
        let got = extract_text_answer(&c.text, &c.option_entries(), &lex);
        if got.label.as_str() == c.expected {
            correct += 1;
        } else {
            wrong.push(format!("{} -> {}", c.id, got.label));
        }
        if c.rule == "contradiction" {
            ensure(got.label == AnswerLabel::NaN, format!("contradiction {} gave {}", c.id, got.label))?;
        }
    }
    let acc = correct as f64 / cases.len() as f64;
    ensure(acc >= 0.95, format!("accuracy {acc:.3}; wrong: {wrong:?}"))?;
    Ok(format!("{correct}/{} fixtures correct ({:.1}%)", cases.len(), acc * 100.0))
}

fn baseline_plan() -> CampaignPlan {
    CampaignPlan {
        perturbations: vec![PerturbationType::None],
        debias: true,
        ..Default::default()
    }
    .with_seed(11)
}

fn run(items: &[McqItem], plan: &CampaignPlan, responder: SyntheticResponder) -> Vec<mcqscope_core::RunRecord> {
    run_campaign(
        items,
        plan,
        &PromptTemplate::default(),
        &SyntheticBackend::new(responder),
        None,
        &Extractor::default(),
        &mut |_| Ok(()),
        CampaignOptions::default(),
    )
    .unwrap()
    .records
}

fn pride_simulation() -> Outcome {
    let started = Instant::now();
    let items = common::synthetic_items(1000, "sim");
    let plan = baseline_plan();
    let biased = SyntheticResponder {
        position_bias: vec![2.0, 0.0, 0.0, 0.0],
        content_skill: 0.7,
        seed: 11,
        ..Default::default()
    };
    let oracle = SyntheticResponder {
        position_bias: vec![0.0; 4],
        ..biased.clone()
    };
    let channels = [Channel::FirstToken, Channel::Debiased];
    let sb = selection_bias(&run(&items, &plan, biased), &channels).unwrap();
    let free = selection_bias(&run(&items, &plan, oracle), &channels).unwrap();
    let ft = &sb.aggregate[&Channel::FirstToken];
    let db = &sb.aggregate[&Channel::Debiased];
    let oracle_acc = free.aggregate[&Channel::FirstToken].accuracy;
    let (ft_rstd, db_rstd) = (ft.rstd.unwrap(), db.rstd.unwrap());
    let drop = 1.0 - db_rstd / ft_rstd;
    ensure(ft_rstd > 0.15, format!("first-token RStD {ft_rstd}"))?;
    ensure(drop >= 0.8, format!("RStD drop {drop:.3} ({ft_rstd} -> {db_rstd})"))?;
    ensure(
        db.accuracy >= 0.95 * oracle_acc,
        format!("debiased accuracy {} vs oracle {oracle_acc}", db.accuracy),
    )?;
    within(Duration::from_secs(60), started)?;
    Ok(format!(
        "RStD {ft_rstd:.4} -> {db_rstd:.4} (drop {:.1}%), accuracy {:.3} -> {:.3} (oracle {oracle_acc:.3}), {:?}",
        drop * 100.0,
        ft.accuracy,
        db.accuracy,
        started.elapsed()
    ))
}

fn mismatch_sweep() -> Outcome {
    let items = common::synthetic_items(5000, "sweep");
    let plan = CampaignPlan {
        debias: false,
        ..baseline_plan()
    };
    let mut gaps = Vec::new();
    for p in [0.1, 0.35, 0.5, 0.57] {
        let responder = SyntheticResponder {
            position_bias: vec![2.0, 0.0, 0.0, 0.0],
            mismatch_prob: p,
            seed: 12,
            ..Default::default()
        };
        let sb = selection_bias(&run(&items, &plan, responder), &[Channel::FirstToken, Channel::Text]).unwrap();
        let ft = sb.aggregate[&Channel::FirstToken].rstd.unwrap();
        let tx = sb.aggregate[&Channel::Text].rstd.unwrap();
        gaps.push((p, ft - tx));
    }
    for w in gaps.windows(2) {
        ensure(
            w[1].1 >= w[0].1 - 0.02,
            format!("gap fell from {:.4} at {} to {:.4} at {}", w[0].1, w[0].0, w[1].1, w[1].0),
        )?;
    }
    let shown: Vec<String> = gaps.iter().map(|(p, g)| format!("{p}:{g:.4}")).collect();
    Ok(format!("RStD gap by mismatch_prob {}", shown.join(" ")))
}

fn bookkeeping() -> Outcome {
    let items = common::items50();
    let plan = CampaignPlan::default();
    for item in &items {
        let runs = plan_runs(item, &plan, &PromptTemplate::default(), false).unwrap();
        for kind in PerturbationType::TEXTUAL {
            let n = runs.iter().filter(|r| r.key.perturbation_type == kind).count();
            ensure(n == 20, format!("{}: {n} runs for {kind}", item.item_id))?;
        }
    }
    let (cfg, outcome, _) = common::campaign50(0);
    ensure(outcome.failures.is_empty(), format!("{} failed runs", outcome.failures.len()))?;
    ensure(outcome.records.len() == outcome.planned, "records do not cover the plan")?;
    let keys: BTreeSet<_> = outcome.records.iter().map(|r| &r.key).collect();
    ensure(keys.len() == outcome.records.len(), "duplicate run keys")?;
    for item in &items {
        for arm in [ORIGINAL_ARM, INJECTED_ARM] {
            let n = outcome
                .records
                .iter()
                .filter(|r| {
                    r.key.item_id == item.item_id
                        && r.key.perturbation_type == PerturbationType::ExtraOptions
                        && r.key.perturbation_index == arm
                })
                .count();
            ensure(n == 5, format!("{}: arm {arm} has {n} records", item.item_id))?;
        }
    }
    let metrics = analyze(&outcome.records, &cfg.plan);
    let checked = common::check_against_oracle(&metrics, &common::oracle())?;
    Ok(format!(
        "20 keys per textual type on {} items, {} paired floating items, {checked} metric values equal the oracle",
        items.len(),
        metrics.floating.as_ref().map_or(0, |f| f.items)
    ))
}

fn entropy_protocol() -> Outcome {
    let items = common::items50();
    let plan = CampaignPlan {
        perturbations: vec![PerturbationType::LetterTypos, PerturbationType::OptionSwap],
        debias: false,
        ..Default::default()
    }
    .with_seed(13);
    // picks by position only, so its answer moves only when options move
    let responder = SyntheticResponder {
        position_bias: vec![3.0, 0.0, 0.0, 0.0],
        content_strength: 0.0,
        seed: 13,
        ..Default::default()
    };
    let report = analyze(&run(&items, &plan, responder), &plan);
    let ent = report.entropy.ok_or("no entropy report")?;
    ensure(ent.excluded.is_empty(), "items excluded")?;
    let typos = ent.per_type[&PerturbationType::LetterTypos][&Channel::FirstToken].mean;
    let swap = ent.per_type[&PerturbationType::OptionSwap][&Channel::FirstToken].mean;
    ensure(typos == 0.0, format!("letter_typos entropy {typos}"))?;
    ensure(swap > 0.0, format!("option_swap entropy {swap}"))?;
    let typos_text = ent.per_type[&PerturbationType::LetterTypos][&Channel::Text].mean;
    ensure(typos_text == 0.0, format!("letter_typos text entropy {typos_text}"))?;
    Ok(format!("letter_typos entropy {typos}, option_swap entropy {swap:.4}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("metric oracles", metric_oracles),
        ("perturbation invariants", perturbation_invariants),
        ("determinism", determinism),
        ("extraction", extraction),
        ("prior-estimation debiasing simulation", pride_simulation),
        ("mismatch-robustness relationship", mismatch_sweep),
        ("protocol bookkeeping", bookkeeping),
        ("entropy protocol", entropy_protocol),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panic".into())));
        match result {
            Ok(detail) => println!("criterion {} [PRIMARY] {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} [PRIMARY] {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
