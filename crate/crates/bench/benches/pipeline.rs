use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use mcqscope_bench::{items, REPLIES};
use mcqscope_core::extract::{extract_text_answer, Lexicon};
use mcqscope_core::perturb::{add_extra_options, letter_swap, letter_typos, word_swap, SeedStream};
use mcqscope_core::protocol::{
    analyze, run_campaign, CampaignOptions, CampaignPlan, Extractor, SyntheticBackend,
};
use mcqscope_core::{PromptTemplate, SyntheticResponder};

fn perturbations(c: &mut Criterion) {
    let item = &items(1, 1)[0];
    let mut g = c.benchmark_group("perturb");
    g.bench_function("letter_typos", |b| {
        b.iter(|| letter_typos(black_box(&item.question), &mut SeedStream::new(1, "i", "t", 0, 0), 0.2))
    });
    g.bench_function("letter_swap", |b| {
        b.iter(|| letter_swap(black_box(&item.question), &mut SeedStream::new(1, "i", "s", 0, 0), 4))
    });
    g.bench_function("word_swap", |b| {
        b.iter(|| word_swap(black_box(&item.question), &mut SeedStream::new(1, "i", "w", 0, 0), 4))
    });
    g.bench_function("extra_options", |b| {
        b.iter(|| add_extra_options(black_box(&item.options), &mut SeedStream::new(1, "i", "e", 0, 0)))
    });
    g.finish();
}

fn extraction(c: &mut Criterion) {
    let item = &items(1, 1)[0];
    let lex = Lexicon::default();
    let mut g = c.benchmark_group("extract_text");
    g.throughput(Throughput::Elements(REPLIES.len() as u64));
    g.bench_function("cascade", |b| {
        b.iter(|| {
            for r in REPLIES {
                black_box(extract_text_answer(r, &item.options, &lex));
            }
        })
    });
    g.finish();
}

fn campaign(c: &mut Criterion) {
    let mut g = c.benchmark_group("campaign");
    g.sample_size(10);
    let plan = CampaignPlan::default().with_seed(7);
    let backend = SyntheticBackend::new(SyntheticResponder {
        position_bias: vec![1.0, 0.0, 0.0, 0.3],
        mismatch_prob: 0.2,
        ..Default::default()
    });
    for n in [20, 80] {
        let items = items(n, 4);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("synthetic", n), &items, |b, items| {
            b.iter(|| {
                let out = run_campaign(
                    items,
                    &plan,
                    &PromptTemplate::default(),
                    &backend,
                    None,
                    &Extractor::default(),
                    &mut |_| Ok(()),
                    CampaignOptions::default(),
                )
                .unwrap();
                analyze(&out.records, &plan)
            })
        });
    }
    g.finish();
}

criterion_group!(benches, perturbations, extraction, campaign);
criterion_main!(benches);
