use std::hint::black_box;

use cmdtriage_bench::{embedding_table, generations, sample_set, scored_labels};
use cmdtriage_core::embed::{embed, extract_keywords, EmbeddingTable};
use cmdtriage_core::eval::auroc;
use cmdtriage_core::skill::SkillTemplate;
use cmdtriage_core::uq::{context_sampling_uncertainty, lexical_similarity};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn pairwise(c: &mut Criterion) {
    let mut group = c.benchmark_group("context_sampling_uncertainty");
    for h in [5, 10, 20, 50] {
        let set = sample_set(h, 300, 7);
        group.bench_with_input(BenchmarkId::from_parameter(h), &set, |b, set| {
            b.iter(|| context_sampling_uncertainty(black_box(set)))
        });
    }
    group.finish();

    let set = sample_set(10, 300, 7);
    c.bench_function("lexical_similarity/10", |b| b.iter(|| lexical_similarity(black_box(&set))));
}

fn area(c: &mut Criterion) {
    let mut group = c.benchmark_group("auroc");
    for n in [100, 1_000, 10_000] {
        let (scores, labels) = scored_labels(n, 11);
        group.bench_with_input(BenchmarkId::from_parameter(n), &(scores, labels), |b, (s, l)| {
            b.iter(|| auroc(black_box(s), black_box(l)).unwrap())
        });
    }
    group.finish();
}

fn keywords(c: &mut Criterion) {
    let table: EmbeddingTable = embedding_table(300, 3);
    let template = SkillTemplate::parse("robot.pick_and_place(<pick>, <place>)").unwrap();
    let lines = generations(64, 5);
    c.bench_function("extract_and_embed/64", |b| {
        b.iter(|| {
            for line in &lines {
                let k = extract_keywords(black_box(line), &template).unwrap();
                black_box(embed(&k, &table));
            }
        })
    });
}

criterion_group!(benches, pairwise, area, keywords);
criterion_main!(benches);
