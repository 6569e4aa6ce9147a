use acos_core::dataset::{Quadruple, Sentiment, Term};
use acos_core::parser::parse_quads;
use acos_core::prompt::render_shot;
use acos_core::retrieval::{select_knn, TfidfIndex};
use acos_core::scoring::{score_example, MatchPolicy};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sentence(rng: &mut ChaCha8Rng, vocab: usize) -> String {
    let len = rng.random_range(5..=25);
    (0..len)
        .map(|_| format!("w{}", rng.random_range(0..vocab)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn knn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let docs: Vec<String> = (0..2000).map(|_| sentence(&mut rng, 3000)).collect();
    let ids: Vec<String> = (0..docs.len()).map(|i| i.to_string()).collect();
    let pairs = || {
        ids.iter()
            .map(String::as_str)
            .zip(docs.iter().map(String::as_str))
    };
    let index = TfidfIndex::from_documents(pairs()).unwrap();
    let queries: Vec<String> = (0..32).map(|_| sentence(&mut rng, 3000)).collect();

    c.bench_function("tfidf_build_2000", |b| {
        b.iter(|| TfidfIndex::from_documents(black_box(pairs())).unwrap())
    });
    let mut group = c.benchmark_group("select_knn_2000");
    for k in [5, 20, 40] {
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            let mut i = 0;
            b.iter(|| {
                i = (i + 1) % queries.len();
                select_knn(black_box(&queries[i]), &index, k).unwrap()
            })
        });
    }
    group.finish();
}

fn quads(n: usize, rng: &mut ChaCha8Rng) -> Vec<Quadruple> {
    let words = ["pizza", "crust", "staff", "wine list", "slow", "good", "fresh"];
    (0..n)
        .map(|_| {
            let mut term = || {
                if rng.random_bool(0.2) {
                    Term::Implicit
                } else {
                    Term::explicit(words[rng.random_range(0..words.len())])
                }
            };
            let (a, o) = (term(), term());
            Quadruple::new(a, "food quality", o, Sentiment::Positive)
        })
        .collect()
}

fn parse(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let response = format!(
        "Sure! Here you go:\n```\n{}\n```",
        render_shot("text", &quads(8, &mut rng))
    );
    c.bench_function("parse_quads_8", |b| {
        b.iter(|| parse_quads(black_box(&response), &[]))
    });
}

fn matching(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let preds = quads(12, &mut rng);
    let golds = quads(12, &mut rng);
    let policy = MatchPolicy::relaxed(0.5).unwrap();
    c.bench_function("relaxed_match_12x12", |b| {
        b.iter(|| score_example(black_box(&preds), black_box(&golds), policy))
    });
}

criterion_group!(benches, knn, parse, matching);
criterion_main!(benches);
