//! Benchmarks for the hot paths of the selection engine.

use std::collections::BTreeMap;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use evisel_core::eval::kendall_tau_b;
use evisel_core::infogain::{
    answer_space_ig, kl_divergence, DiscreteDistribution, MixtureAnswerModel,
};
use evisel_core::pipeline::rank_candidates;
use evisel_core::pool::{build_pool, CandidateRecord, PoolRegime, QueryRecord};
use evisel_core::scorers::SurrogateScore;
use evisel_core::seeded::{rng_for_label, uniform_f64};
use evisel_core::sim::{generate_world, WorldConfig};

fn random_scores(n: usize) -> Vec<SurrogateScore> {
    let mut rng = rng_for_label(3, "bench-scores");
    (0..n)
        .map(|i| {
            let logit = 12.0 * (uniform_f64(&mut rng) - 0.5);
            SurrogateScore {
                candidate_id: format!("cand-{i:04}"),
                raw_logit: logit,
                p_c: 1.0 / (1.0 + (-logit).exp()),
                approximate: false,
            }
        })
        .collect()
}

fn random_distribution(label: &str, n: usize) -> DiscreteDistribution {
    let mut rng = rng_for_label(3, label);
    let weights: Vec<f64> = (0..n).map(|_| 0.05 + uniform_f64(&mut rng)).collect();
    let total: f64 = weights.iter().sum();
    DiscreteDistribution::new(
        (0..n).map(|i| format!("y{i}")).collect(),
        weights.iter().map(|w| w / total).collect(),
    )
    .unwrap()
}

fn bench_ranking(c: &mut Criterion) {
    let mut group = c.benchmark_group("rank_candidates");
    for n in [10usize, 100, 1_000] {
        let scores = random_scores(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &scores, |b, scores| {
            b.iter(|| rank_candidates(black_box(scores)))
        });
    }
    group.finish();
}

fn bench_information(c: &mut Criterion) {
    let p = random_distribution("bench-p", 8);
    let q = random_distribution("bench-q", 8);
    c.bench_function("kl_divergence_8", |b| {
        b.iter(|| kl_divergence(black_box(&p), black_box(&q)).unwrap())
    });

    let lambdas: BTreeMap<String, f64> = (0..15)
        .map(|i| (format!("c{i:02}"), 0.3 + 0.04 * i as f64))
        .collect();
    let model = MixtureAnswerModel::new(
        random_distribution("bench-p0", 4),
        random_distribution("bench-p1", 4),
        lambdas,
    )
    .unwrap();
    c.bench_function("answer_space_ig", |b| {
        b.iter(|| answer_space_ig(black_box(&model), black_box("c07")).unwrap())
    });
}

fn bench_pool_build(c: &mut Criterion) {
    let query = QueryRecord {
        query_id: "bench-q".to_string(),
        question: "Which instrument is shown?".to_string(),
        choices: None,
        answer: None,
        attachment: None,
        ground_truth: (0..5)
            .map(|i| CandidateRecord {
                id: format!("gt-{i}"),
                payload: format!("ground truth {i}"),
                relevant: true,
                retrieval_score: Some(0.9 - 0.01 * i as f64),
            })
            .collect(),
        retrieved: (0..40)
            .map(|i| CandidateRecord {
                id: format!("r-{i:02}"),
                payload: format!("retrieved snippet {i}"),
                relevant: false,
                retrieval_score: Some(0.8 - 0.01 * i as f64),
            })
            .collect(),
    };
    c.bench_function("build_pool_stochastic_20", |b| {
        b.iter(|| {
            build_pool(
                black_box(&query),
                PoolRegime::GtHardNegStochastic,
                20,
                42,
            )
            .unwrap()
        })
    });
}

fn bench_metrics(c: &mut Criterion) {
    let mut rng = rng_for_label(3, "bench-tau");
    let x: Vec<f64> = (0..200).map(|_| uniform_f64(&mut rng)).collect();
    let y: Vec<f64> = (0..200).map(|_| uniform_f64(&mut rng)).collect();
    c.bench_function("kendall_tau_b_200", |b| {
        b.iter(|| kendall_tau_b(black_box(&x), black_box(&y)).unwrap())
    });
}

fn bench_world_generation(c: &mut Criterion) {
    let config = WorldConfig {
        n_queries: 50,
        ..WorldConfig::default()
    };
    c.bench_function("generate_world_50", |b| {
        b.iter(|| generate_world(black_box(&config)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_ranking,
    bench_information,
    bench_pool_build,
    bench_metrics,
    bench_world_generation
);
criterion_main!(benches);
