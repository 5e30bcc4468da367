//! Acceptance gate for the evidence-selection engine.
//!
//! Each test is one release criterion and prints a `[acceptance]` line on
//! success. A11 talks to a live OpenAI-compatible endpoint and only runs
//! with `--ignored` plus the `EVISEL_LIVE_*` environment variables set.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use evisel_core::backend::{InstrumentedBackend, MessagePart, SyntheticBackend};
use evisel_core::eval::{
    false_positive_rate, gt_hit_rate, kendall_tau_b, PairedScore,
};
use evisel_core::infogain::{
    bernoulli_ig, check_latent_order_agreement, kl_divergence, mixture_distribution,
    BernoulliHelpfulness, DiscreteDistribution, MixtureAnswerModel,
};
use evisel_core::pipeline::{
    estimate_cost, rank_candidates, run_pipeline, select_top_k, text_payload_mapper,
    PhaseCost, PipelineConfig, PipelineInputs, SelectionPolicy, MODEL_PROFILES,
};
use evisel_core::pool::{CandidateOrigin, Pool, PoolCandidate, PoolRegime};
use evisel_core::scorers::SurrogateScore;
use evisel_core::seeded::{bounded_u64, rng_for_label, shuffle, uniform_f64, ChaCha8Rng};
use evisel_core::sim::{
    brute_force_ig_y, generate_world, run_strategy_comparison, Strategy, WorldConfig,
};
use evisel_core::templates;

/// Writes directly to stdout so the line survives libtest capture.
fn pass(criterion: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "[acceptance] {criterion}: PASS").unwrap();
}

#[test]
fn a1_helpfulness_order_is_equivalent_to_latent_gain_order() {
    let mut rng = rng_for_label(2026, "latent-order");
    let start = Instant::now();
    for _ in 0..10_000 {
        let p_bar = 0.01 + 0.98 * uniform_f64(&mut rng);
        let p1 = p_bar + (1.0 - p_bar) * uniform_f64(&mut rng);
        let p2 = p_bar + (1.0 - p_bar) * uniform_f64(&mut rng);
        let record = check_latent_order_agreement(p_bar, p1, p2).unwrap();
        assert!(
            !record.violated,
            "order disagreement at p_bar={p_bar} p1={p1} p2={p2}: {record:?}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "10k draws took {elapsed:?}");
    pass("A1 helpfulness-probability order matches latent information-gain order (10000 draws)");
}

fn random_distribution(rng: &mut ChaCha8Rng, outcomes: &[String]) -> DiscreteDistribution {
    let weights: Vec<f64> = outcomes.iter().map(|_| 0.05 + uniform_f64(rng)).collect();
    let total: f64 = weights.iter().sum();
    DiscreteDistribution::new(
        outcomes.to_vec(),
        weights.iter().map(|w| w / total).collect(),
    )
    .unwrap()
}

#[test]
fn a2_latent_gain_order_transfers_to_answer_space_gain_order() {
    let mut rng = rng_for_label(2026, "transfer-worlds");
    let start = Instant::now();
    let mut pairs_checked = 0usize;
    for world_index in 0..1_000 {
        let space = 2 + bounded_u64(&mut rng, 7) as usize;
        let outcomes: Vec<String> = (0..space).map(|i| format!("y{i}")).collect();
        let p0 = random_distribution(&mut rng, &outcomes);
        let p1 = random_distribution(&mut rng, &outcomes);
        let p_bar = 0.05 + 0.55 * uniform_f64(&mut rng);
        let n_candidates = 3 + bounded_u64(&mut rng, 4) as usize;
        let mut helpfulness = BTreeMap::new();
        let mut lambdas = BTreeMap::new();
        for c in 0..n_candidates {
            let id = format!("c{c}");
            let p_c = p_bar + (1.0 - p_bar) * uniform_f64(&mut rng);
            // Both maps are strictly increasing in p_c, which is what the
            // transfer property assumes.
            let lambda = if world_index % 2 == 0 {
                p_c
            } else {
                0.25 + 0.75 * p_c
            };
            helpfulness.insert(id.clone(), p_c);
            lambdas.insert(id, lambda);
        }
        let model = MixtureAnswerModel::new(p0, p1, lambdas).unwrap();
        let ids: Vec<&str> = model.candidate_ids().collect();
        for &first in &ids {
            for &second in &ids {
                if first == second {
                    continue;
                }
                // The property speaks about candidates at or above the mean
                // usage weight; the rest are out of premise.
                if model.lambda(first).unwrap() < model.lambda_bar()
                    || model.lambda(second).unwrap() < model.lambda_bar()
                {
                    continue;
                }
                let z1 = bernoulli_ig(&BernoulliHelpfulness::new(helpfulness[first], p_bar).unwrap());
                let z2 = bernoulli_ig(&BernoulliHelpfulness::new(helpfulness[second], p_bar).unwrap());
                if z1 < z2 {
                    continue;
                }
                let y1 = brute_force_ig_y(&model, first).unwrap();
                let y2 = brute_force_ig_y(&model, second).unwrap();
                assert!(
                    y1 >= y2 - 1e-9,
                    "transfer violated in world {world_index}: z=({z1},{z2}) y=({y1},{y2})"
                );
                pairs_checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(pairs_checked > 1_000, "only {pairs_checked} pairs exercised");
    assert!(elapsed.as_secs_f64() < 10.0, "1k worlds took {elapsed:?}");
    pass("A2 latent gain order transfers to brute-force answer-space gain (1000 worlds)");
}

#[test]
fn a3_divergence_identities_and_usage_gain_shape_hold() {
    let mut rng = rng_for_label(2026, "divergence-identities");

    // g(lambda) = KL(P_lambda || P_lambda_bar) vanishes at the mean and is
    // convex and nondecreasing above it.
    for _ in 0..1_000 {
        let space = 2 + bounded_u64(&mut rng, 7) as usize;
        let outcomes: Vec<String> = (0..space).map(|i| format!("y{i}")).collect();
        let p0 = random_distribution(&mut rng, &outcomes);
        let p1 = random_distribution(&mut rng, &outcomes);
        let lambda_bar = 0.05 + 0.9 * uniform_f64(&mut rng);
        let model = MixtureAnswerModel::new(
            p0,
            p1,
            BTreeMap::from([("anchor".to_string(), lambda_bar)]),
        )
        .unwrap();
        let reference = mixture_distribution(&model, model.lambda_bar()).unwrap();
        let g = |lam: f64| {
            kl_divergence(&mixture_distribution(&model, lam).unwrap(), &reference).unwrap()
        };
        assert!(g(model.lambda_bar()) <= 1e-12);
        let steps = 9;
        let values: Vec<f64> = (0..=steps)
            .map(|i| {
                let lam = lambda_bar + (1.0 - lambda_bar) * i as f64 / steps as f64;
                g(lam.min(1.0))
            })
            .collect();
        for pair in values.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-10, "not nondecreasing: {values:?}");
        }
        for triple in values.windows(3) {
            assert!(
                triple[2] - 2.0 * triple[1] + triple[0] >= -1e-10,
                "not convex: {values:?}"
            );
        }
    }

    // The latent gain is exactly the two-outcome KL divergence.
    for _ in 0..10_000 {
        let p_bar = 0.01 + 0.98 * uniform_f64(&mut rng);
        let p = 0.001 + 0.998 * uniform_f64(&mut rng);
        let direct = bernoulli_ig(&BernoulliHelpfulness::new(p, p_bar).unwrap());
        let outcomes = vec!["helpful".to_string(), "unhelpful".to_string()];
        let two_way = kl_divergence(
            &DiscreteDistribution::new(outcomes.clone(), vec![p, 1.0 - p]).unwrap(),
            &DiscreteDistribution::new(outcomes, vec![p_bar, 1.0 - p_bar]).unwrap(),
        )
        .unwrap();
        assert!((direct - two_way).abs() < 1e-12, "p={p} p_bar={p_bar}");
    }

    // KL is nonnegative and zero exactly on equal distributions.
    for _ in 0..1_000 {
        let space = 2 + bounded_u64(&mut rng, 7) as usize;
        let outcomes: Vec<String> = (0..space).map(|i| format!("y{i}")).collect();
        let d = random_distribution(&mut rng, &outcomes);
        let e = random_distribution(&mut rng, &outcomes);
        assert_eq!(kl_divergence(&d, &d).unwrap(), 0.0);
        let divergence = kl_divergence(&d, &e).unwrap();
        assert!(divergence >= 0.0);
        let max_gap = d
            .probs()
            .iter()
            .zip(e.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if max_gap > 1e-9 {
            assert!(divergence > 0.0, "gap {max_gap} but zero divergence");
        }
    }
    pass("A3 divergence identities: g(mean)=0, convex nondecreasing, Bernoulli gain = two-outcome KL");
}

#[test]
fn a4_published_cost_profiles_reproduce_the_claimed_ratios() {
    for profile in &MODEL_PROFILES {
        let recomputed = f64::from(profile.verbalized.decode_tokens)
            / f64::from(profile.discriminative.decode_tokens);
        assert_eq!(profile.decode_ratio(), recomputed, "{}", profile.id);
        assert!(
            profile.decode_ratio() >= 20.0,
            "{}: decode ratio {:.2} under 20",
            profile.id,
            profile.decode_ratio()
        );
    }
    let min_ratio = MODEL_PROFILES
        .iter()
        .map(|p| p.decode_ratio())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(min_ratio, 103.0 / 4.0);

    let surrogate = MODEL_PROFILES.iter().find(|p| p.id == "qwen3-vl-2b").unwrap();
    let main = MODEL_PROFILES.iter().find(|p| p.id == "qwen3-vl-8b").unwrap();
    let estimate = estimate_cost(
        10,
        surrogate.discriminative.prefill_flops_phase(),
        0.0,
        main.discriminative.prefill_flops_phase(),
        0.0,
    );
    assert_eq!(estimate.surrogate_route, 14_270.0);
    assert_eq!(estimate.main_route, 47_960.0);
    assert!((estimate.ratio - 3.360_896_986_685_35).abs() < 1e-12);
    assert!((estimate.ratio - 3.36).abs() <= 0.01);
    pass("A4 cost profiles: all decode ratios over 20x, prefill advantage 47960/14270 = 3.36");
}

#[test]
fn a5_probe_route_is_cheaper_iff_the_surrogate_is_cheaper_per_candidate() {
    let mut rng = rng_for_label(2026, "efficiency-law");
    for _ in 0..1_000 {
        let n = 1 + bounded_u64(&mut rng, 64) as usize;
        let surrogate = PhaseCost {
            prefill: 1e-3 + 1e4 * uniform_f64(&mut rng),
            decode_per_step: 1e-3 + 1e2 * uniform_f64(&mut rng),
        };
        let main = PhaseCost {
            prefill: 1e-3 + 1e4 * uniform_f64(&mut rng),
            decode_per_step: 1e-3 + 1e2 * uniform_f64(&mut rng),
        };
        let s_steps = 32.0 * uniform_f64(&mut rng);
        let m_steps = 32.0 * uniform_f64(&mut rng);
        let estimate = estimate_cost(n, surrogate, s_steps, main, m_steps);
        let cheaper_probe = surrogate.total(s_steps) < main.total(m_steps);
        assert_eq!(
            estimate.surrogate_route < estimate.main_route,
            cheaper_probe,
            "n={n} surrogate={surrogate:?} main={main:?}"
        );
    }
    pass("A5 probe route beats the standard route exactly when the surrogate call is cheaper (1000 profiles)");
}

/// Quartile-intersection rate recomputed from first principles, used as an
/// independent oracle for `false_positive_rate`.
fn oracle_false_positive_rate(scores: &[PairedScore], q: f64) -> f64 {
    let n = scores.len();
    let m = (q * n as f64).ceil() as usize;
    let mut by_surrogate: Vec<&PairedScore> = scores.iter().collect();
    by_surrogate.sort_by(|a, b| b.surrogate.total_cmp(&a.surrogate));
    let top: std::collections::BTreeSet<&str> = by_surrogate[..m]
        .iter()
        .map(|s| s.candidate_id.as_str())
        .collect();
    let mut by_main: Vec<&PairedScore> = scores.iter().collect();
    by_main.sort_by(|a, b| a.main.total_cmp(&b.main));
    let overlap = by_main[..m]
        .iter()
        .filter(|s| top.contains(s.candidate_id.as_str()))
        .count();
    overlap as f64 / m as f64
}

#[test]
fn a6_agreement_metrics_match_independent_oracles() {
    let mut rng = rng_for_label(2026, "metric-oracles");
    for trial in 0..1_000 {
        let n = 4 + bounded_u64(&mut rng, 61) as usize;
        // Distinct scores by construction, so every ordering is unambiguous
        // and the oracle needs no tie rule.
        let mut surrogate_ranks: Vec<usize> = (0..n).collect();
        let mut main_ranks: Vec<usize> = (0..n).collect();
        shuffle(&mut rng, &mut surrogate_ranks);
        shuffle(&mut rng, &mut main_ranks);
        let scores: Vec<PairedScore> = (0..n)
            .map(|i| PairedScore {
                candidate_id: format!("c{i:03}"),
                surrogate: surrogate_ranks[i] as f64 + 0.5 * uniform_f64(&mut rng) / n as f64,
                main: main_ranks[i] as f64 + 0.5 * uniform_f64(&mut rng) / n as f64,
            })
            .collect();
        let q = if trial % 2 == 0 {
            0.25
        } else {
            0.1 + 0.9 * uniform_f64(&mut rng)
        };
        assert_eq!(
            false_positive_rate(&scores, q).unwrap(),
            oracle_false_positive_rate(&scores, q),
            "trial {trial} n={n} q={q}"
        );
    }

    let mut values: Vec<f64> = (0..50).map(|_| uniform_f64(&mut rng)).collect();
    values.sort_by(f64::total_cmp);
    let reversed: Vec<f64> = values.iter().rev().copied().collect();
    assert_eq!(kendall_tau_b(&values, &values).unwrap(), 1.0);
    assert_eq!(kendall_tau_b(&values, &reversed).unwrap(), -1.0);

    assert_eq!(gt_hit_rate(&[1.0, 1.0, 1.0]).unwrap(), 100.0);
    assert_eq!(gt_hit_rate(&[0.0, 0.0]).unwrap(), 0.0);
    pass("A6 false-positive rate matches a first-principles oracle; rank metrics hit exact endpoints");
}

fn ten_candidate_pool() -> Pool {
    Pool {
        query_id: "q-accept".to_string(),
        regime: PoolRegime::BenchmarkDefault,
        size_target: 10,
        under_filled: false,
        candidates: (0..10)
            .map(|i| PoolCandidate {
                id: format!("cand-{i:02}"),
                payload: format!("evidence snippet {i}"),
                relevant: i < 3,
                origin: if i < 3 {
                    CandidateOrigin::GroundTruth
                } else {
                    CandidateOrigin::Retrieved
                },
            })
            .collect(),
    }
}

#[test]
fn a7_pipeline_spends_n_probe_calls_plus_one_generation() {
    let pool = ten_candidate_pool();
    let choices = [
        "violin".to_string(),
        "cello".to_string(),
        "oboe".to_string(),
        "tuba".to_string(),
    ];
    let surrogate = InstrumentedBackend::new(SyntheticBackend::new(9));
    let main = InstrumentedBackend::new(SyntheticBackend::new(10));
    let inputs = PipelineInputs {
        pool: &pool,
        question: "Which instrument is shown?",
        choices: Some(&choices),
        query_attachments: &[MessagePart::text("query context")],
        probe_template: templates::get("mragbench/aux").unwrap(),
        answer_template: templates::get("mragbench/answer_rag").unwrap(),
        payload_mapper: &text_payload_mapper,
    };
    let outcome = run_pipeline(&surrogate, &main, &inputs, &PipelineConfig::new(4)).unwrap();
    assert_eq!(surrogate.calls(), pool.candidates.len());
    assert_eq!(main.calls(), 1);
    assert_eq!(outcome.probes_attempted, pool.candidates.len());
    assert_eq!(outcome.selection.selected.len(), 4);

    // Every top-k cut is a prefix of the full ranking.
    let ranked = &outcome.selection.ranked;
    for k in 1..=ranked.len() {
        let cut = select_top_k(ranked, &SelectionPolicy::new(k)).unwrap();
        assert_eq!(cut.selected, ranked[..k], "k={k} is not a prefix");
    }

    // The ranking only reads the order of the scores, so any strictly
    // increasing transform leaves it unchanged.
    let mut rng = rng_for_label(2026, "monotone-transforms");
    let baseline: Vec<&str> = ranked.iter().map(|s| s.candidate_id.as_str()).collect();
    for _ in 0..100 {
        let a = 0.1 + 3.0 * uniform_f64(&mut rng);
        let b = 0.1 + 3.0 * uniform_f64(&mut rng);
        let c = 10.0 * (uniform_f64(&mut rng) - 0.5);
        let transformed: Vec<SurrogateScore> = ranked
            .iter()
            .map(|s| SurrogateScore {
                raw_logit: a * s.raw_logit.powi(3) + b * s.raw_logit + c,
                ..s.clone()
            })
            .collect();
        let reranked = rank_candidates(&transformed);
        let order: Vec<&str> = reranked.iter().map(|s| s.candidate_id.as_str()).collect();
        assert_eq!(order, baseline, "transform ({a},{b},{c}) changed the order");
    }
    pass("A7 pipeline: N probes + 1 generation, prefix-consistent cuts, transform-invariant ranking");
}

fn write_fixture_queries(path: &Path) {
    let rows = [
        serde_json::json!({
            "query_id": "q1",
            "question": "Which instrument is shown on the poster?",
            "choices": ["violin", "cello", "oboe", "tuba"],
            "answer": "cello",
            "ground_truth": [
                {"id": "gt-1", "payload": "text:The poster features a cello recital.", "relevant": true, "retrieval_score": 0.9}
            ],
            "retrieved": (0..12).map(|i| serde_json::json!({
                "id": format!("r-{i}"),
                "payload": format!("text:Retrieved snippet number {i}."),
                "relevant": i == 0,
                "retrieval_score": 0.8 - 0.05 * i as f64
            })).collect::<Vec<_>>()
        }),
        serde_json::json!({
            "query_id": "q2",
            "question": "What color is the banner?",
            "choices": ["red", "blue", "green", "white"],
            "answer": "blue",
            "ground_truth": [
                {"id": "gt-1", "payload": "text:The banner is blue.", "relevant": true, "retrieval_score": 0.9}
            ],
            "retrieved": (0..12).map(|i| serde_json::json!({
                "id": format!("r-{i}"),
                "payload": format!("text:Banner detail {i}."),
                "relevant": false,
                "retrieval_score": 0.7 - 0.05 * i as f64
            })).collect::<Vec<_>>()
        }),
    ];
    let mut body = String::new();
    for row in &rows {
        body.push_str(&row.to_string());
        body.push('\n');
    }
    std::fs::write(path, body).unwrap();
}

fn run_binary(args: &[&str]) -> std::process::Output {
    let output = Command::new(env!("CARGO_BIN_EXE_evisel"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "evisel {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn a8_identical_invocations_produce_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let queries = dir.path().join("queries.ldjson");
    write_fixture_queries(&queries);
    let queries = queries.to_str().unwrap();

    let mut run_outputs: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for pass_index in 0..2 {
        let out = dir.path().join(format!("run-{pass_index}.ldjson"));
        let stdout = run_binary(&[
            "run",
            "--queries",
            queries,
            "--out",
            out.to_str().unwrap(),
            "--backend",
            "synthetic",
            "--k",
            "3",
            "--seed",
            "29",
        ])
        .stdout;
        run_outputs.push((std::fs::read(&out).unwrap(), stdout));
    }
    assert_eq!(run_outputs[0], run_outputs[1], "run outputs drifted");

    let mut sim_outputs: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for pass_index in 0..2 {
        let out = dir.path().join(format!("sim-{pass_index}.ldjson"));
        let stdout = run_binary(&[
            "simulate",
            "--queries-n",
            "40",
            "--trials",
            "10",
            "--ks",
            "2,4",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "29",
        ])
        .stdout;
        sim_outputs.push((std::fs::read(&out).unwrap(), stdout));
    }
    assert_eq!(sim_outputs[0], sim_outputs[1], "simulate outputs drifted");
    pass("A8 reruns with the same seed and config are byte-identical (run and simulate)");
}

#[test]
fn a9_utility_ranking_beats_relevance_and_random_on_hit_rate() {
    // Margins measured once on this fixed world and asserted ever since;
    // observed utility/relevance/random hit rates at k = 1, 3, 5 were
    // 100/84.5/35.5, 100/74.2/34.5, and 100/65.3/34.6 percent.
    let config = WorldConfig {
        relevance_snr: 1.0,
        ..WorldConfig::default()
    };
    assert!(config.n_queries >= 200);
    let world = generate_world(&config).unwrap();
    let outcomes = run_strategy_comparison(&world, &[1, 3, 5], 1, 7).unwrap();
    let hit = |strategy: Strategy, k: usize| -> f64 {
        outcomes
            .iter()
            .find(|o| o.strategy == strategy && o.k == k)
            .map(|o| o.mean_hit_fraction * 100.0)
            .unwrap()
    };
    for k in [1, 3, 5] {
        let utility = hit(Strategy::UtilityPc, k);
        let relevance = hit(Strategy::RelevanceScore, k);
        let random = hit(Strategy::Random, k);
        assert_eq!(utility, 100.0, "k={k}");
        assert!(
            utility - relevance > 5.0,
            "k={k}: utility {utility:.2} vs relevance {relevance:.2}"
        );
        assert!(
            utility - random > 10.0,
            "k={k}: utility {utility:.2} vs random {random:.2}"
        );
    }
    pass("A9 utility ranking beats relevance by >5 and random by >10 hit-rate points at k=1,3,5");
}

#[test]
fn a10_rendered_prompts_match_checked_in_golden_files() {
    let golden_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    let ctx = templates::RenderContext {
        question: Some("Which instrument is shown on the poster?".to_string()),
        options: Some([
            "violin".to_string(),
            "cello".to_string(),
            "oboe".to_string(),
            "tuba".to_string(),
        ]),
        choices: Some(vec![
            "violin".to_string(),
            "cello".to_string(),
            "oboe".to_string(),
            "tuba".to_string(),
        ]),
        num_images: Some(3),
        image_count: Some(3),
    };
    let mut checked = 0usize;
    for template in templates::registry() {
        let golden = golden_dir.join(format!("{}.txt", template.id().replace('/', "__")));
        let expected = std::fs::read_to_string(&golden)
            .unwrap_or_else(|e| panic!("{}: {e}", golden.display()));
        assert_eq!(
            template.render(&ctx).unwrap(),
            expected,
            "{} drifted from {}",
            template.id(),
            golden.display()
        );
        checked += 1;
    }
    assert_eq!(checked, 18);
    pass("A10 all 18 rendered prompts byte-match their golden files");
}

/// Opt-in smoke test against a real endpoint. Set `EVISEL_LIVE_BASE_URL`,
/// `EVISEL_LIVE_MODEL`, and optionally `EVISEL_LIVE_API_KEY_ENV` (the name
/// of the variable holding the key), then run
/// `cargo test -p evisel-cli --test acceptance -- --ignored a11`.
#[test]
#[ignore = "requires a live OpenAI-compatible endpoint"]
fn a11_live_backend_resolves_a_text_probe_score() {
    use evisel_core::backend::{Backend as _, HttpBackend, HttpBackendConfig};
    use evisel_core::scorers::{score_helpfulness, ProbeCandidate, ProbeContext};

    let base_url = std::env::var("EVISEL_LIVE_BASE_URL").expect("EVISEL_LIVE_BASE_URL");
    let model = std::env::var("EVISEL_LIVE_MODEL").expect("EVISEL_LIVE_MODEL");
    let backend = HttpBackend::new(HttpBackendConfig {
        id: "live-smoke".to_string(),
        base_url,
        model,
        api_key_env: std::env::var("EVISEL_LIVE_API_KEY_ENV").ok(),
        timeout_secs: 120,
    })
    .unwrap();

    let choices = [
        "violin".to_string(),
        "cello".to_string(),
        "oboe".to_string(),
        "tuba".to_string(),
    ];
    let mut ctx = ProbeContext::new(
        templates::get("mragbench/aux").unwrap(),
        "Which instrument is shown on the poster?",
    );
    ctx.choices = Some(&choices);
    let candidate = ProbeCandidate {
        id: "live-1".to_string(),
        attachments: vec![MessagePart::text(
            "The poster features a cello recital next Saturday.",
        )],
    };
    let score = score_helpfulness(&backend, &ctx, &candidate).unwrap();
    assert!(score.raw_logit.is_finite());
    assert!(
        !score.approximate,
        "labels missing from top logprobs; raw_logit={}",
        score.raw_logit
    );
    pass("A11 live backend returned a resolved probe score");
}
