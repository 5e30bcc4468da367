//! Synthetic laboratory: seeded worlds with known ground truth.
//!
//! Every query in a generated world carries a full mixture answer model,
//! so quantities that are latent in real deployments are exact here: true
//! relevance scores, helpfulness probabilities, mixture weights, and the
//! information gain of every candidate. The laboratory supports two kinds
//! of experiment:
//!
//! * law checks, which sweep candidate pairs and confirm that the
//!   order-agreement and transfer properties never report a violation on
//!   worlds that satisfy their premises;
//! * strategy comparisons, which measure end-task answer accuracy when
//!   evidence is chosen by helpfulness, by noisy retrieval score, by an
//!   answer-entropy proxy, or at random.
//!
//! Helpfulness follows the noise-channel form `p_c = 1 - F(-s_c)` where
//! `s_c` is the candidate's true relevance score and `F` is a logistic or
//! Gaussian CDF at a configurable scale. Retrieval observes `s_c` through
//! additive Gaussian noise, so retrieval order is a corrupted version of
//! helpfulness order and the gap between the two strategies is the value
//! of probing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::hit_fraction;
use crate::infogain::{
    answer_space_ig, check_answer_space_transfer, check_latent_order_agreement, entropy,
    mixture_distribution, DiscreteDistribution, InfoError, MixtureAnswerModel,
};
use crate::seeded::{
    bounded_u64, rng_from_seed, sample_categorical, shuffle, stable_hash, standard_normal,
};

/// Largest supported answer space.
pub const MAX_ANSWER_SPACE: usize = 8;

/// Laboratory failures.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("answer space size must lie in 2..={MAX_ANSWER_SPACE}, got {0}")]
    AnswerSpaceOutOfRange(usize),
    #[error("world needs at least one query")]
    ZeroQueries,
    #[error("world needs at least one candidate per query")]
    ZeroCandidates,
    #[error("gt_count {gt_count} exceeds candidates_per_query {candidates}")]
    GtCountTooLarge { gt_count: usize, candidates: usize },
    #[error("noise scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("relevance signal-to-noise ratio must be positive, got {0}")]
    NonPositiveSnr(f64),
    #[error("selection size {k} exceeds candidates_per_query {candidates}")]
    InvalidK { k: usize, candidates: usize },
    #[error("need at least one selection size")]
    NoKs,
    #[error("need at least one answer sample per query")]
    ZeroTrials,
    #[error("helpfulness baseline must lie strictly between 0 and 1, got {0}")]
    BaselineOutOfRange(f64),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error(transparent)]
    Info(#[from] InfoError),
}

/// Noise channel linking relevance scores to helpfulness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCdf {
    Logistic,
    Gaussian,
}

impl NoiseCdf {
    /// CDF value at `x` under the given scale.
    fn cdf(self, x: f64, scale: f64) -> f64 {
        match self {
            NoiseCdf::Logistic => 1.0 / (1.0 + (-x / scale).exp()),
            NoiseCdf::Gaussian => 0.5 * libm::erfc(-x / (scale * std::f64::consts::SQRT_2)),
        }
    }
}

/// How mixture weights derive from candidate state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMap {
    /// `lambda_c = p_c`.
    Identity,
    /// `lambda_c = logistic(s_c)` at unit scale, decoupling the weight
    /// calibration from the helpfulness noise scale while preserving the
    /// monotone coupling the transfer property requires.
    CalibratedLogistic,
}

/// Generation parameters for a synthetic world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub answer_space_size: usize,
    pub n_queries: usize,
    pub candidates_per_query: usize,
    pub noise: NoiseCdf,
    pub noise_scale: f64,
    pub lambda_map: LambdaMap,
    /// Ratio of relevance-signal spread to retrieval observation noise;
    /// higher means retrieval order tracks true helpfulness more closely.
    pub relevance_snr: f64,
    /// Candidates per query marked relevant, the top few by true score.
    pub gt_count: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            answer_space_size: 4,
            n_queries: 200,
            candidates_per_query: 15,
            noise: NoiseCdf::Logistic,
            noise_scale: 1.0,
            lambda_map: LambdaMap::Identity,
            relevance_snr: 2.0,
            gt_count: 5,
            seed: 17,
        }
    }
}

impl WorldConfig {
    /// Rejects empty, out-of-range, or non-positive parameters.
    pub fn validate(&self) -> Result<(), SimError> {
        if !(2..=MAX_ANSWER_SPACE).contains(&self.answer_space_size) {
            return Err(SimError::AnswerSpaceOutOfRange(self.answer_space_size));
        }
        if self.n_queries == 0 {
            return Err(SimError::ZeroQueries);
        }
        if self.candidates_per_query == 0 {
            return Err(SimError::ZeroCandidates);
        }
        if self.gt_count > self.candidates_per_query {
            return Err(SimError::GtCountTooLarge {
                gt_count: self.gt_count,
                candidates: self.candidates_per_query,
            });
        }
        if !(self.noise_scale > 0.0) || !self.noise_scale.is_finite() {
            return Err(SimError::NonPositiveScale(self.noise_scale));
        }
        if !(self.relevance_snr > 0.0) || !self.relevance_snr.is_finite() {
            return Err(SimError::NonPositiveSnr(self.relevance_snr));
        }
        Ok(())
    }
}

/// One candidate with its full latent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCandidate {
    pub id: String,
    /// True relevance score `s_c`.
    pub true_score: f64,
    /// Retrieval's noisy view of `s_c`.
    pub retriever_score: f64,
    /// Helpfulness probability `p_c = 1 - F(-s_c)`.
    pub p_c: f64,
    /// Mixture weight `lambda_c`.
    pub lambda: f64,
}

/// One synthetic query with its answer model and candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct SimQuery {
    pub query_id: String,
    /// Most likely answer under the fully helpful distribution.
    pub reference_answer: String,
    pub model: MixtureAnswerModel,
    pub candidates: Vec<SimCandidate>,
    /// Top `gt_count` candidate ids by true score.
    pub gt_ids: Vec<String>,
}

/// A generated world.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub queries: Vec<SimQuery>,
}

fn softmax_distribution(
    outcomes: &[String],
    logits: &[f64],
) -> Result<DiscreteDistribution, InfoError> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let un_normalized: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = un_normalized.iter().sum();
    DiscreteDistribution::new(
        outcomes.to_vec(),
        un_normalized.into_iter().map(|w| w / total).collect(),
    )
}

/// Generates a world deterministically from its config.
pub fn generate_world(config: &WorldConfig) -> Result<World, SimError> {
    config.validate()?;
    let outcomes: Vec<String> = (0..config.answer_space_size)
        .map(|i| format!("a{i}"))
        .collect();
    let mut queries = Vec::with_capacity(config.n_queries);
    for q in 0..config.n_queries {
        let query_id = format!("q{q:04}");
        let mut rng = rng_from_seed(stable_hash(&[
            &config.seed.to_le_bytes(),
            query_id.as_bytes(),
            b"sim_world",
        ]));

        let peak = bounded_u64(&mut rng, config.answer_space_size as u64) as usize;
        let p1_logits: Vec<f64> = (0..config.answer_space_size)
            .map(|i| standard_normal(&mut rng) + if i == peak { 3.0 } else { 0.0 })
            .collect();
        let p0_logits: Vec<f64> = (0..config.answer_space_size)
            .map(|_| standard_normal(&mut rng))
            .collect();
        let p1 = softmax_distribution(&outcomes, &p1_logits)?;
        let p0 = softmax_distribution(&outcomes, &p0_logits)?;
        let reference_answer = p1.argmax().to_string();

        let mut candidates = Vec::with_capacity(config.candidates_per_query);
        let mut lambda_map = BTreeMap::new();
        for c in 0..config.candidates_per_query {
            let id = format!("c{c:03}");
            let true_score = standard_normal(&mut rng);
            let retriever_score =
                true_score + standard_normal(&mut rng) / config.relevance_snr;
            let p_c = 1.0 - config.noise.cdf(-true_score, config.noise_scale);
            let lambda = match config.lambda_map {
                LambdaMap::Identity => p_c,
                LambdaMap::CalibratedLogistic => 1.0 / (1.0 + (-true_score).exp()),
            };
            lambda_map.insert(id.clone(), lambda);
            candidates.push(SimCandidate {
                id,
                true_score,
                retriever_score,
                p_c,
                lambda,
            });
        }
        let model = MixtureAnswerModel::new(p0, p1, lambda_map)?;

        let mut by_score: Vec<&SimCandidate> = candidates.iter().collect();
        by_score.sort_by(|a, b| {
            b.true_score
                .total_cmp(&a.true_score)
                .then_with(|| a.id.cmp(&b.id))
        });
        let gt_ids: Vec<String> = by_score[..config.gt_count]
            .iter()
            .map(|c| c.id.clone())
            .collect();

        queries.push(SimQuery {
            query_id,
            reference_answer,
            model,
            candidates,
            gt_ids,
        });
    }
    Ok(World {
        config: *config,
        queries,
    })
}

/// Answer-space information gain by direct summation over outcomes,
/// mixing and accumulating in one pass without reusing the distribution
/// and divergence routines. Exists to cross-check [`answer_space_ig`].
pub fn brute_force_ig_y(m: &MixtureAnswerModel, candidate_id: &str) -> Result<f64, InfoError> {
    let lambda = m
        .lambda(candidate_id)
        .ok_or_else(|| InfoError::UnknownCandidate(candidate_id.to_string()))?;
    let lambda_bar = m.lambda_bar();
    let mut total = 0.0;
    for (&a, &b) in m.p0().probs().iter().zip(m.p1().probs()) {
        let p_c = (1.0 - lambda) * a + lambda * b;
        let p_bar = (1.0 - lambda_bar) * a + lambda_bar * b;
        if p_c > 0.0 {
            total += p_c * (p_c / p_bar).ln();
        }
    }
    Ok(total.max(0.0))
}

/// Violation counts from sweeping the mathematical checks over a world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LawCheckSummary {
    /// Ordered candidate pairs tested for latent order agreement.
    pub order_pairs_checked: usize,
    pub order_violations: usize,
    /// Ordered candidate pairs tested for answer-space transfer.
    pub transfer_pairs_checked: usize,
    /// Pairs skipped because a precondition failed, for example a
    /// candidate below the feasibility floor.
    pub transfer_pairs_skipped: usize,
    pub transfer_violations: usize,
}

/// Sweeps both law checks over every ordered candidate pair of every
/// query. Pairs violating a precondition are skipped, never counted as
/// violations.
pub fn run_law_checks(world: &World, p_bar: f64) -> Result<LawCheckSummary, SimError> {
    if !(p_bar > 0.0 && p_bar < 1.0) {
        return Err(SimError::BaselineOutOfRange(p_bar));
    }
    let mut summary = LawCheckSummary {
        order_pairs_checked: 0,
        order_violations: 0,
        transfer_pairs_checked: 0,
        transfer_pairs_skipped: 0,
        transfer_violations: 0,
    };
    for query in &world.queries {
        let helpfulness: BTreeMap<String, f64> = query
            .candidates
            .iter()
            .map(|c| (c.id.clone(), c.p_c))
            .collect();
        for first in &query.candidates {
            for second in &query.candidates {
                if first.id == second.id {
                    continue;
                }
                if first.p_c >= p_bar && second.p_c >= p_bar {
                    let record = check_latent_order_agreement(p_bar, first.p_c, second.p_c)?;
                    summary.order_pairs_checked += 1;
                    if record.violated {
                        summary.order_violations += 1;
                    }
                }
                match check_answer_space_transfer(
                    &query.model,
                    &first.id,
                    &second.id,
                    &helpfulness,
                    p_bar,
                ) {
                    Ok(record) => {
                        summary.transfer_pairs_checked += 1;
                        if record.violated {
                            summary.transfer_violations += 1;
                        }
                    }
                    Err(
                        InfoError::InfeasibleCandidate { .. }
                        | InfoError::WeightBelowMean { .. },
                    ) => {
                        summary.transfer_pairs_skipped += 1;
                    }
                    Err(other) => return Err(SimError::Info(other)),
                }
            }
        }
    }
    Ok(summary)
}

/// Evidence-selection strategies compared in the laboratory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Rank by helpfulness probability `p_c`, descending.
    UtilityPc,
    /// Rank by the retriever's noisy score, descending.
    RelevanceScore,
    /// Rank by the entropy of the candidate's answer distribution,
    /// ascending, preferring candidates that make the answer confident.
    ChoiceEntropyProxy,
    /// Seeded uniform shuffle.
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::UtilityPc,
        Strategy::RelevanceScore,
        Strategy::ChoiceEntropyProxy,
        Strategy::Random,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::UtilityPc => "utility_pc",
            Strategy::RelevanceScore => "relevance_score",
            Strategy::ChoiceEntropyProxy => "choice_entropy_proxy",
            Strategy::Random => "random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| SimError::UnknownStrategy(s.to_string()))
    }
}

/// Measured performance of one strategy at one selection size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub k: usize,
    /// Fraction of sampled answers matching the reference.
    pub answer_accuracy: f64,
    /// Mean fraction of the selection that is ground truth.
    pub mean_hit_fraction: f64,
    /// Mean information gain of the selected candidates, in nats.
    pub mean_selected_ig: f64,
}

fn strategy_order(query: &SimQuery, strategy: Strategy, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..query.candidates.len()).collect();
    match strategy {
        Strategy::UtilityPc => order.sort_by(|&a, &b| {
            let (ca, cb) = (&query.candidates[a], &query.candidates[b]);
            cb.p_c.total_cmp(&ca.p_c).then_with(|| ca.id.cmp(&cb.id))
        }),
        Strategy::RelevanceScore => order.sort_by(|&a, &b| {
            let (ca, cb) = (&query.candidates[a], &query.candidates[b]);
            cb.retriever_score
                .total_cmp(&ca.retriever_score)
                .then_with(|| ca.id.cmp(&cb.id))
        }),
        Strategy::ChoiceEntropyProxy => {
            let entropies: Vec<f64> = query
                .candidates
                .iter()
                .map(|c| {
                    let dist = mixture_distribution(&query.model, c.lambda)
                        .expect("lambda comes from the model");
                    entropy(&dist)
                })
                .collect();
            order.sort_by(|&a, &b| {
                entropies[a]
                    .total_cmp(&entropies[b])
                    .then_with(|| query.candidates[a].id.cmp(&query.candidates[b].id))
            });
        }
        Strategy::Random => {
            let mut rng = rng_from_seed(stable_hash(&[
                &seed.to_le_bytes(),
                query.query_id.as_bytes(),
                b"random_order",
            ]));
            shuffle(&mut rng, &mut order);
        }
    }
    order
}

/// Runs every strategy at every requested selection size.
///
/// For each query the chosen candidates act together: answers are sampled
/// from the mixture at the mean selected weight and compared to the
/// reference. Results are ordered strategy-major, then by `k`.
pub fn run_strategy_comparison(
    world: &World,
    ks: &[usize],
    trials_per_query: usize,
    seed: u64,
) -> Result<Vec<StrategyOutcome>, SimError> {
    if ks.is_empty() {
        return Err(SimError::NoKs);
    }
    for &k in ks {
        if k == 0 || k > world.config.candidates_per_query {
            return Err(SimError::InvalidK {
                k,
                candidates: world.config.candidates_per_query,
            });
        }
    }
    if trials_per_query == 0 {
        return Err(SimError::ZeroTrials);
    }
    let mut outcomes = Vec::with_capacity(Strategy::ALL.len() * ks.len());
    for strategy in Strategy::ALL {
        let orders: Vec<Vec<usize>> = world
            .queries
            .iter()
            .map(|q| strategy_order(q, strategy, seed))
            .collect();
        for &k in ks {
            let mut accuracy_total = 0.0;
            let mut hit_total = 0.0;
            let mut ig_total = 0.0;
            for (query, order) in world.queries.iter().zip(&orders) {
                let selected: Vec<&SimCandidate> =
                    order[..k].iter().map(|&i| &query.candidates[i]).collect();
                let selected_ids: Vec<&str> =
                    selected.iter().map(|c| c.id.as_str()).collect();
                let gt_ids: Vec<&str> = query.gt_ids.iter().map(String::as_str).collect();
                hit_total += hit_fraction(&selected_ids, &gt_ids, k);
                let mut ig_sum = 0.0;
                for candidate in &selected {
                    ig_sum += answer_space_ig(&query.model, &candidate.id)?;
                }
                ig_total += ig_sum / k as f64;

                let mean_lambda =
                    selected.iter().map(|c| c.lambda).sum::<f64>() / k as f64;
                let answer_dist = mixture_distribution(&query.model, mean_lambda)?;
                let mut rng = rng_from_seed(stable_hash(&[
                    &seed.to_le_bytes(),
                    query.query_id.as_bytes(),
                    strategy.as_str().as_bytes(),
                    &(k as u64).to_le_bytes(),
                    b"answers",
                ]));
                let mut correct = 0usize;
                for _ in 0..trials_per_query {
                    let drawn = sample_categorical(&mut rng, answer_dist.probs());
                    if answer_dist.outcomes()[drawn] == query.reference_answer {
                        correct += 1;
                    }
                }
                accuracy_total += correct as f64 / trials_per_query as f64;
            }
            let n = world.queries.len() as f64;
            outcomes.push(StrategyOutcome {
                strategy,
                k,
                answer_accuracy: accuracy_total / n,
                mean_hit_fraction: hit_total / n,
                mean_selected_ig: ig_total / n,
            });
        }
    }
    Ok(outcomes)
}
