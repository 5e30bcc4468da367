//! Information-theoretic primitives for evidence utility.
//!
//! Evidence utility is measured as information gain: the Kullback-Leibler
//! divergence between the answer distribution conditioned on an evidence item
//! and the unconditioned answer distribution. Two levels of that quantity are
//! implemented:
//!
//! * answer-space information gain over small discrete answer spaces,
//!   computed by direct summation over a mixture answer model;
//! * latent-helpfulness information gain for a Bernoulli variable `Z`
//!   indicating whether an evidence item is semantically helpful, where the
//!   gain reduces to `f(p_c) = KL(Bernoulli(p_c) || Bernoulli(p_bar))`.
//!
//! On the feasible set `p_c >= p_bar`, `f` is strictly increasing, so ranking
//! candidates by latent information gain is order-equivalent to ranking them
//! by `p_c` directly ([`check_latent_order_agreement`]). Under the monotone
//! mixture model, that ordering transfers to the answer-space gain
//! ([`check_answer_space_transfer`]), which is what justifies ranking evidence
//! with a cheap helpfulness probe instead of estimating answer distributions.
//!
//! All logarithms are natural and all gains are reported in nats, with the
//! convention `0 * ln 0 = 0`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for probability vectors summing to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;
/// Slack for equality and monotonicity comparisons between gains in nats.
pub const EQUALITY_TOLERANCE: f64 = 1e-12;
/// Slack for convexity comparisons, wider than [`EQUALITY_TOLERANCE`] to
/// absorb rounding accumulated across mixture construction plus divergence.
pub const CONVEXITY_TOLERANCE: f64 = 1e-10;

/// Validation and lookup failures for information-gain computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InfoError {
    #[error("outcome/probability length mismatch: {outcomes} outcomes, {probs} probabilities")]
    LengthMismatch { outcomes: usize, probs: usize },
    #[error("duplicate outcome label `{0}`")]
    DuplicateOutcome(String),
    #[error("invalid probability {value} at index {index}; probabilities must be finite and >= 0")]
    InvalidProbability { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1 within {tolerance}")]
    NotNormalized { sum: f64, tolerance: f64 },
    #[error("distributions are defined over different outcome lists")]
    OutcomeMismatch,
    #[error("helpfulness probability {value} outside [0, 1]")]
    HelpfulnessOutOfRange { value: f64 },
    #[error("baseline helpfulness {value} outside the open interval (0, 1)")]
    BaselineOutOfRange { value: f64 },
    #[error("mixture weight {value} outside [0, 1]")]
    MixtureWeightOutOfRange { value: f64 },
    #[error("mixture weight for candidate `{id}` is {value}, outside [0, 1]")]
    CandidateWeightOutOfRange { id: String, value: f64 },
    #[error("empty candidate set for mixture answer model")]
    EmptyCandidateSet,
    #[error("prior must assign a weight to exactly the candidates in the mixture map")]
    PriorMismatch,
    #[error("prior weights sum to {sum}, expected 1 within {tolerance}")]
    PriorNotNormalized { sum: f64, tolerance: f64 },
    #[error("unknown candidate id `{0}`")]
    UnknownCandidate(String),
    #[error("candidate `{id}` is infeasible: p_c = {p_c} is below the baseline {p_bar}")]
    InfeasibleCandidate { id: String, p_c: f64, p_bar: f64 },
    #[error(
        "candidate `{id}` has mixture weight {lambda} below the candidate mean {lambda_bar}"
    )]
    WeightBelowMean {
        id: String,
        lambda: f64,
        lambda_bar: f64,
    },
    #[error(
        "mixture weights are not monotone in helpfulness: p(`{hi}`) >= p(`{lo}`) \
         but lambda(`{hi}`) < lambda(`{lo}`)"
    )]
    MisalignedWeights { hi: String, lo: String },
}

/// A probability vector over a finite, labelled answer space.
///
/// Invariants, enforced at construction and on deserialization: outcomes are
/// unique, every probability is finite and non-negative, the lengths match,
/// and the probabilities sum to one within [`NORMALIZATION_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDistribution {
    outcomes: Vec<String>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Builds a distribution, rejecting any invariant violation.
    pub fn new(outcomes: Vec<String>, probs: Vec<f64>) -> Result<Self, InfoError> {
        if outcomes.len() != probs.len() {
            return Err(InfoError::LengthMismatch {
                outcomes: outcomes.len(),
                probs: probs.len(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for outcome in &outcomes {
            if !seen.insert(outcome.as_str()) {
                return Err(InfoError::DuplicateOutcome(outcome.clone()));
            }
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(InfoError::InvalidProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(InfoError::NotNormalized {
                sum,
                tolerance: NORMALIZATION_TOLERANCE,
            });
        }
        Ok(Self { outcomes, probs })
    }

    /// Uniform distribution over the given outcomes.
    pub fn uniform(outcomes: Vec<String>) -> Result<Self, InfoError> {
        let n = outcomes.len();
        let probs = vec![1.0 / n as f64; n];
        Self::new(outcomes, probs)
    }

    /// Distribution putting all mass on the outcome at `hot`.
    pub fn point_mass(outcomes: Vec<String>, hot: usize) -> Result<Self, InfoError> {
        let mut probs = vec![0.0; outcomes.len()];
        if hot >= outcomes.len() {
            return Err(InfoError::NotNormalized {
                sum: 0.0,
                tolerance: NORMALIZATION_TOLERANCE,
            });
        }
        probs[hot] = 1.0;
        Self::new(outcomes, probs)
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Probability of a labelled outcome, if present.
    pub fn prob_of(&self, outcome: &str) -> Option<f64> {
        self.outcomes
            .iter()
            .position(|o| o == outcome)
            .map(|i| self.probs[i])
    }

    /// Label of the most probable outcome; the first one wins ties.
    pub fn argmax(&self) -> &str {
        let mut best = 0;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        &self.outcomes[best]
    }

    /// Whether both distributions are defined over the same ordered outcomes.
    pub fn same_outcomes(&self, other: &Self) -> bool {
        self.outcomes == other.outcomes
    }

    /// Elementwise equality of probabilities within `tolerance`, assuming a
    /// shared outcome list.
    pub fn approx_eq(&self, other: &Self, tolerance: f64) -> bool {
        self.same_outcomes(other)
            && self
                .probs
                .iter()
                .zip(&other.probs)
                .all(|(a, b)| (a - b).abs() <= tolerance)
    }
}

impl<'de> Deserialize<'de> for DiscreteDistribution {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            outcomes: Vec<String>,
            probs: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Self::new(raw.outcomes, raw.probs).map_err(serde::de::Error::custom)
    }
}

/// A candidate's helpfulness probability `p_c = P(Z = 1 | C = c)` together
/// with the no-evidence baseline `p_bar = P(Z = 1)`.
///
/// `p_c` may sit anywhere in `[0, 1]`; `p_bar` must be strictly inside
/// `(0, 1)` or the Bernoulli divergence is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliHelpfulness {
    p_c: f64,
    p_bar: f64,
}

impl BernoulliHelpfulness {
    pub fn new(p_c: f64, p_bar: f64) -> Result<Self, InfoError> {
        if !p_c.is_finite() || !(0.0..=1.0).contains(&p_c) {
            return Err(InfoError::HelpfulnessOutOfRange { value: p_c });
        }
        if !p_bar.is_finite() || p_bar <= 0.0 || p_bar >= 1.0 {
            return Err(InfoError::BaselineOutOfRange { value: p_bar });
        }
        Ok(Self { p_c, p_bar })
    }

    pub fn p_c(&self) -> f64 {
        self.p_c
    }

    pub fn p_bar(&self) -> f64 {
        self.p_bar
    }
}

/// A monotone mixture answer model.
///
/// Candidate `c` induces the answer distribution
/// `P_lambda(c) = (1 - lambda(c)) * P0 + lambda(c) * P1`, where `P0` is the
/// answer distribution when the evidence is ignored and `P1` the one when it
/// is used. The marginal answer distribution is the mixture at
/// `lambda_bar = E[lambda(C)]` under the candidate prior (uniform unless an
/// explicit prior is supplied). `lambda_bar` is always derived from the map
/// and prior, so it matches the prior-weighted mean by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureAnswerModel {
    p0: DiscreteDistribution,
    p1: DiscreteDistribution,
    lambda_map: BTreeMap<String, f64>,
    prior: BTreeMap<String, f64>,
    lambda_bar: f64,
}

impl MixtureAnswerModel {
    /// Builds a model with a uniform prior over the candidates.
    pub fn new(
        p0: DiscreteDistribution,
        p1: DiscreteDistribution,
        lambda_map: BTreeMap<String, f64>,
    ) -> Result<Self, InfoError> {
        let n = lambda_map.len();
        if n == 0 {
            return Err(InfoError::EmptyCandidateSet);
        }
        let prior = lambda_map
            .keys()
            .map(|id| (id.clone(), 1.0 / n as f64))
            .collect();
        Self::with_prior(p0, p1, lambda_map, prior)
    }

    /// Builds a model with an explicit candidate prior.
    pub fn with_prior(
        p0: DiscreteDistribution,
        p1: DiscreteDistribution,
        lambda_map: BTreeMap<String, f64>,
        prior: BTreeMap<String, f64>,
    ) -> Result<Self, InfoError> {
        if !p0.same_outcomes(&p1) {
            return Err(InfoError::OutcomeMismatch);
        }
        if lambda_map.is_empty() {
            return Err(InfoError::EmptyCandidateSet);
        }
        for (id, &lambda) in &lambda_map {
            if !lambda.is_finite() || !(0.0..=1.0).contains(&lambda) {
                return Err(InfoError::CandidateWeightOutOfRange {
                    id: id.clone(),
                    value: lambda,
                });
            }
        }
        if prior.len() != lambda_map.len() || !prior.keys().eq(lambda_map.keys()) {
            return Err(InfoError::PriorMismatch);
        }
        for (index, &weight) in prior.values().enumerate() {
            if !weight.is_finite() || weight < 0.0 {
                return Err(InfoError::InvalidProbability {
                    index,
                    value: weight,
                });
            }
        }
        let prior_sum: f64 = prior.values().sum();
        if (prior_sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(InfoError::PriorNotNormalized {
                sum: prior_sum,
                tolerance: NORMALIZATION_TOLERANCE,
            });
        }
        let lambda_bar = lambda_map
            .iter()
            .map(|(id, lambda)| prior[id] * lambda)
            .sum();
        Ok(Self {
            p0,
            p1,
            lambda_map,
            prior,
            lambda_bar,
        })
    }

    pub fn p0(&self) -> &DiscreteDistribution {
        &self.p0
    }

    pub fn p1(&self) -> &DiscreteDistribution {
        &self.p1
    }

    pub fn lambda_bar(&self) -> f64 {
        self.lambda_bar
    }

    /// Mixture weight of a candidate, if known.
    pub fn lambda(&self, candidate_id: &str) -> Option<f64> {
        self.lambda_map.get(candidate_id).copied()
    }

    pub fn candidate_ids(&self) -> impl Iterator<Item = &str> {
        self.lambda_map.keys().map(String::as_str)
    }

    pub fn prior(&self, candidate_id: &str) -> Option<f64> {
        self.prior.get(candidate_id).copied()
    }
}

/// Evidence container produced by the order-agreement and transfer checks.
///
/// `violated` is derived as `premise_holds && !conclusion_holds`; a record
/// can therefore never claim a violation when its premise failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremCheckRecord {
    pub premise_holds: bool,
    pub conclusion_holds: bool,
    /// Pair of information gains in nats for the two candidates under test.
    pub lhs_values: (f64, f64),
    /// Pair of comparison quantities the gains are checked against.
    pub rhs_values: (f64, f64),
    pub violated: bool,
}

impl TheoremCheckRecord {
    fn derive(
        premise_holds: bool,
        conclusion_holds: bool,
        lhs_values: (f64, f64),
        rhs_values: (f64, f64),
    ) -> Self {
        Self {
            premise_holds,
            conclusion_holds,
            lhs_values,
            rhs_values,
            violated: premise_holds && !conclusion_holds,
        }
    }
}

/// Shannon entropy `-sum p * ln p` of a distribution, in nats.
///
/// Malformed distributions are rejected at construction, so this function
/// cannot fail; the result is always `>= 0`.
pub fn entropy(d: &DiscreteDistribution) -> f64 {
    let acc: f64 = d
        .probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    acc.max(0.0)
}

/// Kullback-Leibler divergence `sum p(y) * ln(p(y) / q(y))` in nats.
///
/// Returns `f64::INFINITY` when absolute continuity fails, that is when some
/// outcome has `p(y) > 0` but `q(y) = 0`; callers may treat the marker as
/// maximal divergence or as an error. Rejects distributions over different
/// outcome lists. Accumulated rounding can leave a tiny negative sum for
/// near-identical inputs; the result is clamped to zero so the divergence
/// stays non-negative.
pub fn kl_divergence(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<f64, InfoError> {
    if !p.same_outcomes(q) {
        return Err(InfoError::OutcomeMismatch);
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        acc += pi * (pi / qi).ln();
    }
    Ok(acc.max(0.0))
}

/// Latent-helpfulness information gain
/// `f(p_c) = p_c * ln(p_c / p_bar) + (1 - p_c) * ln((1 - p_c) / (1 - p_bar))`.
///
/// Equals the KL divergence between `Bernoulli(p_c)` and `Bernoulli(p_bar)`.
/// `f(p_bar) = 0`, and `f` is strictly increasing on `[p_bar, 1]`, which is
/// what makes ranking by `p_c` equivalent to ranking by this gain on the
/// feasible set.
pub fn bernoulli_ig(h: &BernoulliHelpfulness) -> f64 {
    let (p, b) = (h.p_c(), h.p_bar());
    let mut acc = 0.0;
    if p > 0.0 {
        acc += p * (p / b).ln();
    }
    if p < 1.0 {
        acc += (1.0 - p) * ((1.0 - p) / (1.0 - b)).ln();
    }
    acc.max(0.0)
}

/// Pointwise convex combination `(1 - lam) * P0 + lam * P1`.
///
/// Rejects mixture weights outside `[0, 1]`; the output satisfies all
/// distribution invariants.
pub fn mixture_distribution(
    m: &MixtureAnswerModel,
    lam: f64,
) -> Result<DiscreteDistribution, InfoError> {
    if !lam.is_finite() || !(0.0..=1.0).contains(&lam) {
        return Err(InfoError::MixtureWeightOutOfRange { value: lam });
    }
    let probs = m
        .p0()
        .probs()
        .iter()
        .zip(m.p1().probs())
        .map(|(&a, &b)| (1.0 - lam) * a + lam * b)
        .collect();
    DiscreteDistribution::new(m.p0().outcomes().to_vec(), probs)
}

/// Answer-space information gain of a candidate under the mixture model:
/// `g(lambda(c)) = KL(P_lambda(c) || P_lambda_bar)`, in nats.
///
/// `g(lambda_bar) = 0`; `g` is convex on `[0, 1]` and nondecreasing on
/// `[lambda_bar, 1]`. Rejects candidate ids absent from the model.
pub fn answer_space_ig(m: &MixtureAnswerModel, candidate_id: &str) -> Result<f64, InfoError> {
    let lambda = m
        .lambda(candidate_id)
        .ok_or_else(|| InfoError::UnknownCandidate(candidate_id.to_string()))?;
    let conditioned = mixture_distribution(m, lambda)?;
    let marginal = mixture_distribution(m, m.lambda_bar())?;
    kl_divergence(&conditioned, &marginal)
}

/// Checks, in both directions, that the latent information-gain order agrees
/// with the helpfulness-probability order on the feasible set.
///
/// Inputs must satisfy `p_bar` in `(0, 1)` and `p1, p2` in `[p_bar, 1]`;
/// anything below the baseline is rejected as infeasible. The returned
/// record carries `(f(p1), f(p2))` as `lhs_values` and `(p1, p2)` as
/// `rhs_values`. The conclusion holds when the two orders agree within
/// [`EQUALITY_TOLERANCE`]: a weak `p` order must give the matching `f` order
/// up to the slack, and an `f` gap larger than the slack must come with the
/// matching `p` order. For valid inputs `violated` is always false; a true
/// value would falsify the strict monotonicity of `f` on `[p_bar, 1]`.
pub fn check_latent_order_agreement(
    p_bar: f64,
    p1: f64,
    p2: f64,
) -> Result<TheoremCheckRecord, InfoError> {
    for &p in &[p1, p2] {
        let h = BernoulliHelpfulness::new(p, p_bar)?;
        if h.p_c() < h.p_bar() {
            return Err(InfoError::InfeasibleCandidate {
                id: String::new(),
                p_c: p,
                p_bar,
            });
        }
    }
    let f1 = bernoulli_ig(&BernoulliHelpfulness::new(p1, p_bar)?);
    let f2 = bernoulli_ig(&BernoulliHelpfulness::new(p2, p_bar)?);
    let forward = |p_hi: f64, p_lo: f64, f_hi: f64, f_lo: f64| {
        // p order implies f order, up to slack.
        p_hi < p_lo || f_hi >= f_lo - EQUALITY_TOLERANCE
    };
    let backward = |f_hi: f64, f_lo: f64, p_hi: f64, p_lo: f64| {
        // A strict f gap implies the matching p order.
        f_hi < f_lo + EQUALITY_TOLERANCE || p_hi >= p_lo
    };
    let conclusion = forward(p1, p2, f1, f2)
        && forward(p2, p1, f2, f1)
        && backward(f1, f2, p1, p2)
        && backward(f2, f1, p2, p1);
    Ok(TheoremCheckRecord::derive(
        true,
        conclusion,
        (f1, f2),
        (p1, p2),
    ))
}

/// Checks that the latent information-gain order between two feasible
/// candidates transfers to the answer-space information-gain order.
///
/// Preconditions, each rejected with a distinct error naming the failing
/// assumption: the two candidates under test satisfy `p_c >= p_bar`
/// ([`InfoError::InfeasibleCandidate`]) and `lambda(c) >= lambda_bar`
/// ([`InfoError::WeightBelowMean`]), and the mixture weights are monotone in
/// helpfulness across every pair in `helpfulness`
/// ([`InfoError::MisalignedWeights`]).
///
/// The record's premise is `IG(Z; c1) >= IG(Z; c2)` (stored in `lhs_values`)
/// and its conclusion is `IG(Y; c1) >= IG(Y; c2)` within
/// [`EQUALITY_TOLERANCE`] (stored in `rhs_values`). Under the stated
/// preconditions `violated` is always false.
pub fn check_answer_space_transfer(
    m: &MixtureAnswerModel,
    c1: &str,
    c2: &str,
    helpfulness: &BTreeMap<String, f64>,
    p_bar: f64,
) -> Result<TheoremCheckRecord, InfoError> {
    for id in helpfulness.keys() {
        if m.lambda(id).is_none() {
            return Err(InfoError::UnknownCandidate(id.clone()));
        }
    }
    for id in [c1, c2] {
        let &p_c = helpfulness
            .get(id)
            .ok_or_else(|| InfoError::UnknownCandidate(id.to_string()))?;
        let h = BernoulliHelpfulness::new(p_c, p_bar)?;
        if h.p_c() < h.p_bar() {
            return Err(InfoError::InfeasibleCandidate {
                id: id.to_string(),
                p_c,
                p_bar,
            });
        }
        let lambda = m.lambda(id).unwrap();
        if lambda < m.lambda_bar() - EQUALITY_TOLERANCE {
            return Err(InfoError::WeightBelowMean {
                id: id.to_string(),
                lambda,
                lambda_bar: m.lambda_bar(),
            });
        }
    }
    let ids: Vec<&String> = helpfulness.keys().collect();
    for (i, hi) in ids.iter().enumerate() {
        for lo in ids.iter().skip(i + 1) {
            let (p_hi, p_lo) = (helpfulness[*hi], helpfulness[*lo]);
            let (l_hi, l_lo) = (m.lambda(hi).unwrap(), m.lambda(lo).unwrap());
            if p_hi >= p_lo && l_hi < l_lo - EQUALITY_TOLERANCE {
                return Err(InfoError::MisalignedWeights {
                    hi: (*hi).clone(),
                    lo: (*lo).clone(),
                });
            }
            if p_lo >= p_hi && l_lo < l_hi - EQUALITY_TOLERANCE {
                return Err(InfoError::MisalignedWeights {
                    hi: (*lo).clone(),
                    lo: (*hi).clone(),
                });
            }
        }
    }
    let ig_z = |id: &str| -> Result<f64, InfoError> {
        Ok(bernoulli_ig(&BernoulliHelpfulness::new(
            helpfulness[id],
            p_bar,
        )?))
    };
    let (z1, z2) = (ig_z(c1)?, ig_z(c2)?);
    let (y1, y2) = (answer_space_ig(m, c1)?, answer_space_ig(m, c2)?);
    let premise = z1 >= z2;
    let conclusion = y1 >= y2 - EQUALITY_TOLERANCE;
    Ok(TheoremCheckRecord::derive(
        premise,
        conclusion,
        (z1, z2),
        (y1, y2),
    ))
}
