//! Surrogate helpfulness scoring and uncertainty baselines.
//!
//! The discriminative scorer asks a small surrogate model one binary
//! question per candidate (does this evidence help answer the query?) and
//! reads the answer's first-token log probabilities instead of its text. The
//! raw ranking signal is the label logit margin `lp_pos - lp_neg`, and
//! `p_c = logistic(lp_pos - lp_neg)` estimates the candidate's helpfulness
//! probability. One probe costs a single decode step, which is what makes
//! candidate scoring cheap relative to running the main generator.
//!
//! Three uncertainty baselines used for comparison live here as well:
//! softmax entropy over answer-choice logits, mean token probability of a
//! generation, and Monte Carlo consistency between a greedy answer and
//! resampled answers.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, BackendRequest, Message, MessagePart, TokenLogprob};
use crate::templates::{LabelSpace, RenderContext, Template, TemplateError, TemplateKind};

/// Alternatives requested per token position when probing.
pub const DEFAULT_TOP_LOGPROBS: usize = 20;
/// Stochastic samples drawn by Monte Carlo consistency.
pub const MC_DEFAULT_SAMPLES: usize = 5;
/// Sampling temperature used for those samples.
pub const MC_DEFAULT_TEMPERATURE: f64 = 1.0;

/// Scoring failures.
#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("template `{template}` is not a binary probe")]
    NotAProbe { template: String },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("backend returned no token log probabilities for candidate `{candidate}`")]
    NoLogprobs { candidate: String },
    #[error(
        "neither probe label appeared in the top-{top_k} alternatives for candidate \
         `{candidate}`"
    )]
    LabelsMissing { candidate: String, top_k: usize },
    #[error("all {attempted} candidates failed to score")]
    AllCandidatesFailed { attempted: usize },
    #[error("generation is empty, cannot average token probabilities")]
    EmptyGeneration,
    #[error("consistency needs at least one sample")]
    NoSamples,
}

/// Standard logistic function `1 / (1 + exp(-x))`.
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scoring result for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateScore {
    pub candidate_id: String,
    /// Label logit margin `lp_pos - lp_neg` at the first answer position;
    /// the primary ranking key.
    pub raw_logit: f64,
    /// `logistic(raw_logit)`, the estimated helpfulness probability.
    pub p_c: f64,
    /// True when a missing label was floored to one nat below the weakest
    /// reported alternative instead of being read directly.
    pub approximate: bool,
}

/// Outcome of scoring a pool: per-candidate scores sorted by ascending
/// candidate id, plus the candidates that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolScores {
    pub scores: Vec<SurrogateScore>,
    pub failures: Vec<ScoreFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFailure {
    pub candidate_id: String,
    pub message: String,
}

/// Query-level probe inputs shared by every candidate in a pool.
#[derive(Debug, Clone)]
pub struct ProbeContext<'a> {
    pub template: &'static Template,
    pub question: &'a str,
    /// Choice texts for multiple-choice queries; `None` for open questions.
    pub choices: Option<&'a [String]>,
    /// Attachments preceding the candidate's own, typically the query image.
    pub shared_attachments: &'a [MessagePart],
    pub top_logprobs: usize,
}

impl<'a> ProbeContext<'a> {
    pub fn new(template: &'static Template, question: &'a str) -> Self {
        ProbeContext {
            template,
            question,
            choices: None,
            shared_attachments: &[],
            top_logprobs: DEFAULT_TOP_LOGPROBS,
        }
    }
}

/// A candidate to probe: its id plus the attachments carrying its content.
#[derive(Debug, Clone)]
pub struct ProbeCandidate {
    pub id: String,
    pub attachments: Vec<MessagePart>,
}

/// Renders the probe prompt and assembles the single-decode-step request.
pub fn build_probe_request(
    ctx: &ProbeContext<'_>,
    candidate: &ProbeCandidate,
) -> Result<(BackendRequest, LabelSpace), ScoreError> {
    if ctx.template.kind() != TemplateKind::AuxProbe {
        return Err(ScoreError::NotAProbe {
            template: ctx.template.id().to_string(),
        });
    }
    let labels = ctx.template.labels().ok_or_else(|| ScoreError::NotAProbe {
        template: ctx.template.id().to_string(),
    })?;
    let render_ctx = RenderContext {
        question: Some(ctx.question.to_string()),
        choices: ctx.choices.map(<[String]>::to_vec),
        ..RenderContext::default()
    };
    let text = ctx.template.render(&render_ctx)?;
    let mut parts = vec![MessagePart::text(text)];
    parts.extend(ctx.shared_attachments.iter().cloned());
    parts.extend(candidate.attachments.iter().cloned());
    let request = BackendRequest::greedy(vec![Message::user(parts)], 1, ctx.top_logprobs);
    Ok((request, labels))
}

/// Log probability of `label` among the reported alternatives.
///
/// Tokens are compared case-insensitively after trimming surrounding
/// whitespace. A token matching the label exactly wins; otherwise the
/// longest token that is a prefix of the label wins (tokenizers often split
/// multi-word labels), with ties broken by the higher log probability.
fn find_label_logprob(top: &[(String, f64)], label: &str) -> Option<f64> {
    let target = label.trim().to_lowercase();
    let mut best: Option<(usize, f64)> = None;
    for (token, logprob) in top {
        let token = token.trim().to_lowercase();
        if token.is_empty() || !target.starts_with(&token) {
            continue;
        }
        let length = token.len();
        let better = match best {
            None => true,
            Some((best_len, best_lp)) => {
                length > best_len || (length == best_len && *logprob > best_lp)
            }
        };
        if better {
            best = Some((length, *logprob));
        }
    }
    best.map(|(_, logprob)| logprob)
}

/// Probes one candidate and converts the label margin into a helpfulness
/// probability.
///
/// A label absent from the reported alternatives is floored to one nat
/// below the weakest alternative and the score is marked approximate; both
/// labels absent is an error.
pub fn score_helpfulness(
    backend: &dyn Backend,
    ctx: &ProbeContext<'_>,
    candidate: &ProbeCandidate,
) -> Result<SurrogateScore, ScoreError> {
    let (request, labels) = build_probe_request(ctx, candidate)?;
    let response = backend.complete(&request)?;
    let first = response
        .token_logprobs
        .first()
        .ok_or_else(|| ScoreError::NoLogprobs {
            candidate: candidate.id.clone(),
        })?;
    let lp_pos = find_label_logprob(&first.top, labels.positive);
    let lp_neg = find_label_logprob(&first.top, labels.negative);
    if lp_pos.is_none() && lp_neg.is_none() {
        return Err(ScoreError::LabelsMissing {
            candidate: candidate.id.clone(),
            top_k: ctx.top_logprobs,
        });
    }
    let floor = first
        .top
        .iter()
        .map(|(_, lp)| *lp)
        .fold(f64::INFINITY, f64::min)
        - 1.0;
    let approximate = lp_pos.is_none() || lp_neg.is_none();
    let raw_logit = lp_pos.unwrap_or(floor) - lp_neg.unwrap_or(floor);
    Ok(SurrogateScore {
        candidate_id: candidate.id.clone(),
        raw_logit,
        p_c: logistic(raw_logit),
        approximate,
    })
}

/// Probes every candidate with up to `concurrency` worker threads.
///
/// Output order is deterministic regardless of thread interleaving: scores
/// come back sorted by ascending candidate id and failures in input order.
/// Individual failures are collected rather than aborting the batch; only a
/// batch where every candidate failed is an error.
pub fn score_pool(
    backend: &dyn Backend,
    ctx: &ProbeContext<'_>,
    candidates: &[ProbeCandidate],
    concurrency: usize,
) -> Result<PoolScores, ScoreError> {
    let workers = concurrency.max(1).min(candidates.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SurrogateScore, String>>>> =
        Mutex::new(vec![None; candidates.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= candidates.len() {
                    break;
                }
                let outcome = score_helpfulness(backend, ctx, &candidates[index])
                    .map_err(|e| e.to_string());
                results.lock().unwrap()[index] = Some(outcome);
            });
        }
    });
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for (candidate, slot) in candidates.iter().zip(results.into_inner().unwrap()) {
        match slot.expect("every slot is filled before the scope ends") {
            Ok(score) => scores.push(score),
            Err(message) => failures.push(ScoreFailure {
                candidate_id: candidate.id.clone(),
                message,
            }),
        }
    }
    if scores.is_empty() && !candidates.is_empty() {
        return Err(ScoreError::AllCandidatesFailed {
            attempted: candidates.len(),
        });
    }
    scores.sort_by(|a, b| a.candidate_id.cmp(&b.candidate_id));
    Ok(PoolScores { scores, failures })
}

/// Shannon entropy in nats of the softmax over answer-choice logits.
///
/// Invariant under adding a constant to every logit; ranges from 0 for a
/// dominated choice to `ln(n)` for indistinguishable choices.
pub fn choice_softmax_entropy(logits: &[f64]) -> f64 {
    assert!(!logits.is_empty(), "entropy needs at least one choice");
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let norm: f64 = weights.iter().sum();
    weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / norm;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Mean token probability `mean(exp(logprob))` over a generation.
pub fn avg_token_probability(tokens: &[TokenLogprob]) -> Result<f64, ScoreError> {
    if tokens.is_empty() {
        return Err(ScoreError::EmptyGeneration);
    }
    let total: f64 = tokens.iter().map(|t| t.logprob.exp()).sum();
    Ok(total / tokens.len() as f64)
}

/// Answer comparison used by Monte Carlo consistency.
pub type AnswerJudge = dyn Fn(&str, &str) -> bool + Sync;

/// Case-insensitive comparison with surrounding and internal whitespace
/// collapsed; the default consistency judge.
pub fn normalized_exact_match(a: &str, b: &str) -> bool {
    fn normalize(s: &str) -> String {
        s.split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase()
    }
    normalize(a) == normalize(b)
}

/// Monte Carlo consistency result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConsistency {
    pub greedy: String,
    pub samples: Vec<String>,
    /// Fraction of samples the judge considered equal to the greedy answer.
    pub agreement: f64,
}

/// Agreement between one greedy answer and `n_samples` stochastic samples
/// of the same prompt.
///
/// Sample `i` uses `sample_seed = i`; the judge defaults to
/// [`normalized_exact_match`].
pub fn mc_consistency(
    backend: &dyn Backend,
    messages: &[Message],
    max_tokens: usize,
    n_samples: usize,
    temperature: f64,
    judge: Option<&AnswerJudge>,
) -> Result<McConsistency, ScoreError> {
    if n_samples == 0 {
        return Err(ScoreError::NoSamples);
    }
    let greedy_request = BackendRequest {
        messages: messages.to_vec(),
        temperature: 0.0,
        max_tokens,
        logprobs: false,
        top_logprobs: 0,
        sample_seed: None,
    };
    let greedy = backend.complete(&greedy_request)?.text;
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let request = BackendRequest {
            temperature,
            sample_seed: Some(i as u64),
            ..greedy_request.clone()
        };
        samples.push(backend.complete(&request)?.text);
    }
    let judge = judge.unwrap_or(&normalized_exact_match);
    let agreeing = samples.iter().filter(|s| judge(s, &greedy)).count();
    Ok(McConsistency {
        agreement: agreeing as f64 / n_samples as f64,
        greedy,
        samples,
    })
}
