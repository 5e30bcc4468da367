//! Ranking, end-to-end selection, and compute accounting.
//!
//! The pipeline runs one cheap surrogate probe per pool candidate, ranks
//! candidates by the probe's label logit margin, keeps the top `k`, and
//! issues a single main-model generation over the kept evidence. For a
//! pool of `N` candidates that is exactly `N` surrogate calls and one main
//! call, against `N + 1` main calls for the standard approach of asking
//! the main model to judge each candidate and then answer.
//!
//! [`estimate_cost`] prices both approaches under a two-phase cost model,
//! `phi(d) = prefill + d * decode_per_step`, in whatever unit the caller
//! supplies (GFLOPs, seconds, dollars). [`MODEL_PROFILES`] embeds measured
//! prompt shapes, prefill compute, and decode lengths for eight open
//! vision-language models so the accounting can be reproduced offline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, BackendRequest, Message, MessagePart};
use crate::pool::{Pool, PoolCandidate};
use crate::scorers::{score_pool, ProbeCandidate, ProbeContext, ScoreError, ScoreFailure, SurrogateScore};
use crate::templates::{RenderContext, Template, TemplateError, TemplateKind};

/// Pipeline failures.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("selection size k must be at least 1")]
    ZeroK,
    #[error("feasibility floor must lie strictly between 0 and 1, got {0}")]
    InvalidFloor(f64),
    #[error("template `{template}` is not an answer template")]
    NotAnAnswer { template: String },
    #[error("only {scored} of {pool_size} candidates scored, need at least {required}")]
    TooFewScored {
        scored: usize,
        pool_size: usize,
        required: usize,
    },
    #[error("main model generation failed")]
    MainGeneration(#[source] BackendError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// How many candidates to keep and whether to enforce a helpfulness floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    /// Number of candidates to keep.
    pub k: usize,
    /// Optional floor on `p_c`; candidates below it are dropped before the
    /// top-k cut. Off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_floor: Option<f64>,
}

impl SelectionPolicy {
    pub fn new(k: usize) -> Self {
        SelectionPolicy {
            k,
            feasibility_floor: None,
        }
    }

    pub fn with_floor(k: usize, p_bar: f64) -> Self {
        SelectionPolicy {
            k,
            feasibility_floor: Some(p_bar),
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if self.k == 0 {
            return Err(PipelineError::ZeroK);
        }
        if let Some(floor) = self.feasibility_floor {
            if !(floor > 0.0 && floor < 1.0) {
                return Err(PipelineError::InvalidFloor(floor));
            }
        }
        Ok(())
    }
}

/// Result of ranking and cutting one pool's scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Every scored candidate, best first.
    pub ranked: Vec<SurrogateScore>,
    /// The kept candidates, best first. Shorter than `k` only when the
    /// feasibility floor leaves fewer than `k` candidates.
    pub selected: Vec<SurrogateScore>,
    /// Candidates dropped by the feasibility floor, best first.
    pub filtered_out: Vec<SurrogateScore>,
}

/// Sorts scores by descending logit margin, breaking ties by ascending
/// candidate id so equal margins rank identically across runs.
pub fn rank_candidates(scores: &[SurrogateScore]) -> Vec<SurrogateScore> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| {
        b.raw_logit
            .total_cmp(&a.raw_logit)
            .then_with(|| a.candidate_id.cmp(&b.candidate_id))
    });
    ranked
}

/// Ranks scores and keeps the top `k` under the policy.
pub fn select_top_k(
    scores: &[SurrogateScore],
    policy: &SelectionPolicy,
) -> Result<Selection, PipelineError> {
    policy.validate()?;
    let ranked = rank_candidates(scores);
    let (eligible, filtered_out): (Vec<SurrogateScore>, Vec<SurrogateScore>) =
        match policy.feasibility_floor {
            Some(floor) => ranked.iter().cloned().partition(|s| s.p_c >= floor),
            None => (ranked.clone(), Vec::new()),
        };
    let selected = eligible.into_iter().take(policy.k).collect();
    Ok(Selection {
        ranked,
        selected,
        filtered_out,
    })
}

/// Turns a pool candidate's payload into message parts for a request.
pub type PayloadMapper<'a> = &'a (dyn Fn(&PoolCandidate) -> Vec<MessagePart> + Sync);

/// Payload mapper that passes payloads through as plain text.
pub fn text_payload_mapper(candidate: &PoolCandidate) -> Vec<MessagePart> {
    vec![MessagePart::text(&candidate.payload)]
}

/// Everything the pipeline needs to process one query.
pub struct PipelineInputs<'a> {
    pub pool: &'a Pool,
    pub question: &'a str,
    pub choices: Option<&'a [String]>,
    /// The query's own attachments, sent before any candidate evidence.
    pub query_attachments: &'a [MessagePart],
    pub probe_template: &'static Template,
    pub answer_template: &'static Template,
    pub payload_mapper: PayloadMapper<'a>,
}

/// Knobs for one pipeline run.
#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig {
    pub policy: SelectionPolicy,
    /// Worker threads for the probe stage.
    pub concurrency: usize,
    /// Decode budget for the main generation.
    pub max_answer_tokens: usize,
    /// Alternatives requested per probe position.
    pub top_logprobs: usize,
}

impl PipelineConfig {
    pub fn new(k: usize) -> Self {
        PipelineConfig {
            policy: SelectionPolicy::new(k),
            concurrency: 4,
            max_answer_tokens: 256,
            top_logprobs: crate::scorers::DEFAULT_TOP_LOGPROBS,
        }
    }
}

/// Outcome of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub query_id: String,
    /// Candidates sent to the probe stage, equal to the pool size.
    pub probes_attempted: usize,
    /// Candidates that returned a usable score.
    pub probes_scored: usize,
    pub selection: Selection,
    /// Probe failures, in pool order.
    pub probe_failures: Vec<ScoreFailure>,
    pub answer: String,
}

/// Runs retrieve-rank-generate for one query: one surrogate probe per pool
/// candidate, a top-k cut, then a single main-model generation grounded in
/// the kept evidence.
///
/// The run proceeds when at least `k` candidates scored; otherwise it
/// fails without touching the main model. A main generation failure is
/// terminal. The main request carries the rendered answer prompt, the
/// query attachments, then the kept candidates' parts in rank order.
pub fn run_pipeline(
    surrogate: &dyn Backend,
    main: &dyn Backend,
    inputs: &PipelineInputs<'_>,
    config: &PipelineConfig,
) -> Result<PipelineOutcome, PipelineError> {
    config.policy.validate()?;
    if inputs.answer_template.kind() != TemplateKind::Answer {
        return Err(PipelineError::NotAnAnswer {
            template: inputs.answer_template.id().to_string(),
        });
    }

    let mut ctx = ProbeContext::new(inputs.probe_template, inputs.question);
    ctx.choices = inputs.choices;
    ctx.shared_attachments = inputs.query_attachments;
    ctx.top_logprobs = config.top_logprobs;
    let probe_candidates: Vec<ProbeCandidate> = inputs
        .pool
        .candidates
        .iter()
        .map(|c| ProbeCandidate {
            id: c.id.clone(),
            attachments: (inputs.payload_mapper)(c),
        })
        .collect();
    let pool_scores = score_pool(surrogate, &ctx, &probe_candidates, config.concurrency)?;
    if pool_scores.scores.len() < config.policy.k {
        return Err(PipelineError::TooFewScored {
            scored: pool_scores.scores.len(),
            pool_size: inputs.pool.candidates.len(),
            required: config.policy.k,
        });
    }
    let selection = select_top_k(&pool_scores.scores, &config.policy)?;

    let mut parts = Vec::new();
    let mut evidence_parts = Vec::new();
    for score in &selection.selected {
        let candidate = inputs
            .pool
            .candidates
            .iter()
            .find(|c| c.id == score.candidate_id)
            .expect("selected candidate comes from the pool");
        evidence_parts.extend((inputs.payload_mapper)(candidate));
    }
    let n_images = inputs
        .query_attachments
        .iter()
        .chain(evidence_parts.iter())
        .filter(|p| !matches!(p, MessagePart::Text { .. }))
        .count();
    let mut render = RenderContext {
        question: Some(inputs.question.to_string()),
        num_images: Some(n_images),
        image_count: Some(n_images),
        ..RenderContext::default()
    };
    render.choices = inputs.choices.map(<[String]>::to_vec);
    render.options = inputs
        .choices
        .and_then(|c| <&[String; 4]>::try_from(c).ok().cloned());
    parts.push(MessagePart::text(
        inputs.answer_template.render(&render)?,
    ));
    parts.extend_from_slice(inputs.query_attachments);
    parts.extend(evidence_parts);

    let request = BackendRequest::greedy(vec![Message::user(parts)], config.max_answer_tokens, 0);
    let response = main
        .complete(&request)
        .map_err(PipelineError::MainGeneration)?;

    Ok(PipelineOutcome {
        query_id: inputs.pool.query_id.clone(),
        probes_attempted: inputs.pool.candidates.len(),
        probes_scored: pool_scores.scores.len(),
        selection,
        probe_failures: pool_scores.failures,
        answer: response.text,
    })
}

/// Per-call cost of one model in one prompt shape: a fixed prefill charge
/// plus a per-token decode charge, in any consistent unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCost {
    pub prefill: f64,
    pub decode_per_step: f64,
}

impl PhaseCost {
    /// `phi(d) = prefill + d * decode_per_step`.
    pub fn total(&self, decode_steps: f64) -> f64 {
        self.prefill + decode_steps * self.decode_per_step
    }
}

/// Priced comparison of surrogate-probed selection against main-model
/// judging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    /// `N` probe calls on the surrogate plus one main generation.
    pub surrogate_route: f64,
    /// `N` judging calls plus one generation, all on the main model.
    pub main_route: f64,
    /// `main_route / surrogate_route`; above 1 when probing wins.
    pub ratio: f64,
}

/// Prices both routes for a pool of `pool_size` candidates.
pub fn estimate_cost(
    pool_size: usize,
    surrogate: PhaseCost,
    surrogate_decode_steps: f64,
    main: PhaseCost,
    main_decode_steps: f64,
) -> CostEstimate {
    let n = pool_size as f64;
    let surrogate_route = n * surrogate.total(surrogate_decode_steps) + main.total(main_decode_steps);
    let main_route = (n + 1.0) * main.total(main_decode_steps);
    CostEstimate {
        surrogate_route,
        main_route,
        ratio: main_route / surrogate_route,
    }
}

/// Decode-length ratio of a verbalized-uncertainty prompt over a
/// discriminative probe. Infinite when the probe decodes zero tokens.
pub fn decode_ratio(verbalized_tokens: u32, probe_tokens: u32) -> f64 {
    if probe_tokens == 0 {
        return f64::INFINITY;
    }
    f64::from(verbalized_tokens) / f64::from(probe_tokens)
}

/// Measured behavior of one model under one prompt shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeProfile {
    pub prompt_tokens: u32,
    pub prefill_gflops: f64,
    pub prefill_seconds: f64,
    pub decode_tokens: u32,
    pub decode_seconds: f64,
}

impl ShapeProfile {
    /// Latency cost with per-step decode derived from the measured totals.
    pub fn latency_phase(&self) -> PhaseCost {
        PhaseCost {
            prefill: self.prefill_seconds,
            decode_per_step: self.decode_seconds / f64::from(self.decode_tokens.max(1)),
        }
    }

    /// Compute cost counting prefill only; decode compute is negligible
    /// next to prefill at these prompt lengths.
    pub fn prefill_flops_phase(&self) -> PhaseCost {
        PhaseCost {
            prefill: self.prefill_gflops,
            decode_per_step: 0.0,
        }
    }
}

/// Measured profile of one model: the short discriminative probe shape and
/// the verbalized-uncertainty shape that decodes an answer plus a stated
/// confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelProfile {
    pub id: &'static str,
    pub params_b: f64,
    pub discriminative: ShapeProfile,
    pub verbalized: ShapeProfile,
}

impl ModelProfile {
    /// Decode-length ratio of the verbalized shape over the probe shape.
    pub fn decode_ratio(&self) -> f64 {
        decode_ratio(self.verbalized.decode_tokens, self.discriminative.decode_tokens)
    }
}

/// Measured profiles for eight open vision-language models, small and
/// large variant per family.
pub const MODEL_PROFILES: [ModelProfile; 8] = [
    ModelProfile {
        id: "qwen3-vl-2b",
        params_b: 2.1,
        discriminative: ShapeProfile {
            prompt_tokens: 289,
            prefill_gflops: 991.0,
            prefill_seconds: 0.0480,
            decode_tokens: 3,
            decode_seconds: 0.0291,
        },
        verbalized: ShapeProfile {
            prompt_tokens: 315,
            prefill_gflops: 984.0,
            prefill_seconds: 0.0471,
            decode_tokens: 101,
            decode_seconds: 0.8422,
        },
    },
    ModelProfile {
        id: "qwen3-vl-8b",
        params_b: 8.1,
        discriminative: ShapeProfile {
            prompt_tokens: 289,
            prefill_gflops: 4360.0,
            prefill_seconds: 0.0638,
            decode_tokens: 15,
            decode_seconds: 0.0377,
        },
        verbalized: ShapeProfile {
            prompt_tokens: 315,
            prefill_gflops: 4328.0,
            prefill_seconds: 0.0640,
            decode_tokens: 443,
            decode_seconds: 1.1067,
        },
    },
    ModelProfile {
        id: "ovis2.5-2b",
        params_b: 2.6,
        discriminative: ShapeProfile {
            prompt_tokens: 326,
            prefill_gflops: 1176.0,
            prefill_seconds: 0.0727,
            decode_tokens: 3,
            decode_seconds: 0.0252,
        },
        verbalized: ShapeProfile {
            prompt_tokens: 352,
            prefill_gflops: 1169.0,
            prefill_seconds: 0.0714,
            decode_tokens: 101,
            decode_seconds: 0.7286,
        },
    },
    ModelProfile {
        id: "ovis2.5-9b",
        params_b: 9.2,
        discriminative: ShapeProfile {
            prompt_tokens: 326,
            prefill_gflops: 5034.0,
            prefill_seconds: 0.0871,
            decode_tokens: 15,
            decode_seconds: 0.0344,
        },
        verbalized: ShapeProfile {
            prompt_tokens: 352,
            prefill_gflops: 5003.0,
            prefill_seconds: 0.0875,
            decode_tokens: 443,
            decode_seconds: 1.0021,
        },
    },
    ModelProfile {
        id: "internvl3.5-2b",
        params_b: 2.3,
        discriminative: ShapeProfile {
            prompt_tokens: 403,
            prefill_gflops: 1427.0,
            prefill_seconds: 0.0532,
            decode_tokens: 4,
            decode_seconds: 0.0304,
        },
        verbalized: ShapeProfile {
            prompt_tokens: 430,
            prefill_gflops: 1421.0,
            prefill_seconds: 0.0527,
            decode_tokens: 103,
            decode_seconds: 0.8529,
        },
    },
    ModelProfile {
        id: "internvl3.5-8b",
        params_b: 8.5,
        discriminative: ShapeProfile {
            prompt_tokens: 403,
            prefill_gflops: 6203.0,
            prefill_seconds: 0.0789,
            decode_tokens: 15,
            decode_seconds: 0.0393,
        },
        verbalized: ShapeProfile {
            prompt_tokens: 430,
            prefill_gflops: 6172.0,
            prefill_seconds: 0.0776,
            decode_tokens: 449,
            decode_seconds: 1.1180,
        },
    },
    ModelProfile {
        id: "gemma-3-4b",
        params_b: 4.3,
        discriminative: ShapeProfile {
            prompt_tokens: 365,
            prefill_gflops: 2827.0,
            prefill_seconds: 0.1107,
            decode_tokens: 8,
            decode_seconds: 0.0417,
        },
        verbalized: ShapeProfile {
            prompt_tokens: 388,
            prefill_gflops: 2788.0,
            prefill_seconds: 0.1097,
            decode_tokens: 227,
            decode_seconds: 1.2162,
        },
    },
    ModelProfile {
        id: "gemma-3-12b",
        params_b: 12.2,
        discriminative: ShapeProfile {
            prompt_tokens: 365,
            prefill_gflops: 8560.0,
            prefill_seconds: 0.1354,
            decode_tokens: 24,
            decode_seconds: 0.0607,
        },
        verbalized: ShapeProfile {
            prompt_tokens: 388,
            prefill_gflops: 8442.0,
            prefill_seconds: 0.1340,
            decode_tokens: 688,
            decode_seconds: 1.7628,
        },
    },
];

/// Looks up a model profile by id.
pub fn model_profile(id: &str) -> Option<&'static ModelProfile> {
    MODEL_PROFILES.iter().find(|p| p.id == id)
}
