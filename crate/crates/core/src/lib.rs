//! Utility-oriented evidence selection for retrieval-augmented generation.
//!
//! The crate ranks retrieved evidence by how much it is expected to change a
//! generator's answer distribution, probes that quantity with a cheap
//! surrogate model instead of the main generator, and ships the laboratory
//! used to validate the underlying ranking laws:
//!
//! * [`infogain`]: information-gain primitives and machine checks of the
//!   order-equivalence and transfer laws;
//! * [`seeded`]: deterministic randomness with a frozen byte-level contract;
//! * [`templates`]: the prompt registry and placeholder expansion;
//! * [`backend`]: model-backend abstraction with synthetic, instrumented,
//!   and HTTP implementations;
//! * [`scorers`]: surrogate helpfulness scoring and uncertainty baselines;
//! * [`pool`]: candidate-pool construction regimes and pool files;
//! * [`pipeline`]: the retrieve, rank, generate pipeline and its cost model;
//! * [`eval`]: agreement metrics and report aggregation;
//! * [`sim`]: the synthetic laboratory for law checks and strategy
//!   comparisons.

pub mod backend;
pub mod eval;
pub mod infogain;
pub mod pipeline;
pub mod pool;
pub mod scorers;
pub mod seeded;
pub mod sim;
pub mod templates;

pub use infogain::{
    answer_space_ig, bernoulli_ig, check_answer_space_transfer, check_latent_order_agreement,
    entropy, kl_divergence, mixture_distribution, BernoulliHelpfulness, DiscreteDistribution,
    InfoError, MixtureAnswerModel, TheoremCheckRecord,
};
pub use backend::{
    Backend, BackendError, BackendRequest, BackendResponse, HttpBackend, HttpBackendConfig,
    InstrumentedBackend, Message, MessagePart, Role, SyntheticBackend, TokenLogprob,
};
pub use eval::{
    aggregate_report, exact_match, false_positive_rate, gt_hit_rate, hit_fraction, kendall_tau_b,
    mean_false_positive_rate, render_csv, render_json, render_text_table, EvalError, GroupSummary,
    PairedScore, QueryResult, Report, REPORT_SCHEMA_VERSION,
};
pub use pipeline::{
    decode_ratio, estimate_cost, model_profile, rank_candidates, run_pipeline, select_top_k,
    text_payload_mapper, CostEstimate, ModelProfile, PhaseCost, PipelineConfig, PipelineError,
    PipelineInputs, PipelineOutcome, Selection, SelectionPolicy, ShapeProfile, MODEL_PROFILES,
};
pub use pool::{
    build_pool, gt_oracle_select, load_pools, load_queries, save_pools, CandidateOrigin,
    CandidateRecord, Pool, PoolCandidate, PoolError, PoolRegime, QueryRecord,
};
pub use scorers::{
    avg_token_probability, choice_softmax_entropy, logistic, mc_consistency,
    normalized_exact_match, score_pool, McConsistency, PoolScores, ProbeCandidate, ProbeContext,
    ScoreError, ScoreFailure, SurrogateScore, DEFAULT_TOP_LOGPROBS,
};
pub use seeded::{derive_seed, rng_for_label, rng_from_seed, stable_hash};
pub use sim::{
    brute_force_ig_y, generate_world, run_law_checks, run_strategy_comparison, LambdaMap,
    LawCheckSummary, NoiseCdf, SimCandidate, SimError, SimQuery, Strategy, StrategyOutcome,
    World, WorldConfig,
};
