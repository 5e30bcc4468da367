//! `evisel run`: the full probe, select, and answer pipeline per query.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use evisel_core::eval::{exact_match, hit_fraction};
use evisel_core::pipeline::{run_pipeline, PipelineConfig, PipelineInputs, SelectionPolicy};
use evisel_core::pool::PoolRegime;
use evisel_core::scorers::DEFAULT_TOP_LOGPROBS;
use evisel_core::templates::{self, TemplateKind};
use serde::Serialize;

use crate::backends::{
    build_backend, candidate_parts, check_file_payload, payload_parts, resolve_backend,
    BackendSpec,
};
use crate::commands::{
    enforce_failure_threshold, finish_validation, load_inputs, write_ldjson, CliError, RunRecord,
    ALLOWED_POOL_SIZES,
};
use crate::config::{FileConfig, RunStamp};

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Query file (LDJSON).
    #[arg(long)]
    pub queries: PathBuf,
    /// Result file to write (LDJSON with a leading meta record).
    #[arg(long)]
    pub out: PathBuf,
    /// Pool file from `evisel pool`; without it pools are built in place.
    #[arg(long)]
    pub pools: Option<PathBuf>,
    /// Regime for in-place pool construction.
    #[arg(long)]
    pub regime: Option<String>,
    /// Size for in-place pool construction: 10, 15, or 20.
    #[arg(long)]
    pub size: Option<usize>,
    /// Candidates to keep per query.
    #[arg(long)]
    pub k: Option<usize>,
    /// Optional helpfulness floor in (0, 1).
    #[arg(long)]
    pub floor: Option<f64>,
    /// Probe template id.
    #[arg(long)]
    pub probe_template: Option<String>,
    /// Answer template id, for example mragbench/answer_rag.
    #[arg(long)]
    pub answer_template: Option<String>,
    /// Decode budget for the main generation.
    #[arg(long)]
    pub max_answer_tokens: Option<usize>,
    /// Worker threads for the probe stage.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Force both backend kinds: synthetic or http.
    #[arg(long)]
    pub backend: Option<String>,
    /// Fraction of queries allowed to fail before the run itself counts
    /// as failed.
    #[arg(long)]
    pub failure_threshold: Option<f64>,
}

#[derive(Serialize)]
struct Resolved<'a> {
    queries: String,
    pools: Option<String>,
    regime: String,
    size: usize,
    k: usize,
    floor: Option<f64>,
    probe_template: &'a str,
    answer_template: &'a str,
    max_answer_tokens: usize,
    concurrency: usize,
    failure_threshold: f64,
    surrogate: &'a BackendSpec,
    main: &'a BackendSpec,
}

fn resolve_template(
    flag: Option<&str>,
    file_value: Option<&str>,
    default: &str,
    kind: TemplateKind,
    kind_label: &str,
    problems: &mut Vec<String>,
) -> Option<&'static evisel_core::templates::Template> {
    let id = flag
        .or(file_value)
        .unwrap_or(default)
        .to_string();
    match templates::get(&id) {
        Ok(template) if template.kind() == kind => Some(template),
        Ok(template) => {
            problems.push(format!(
                "template `{}` is not {kind_label} template",
                template.id()
            ));
            None
        }
        Err(_) => {
            let known: Vec<&str> = templates::registry()
                .iter()
                .filter(|t| t.kind() == kind)
                .map(|t| t.id())
                .collect();
            problems.push(format!(
                "unknown template `{id}` ({kind_label} templates: {})",
                known.join(", ")
            ));
            None
        }
    }
}

pub fn run(args: &RunArgs, file: &FileConfig, seed: u64) -> Result<(), CliError> {
    let mut problems = Vec::new();

    let k = args.k.or(file.rank.k).unwrap_or(5);
    if k == 0 {
        problems.push("k must be at least 1".to_string());
    }
    let floor = args.floor.or(file.rank.floor);
    if let Some(floor) = floor {
        if !(floor > 0.0 && floor < 1.0) {
            problems.push(format!(
                "feasibility floor must lie strictly between 0 and 1, got {floor}"
            ));
        }
    }
    let probe_template = resolve_template(
        args.probe_template.as_deref(),
        file.rank.probe_template.as_deref(),
        "mragbench/aux",
        TemplateKind::AuxProbe,
        "a probe",
        &mut problems,
    );
    let answer_template = resolve_template(
        args.answer_template.as_deref(),
        file.run.answer_template.as_deref(),
        "mragbench/answer_rag",
        TemplateKind::Answer,
        "an answer",
        &mut problems,
    );
    let max_answer_tokens = args
        .max_answer_tokens
        .or(file.run.max_answer_tokens)
        .unwrap_or(256)
        .max(1);
    let concurrency = args.concurrency.or(file.rank.concurrency).unwrap_or(4).max(1);
    let failure_threshold = args
        .failure_threshold
        .or(file.rank.failure_threshold)
        .unwrap_or(0.0);
    if !(0.0..=1.0).contains(&failure_threshold) {
        problems.push(format!(
            "failure threshold must lie in [0, 1], got {failure_threshold}"
        ));
    }

    let force_synthetic = match args.backend.as_deref() {
        None => false,
        Some("synthetic") => true,
        Some("http") => {
            if file.surrogate_backend.is_none() || file.main_backend.is_none() {
                problems.push(
                    "--backend http needs [surrogate_backend] and [main_backend] tables in the config file"
                        .to_string(),
                );
            }
            false
        }
        Some(other) => {
            problems.push(format!(
                "unknown backend `{other}` (expected synthetic or http)"
            ));
            false
        }
    };
    let surrogate_spec = resolve_backend(
        "surrogate",
        file.surrogate_backend.as_ref(),
        force_synthetic,
        &mut problems,
    );
    let main_spec = resolve_backend(
        "main",
        file.main_backend.as_ref(),
        force_synthetic,
        &mut problems,
    );

    let regime_name = args
        .regime
        .clone()
        .or_else(|| file.pool.regime.clone())
        .unwrap_or_else(|| PoolRegime::BenchmarkDefault.as_str().to_string());
    let regime = regime_name.parse::<PoolRegime>().unwrap_or_else(|e| {
        problems.push(e.to_string());
        PoolRegime::BenchmarkDefault
    });
    let size = args.size.or(file.pool.size).unwrap_or(10);
    if args.pools.is_none() && !ALLOWED_POOL_SIZES.contains(&size) {
        problems.push(format!(
            "pool size {size} not supported (expected one of {ALLOWED_POOL_SIZES:?})"
        ));
    }

    let inputs = load_inputs(
        &args.queries,
        args.pools.as_deref(),
        regime,
        size,
        seed,
        &mut problems,
    );
    for (query, pool) in &inputs.entries {
        if let Some(attachment) = &query.attachment {
            check_file_payload(attachment, &query.query_id, &mut problems);
        }
        for candidate in &pool.candidates {
            check_file_payload(
                &candidate.payload,
                &format!("{}/{}", query.query_id, candidate.id),
                &mut problems,
            );
        }
    }
    finish_validation(problems)?;
    let probe_template = probe_template.expect("validation passed");
    let answer_template = answer_template.expect("validation passed");

    let resolved = Resolved {
        queries: args.queries.display().to_string(),
        pools: args.pools.as_ref().map(|p| p.display().to_string()),
        regime: regime.as_str().to_string(),
        size,
        k,
        floor,
        probe_template: probe_template.id(),
        answer_template: answer_template.id(),
        max_answer_tokens,
        concurrency,
        failure_threshold,
        surrogate: &surrogate_spec,
        main: &main_spec,
    };
    let stamp = RunStamp::new("run", seed, &resolved);
    eprintln!("{}", stamp.header());

    let surrogate = build_backend(&surrogate_spec, seed)?;
    let main = build_backend(&main_spec, seed)?;
    let config = PipelineConfig {
        policy: SelectionPolicy {
            k,
            feasibility_floor: floor,
        },
        concurrency,
        max_answer_tokens,
        top_logprobs: DEFAULT_TOP_LOGPROBS,
    };

    let mut records = vec![stamp.meta_record()];
    let mut failed = 0usize;
    for (query, pool) in &inputs.entries {
        let group = format!("{}/k{}", pool.regime, k);
        let relevant = pool.relevant_ids();
        let attachments = query
            .attachment
            .as_deref()
            .map(payload_parts)
            .unwrap_or_default();
        let pipeline_inputs = PipelineInputs {
            pool,
            question: &query.question,
            choices: query.choices.as_deref(),
            query_attachments: &attachments,
            probe_template,
            answer_template,
            payload_mapper: &candidate_parts,
        };
        let mut record = RunRecord {
            record_type: "run",
            query_id: query.query_id.clone(),
            group,
            answer: String::new(),
            correct: None,
            hit_fraction: None,
            selected: Vec::new(),
            probes_attempted: 0,
            probes_scored: 0,
            failures: Vec::new(),
            error: None,
        };
        match run_pipeline(surrogate.as_ref(), main.as_ref(), &pipeline_inputs, &config) {
            Ok(outcome) => {
                record.selected = outcome
                    .selection
                    .selected
                    .iter()
                    .map(|s| s.candidate_id.clone())
                    .collect();
                record.hit_fraction = Some(hit_fraction(&record.selected, &relevant, k));
                record.correct = query
                    .answer
                    .as_deref()
                    .map(|reference| exact_match(&outcome.answer, reference));
                record.probes_attempted = outcome.probes_attempted;
                record.probes_scored = outcome.probes_scored;
                record.failures = outcome.probe_failures;
                record.answer = outcome.answer;
            }
            Err(e) => {
                record.error = Some(e.to_string());
                failed += 1;
            }
        }
        records.push(serde_json::to_value(&record).context("serializing run record")?);
    }

    write_ldjson(&args.out, &records)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let total = inputs.entries.len();
    eprintln!(
        "answered {} queries ({} failed) to {}",
        total,
        failed,
        args.out.display()
    );
    enforce_failure_threshold(failed, total, failure_threshold)
}
