//! `evisel rank`: score and rank each query's pool.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use evisel_core::eval::hit_fraction;
use evisel_core::pipeline::{select_top_k, SelectionPolicy};
use evisel_core::pool::{gt_oracle_select, PoolRegime};
use evisel_core::scorers::{score_pool, ProbeCandidate, ProbeContext, DEFAULT_TOP_LOGPROBS};
use evisel_core::templates::{self, TemplateKind};
use serde::Serialize;

use crate::backends::{
    build_backend, candidate_parts, check_file_payload, payload_parts, resolve_backend,
    BackendSpec,
};
use crate::commands::{
    enforce_failure_threshold, finish_validation, load_inputs, write_ldjson, CliError, RankRecord,
    ALLOWED_POOL_SIZES,
};
use crate::config::{FileConfig, RunStamp};

#[derive(Debug, Args)]
pub struct RankArgs {
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
    /// Selection method: surrogate or gt_oracle.
    #[arg(long)]
    pub method: Option<String>,
    /// Candidates to keep per query.
    #[arg(long)]
    pub k: Option<usize>,
    /// Optional helpfulness floor in (0, 1).
    #[arg(long)]
    pub floor: Option<f64>,
    /// Probe template id, for example mragbench/aux.
    #[arg(long)]
    pub probe_template: Option<String>,
    /// Worker threads for the probe stage.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Alternatives requested per probe position.
    #[arg(long)]
    pub top_logprobs: Option<usize>,
    /// Force the surrogate backend kind: synthetic or http.
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
    method: &'a str,
    k: usize,
    floor: Option<f64>,
    probe_template: &'a str,
    concurrency: usize,
    top_logprobs: usize,
    failure_threshold: f64,
    backend: &'a BackendSpec,
}

pub fn run(args: &RankArgs, file: &FileConfig, seed: u64) -> Result<(), CliError> {
    let mut problems = Vec::new();

    let method = args.method.as_deref().unwrap_or("surrogate");
    if !["surrogate", "gt_oracle"].contains(&method) {
        problems.push(format!(
            "unknown method `{method}` (expected surrogate or gt_oracle)"
        ));
    }
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
    let template_id = args
        .probe_template
        .clone()
        .or_else(|| file.rank.probe_template.clone())
        .unwrap_or_else(|| "mragbench/aux".to_string());
    let template = match templates::get(&template_id) {
        Ok(template) if template.kind() == TemplateKind::AuxProbe => Some(template),
        Ok(template) => {
            problems.push(format!(
                "template `{}` is not a probe template",
                template.id()
            ));
            None
        }
        Err(_) => {
            let known: Vec<&str> = templates::registry()
                .iter()
                .filter(|t| t.kind() == TemplateKind::AuxProbe)
                .map(|t| t.id())
                .collect();
            problems.push(format!(
                "unknown template `{template_id}` (probe templates: {})",
                known.join(", ")
            ));
            None
        }
    };
    let concurrency = args.concurrency.or(file.rank.concurrency).unwrap_or(4).max(1);
    let top_logprobs = args
        .top_logprobs
        .or(file.rank.top_logprobs)
        .unwrap_or(DEFAULT_TOP_LOGPROBS)
        .max(1);
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
        None | Some("synthetic") => args.backend.is_some(),
        Some("http") => {
            match &file.surrogate_backend {
                None => problems.push(
                    "--backend http needs a [surrogate_backend] table in the config file"
                        .to_string(),
                ),
                Some(backend) if backend.kind != "http" => problems.push(format!(
                    "--backend http conflicts with configured kind `{}`",
                    backend.kind
                )),
                Some(_) => {}
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
    let backend_spec = resolve_backend(
        "surrogate",
        file.surrogate_backend.as_ref(),
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
    if method == "surrogate" {
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
    }
    finish_validation(problems)?;
    let template = template.expect("validation passed");

    let resolved = Resolved {
        queries: args.queries.display().to_string(),
        pools: args.pools.as_ref().map(|p| p.display().to_string()),
        regime: regime.as_str().to_string(),
        size,
        method,
        k,
        floor,
        probe_template: template.id(),
        concurrency,
        top_logprobs,
        failure_threshold,
        backend: &backend_spec,
    };
    let stamp = RunStamp::new("rank", seed, &resolved);
    eprintln!("{}", stamp.header());

    let backend = build_backend(&backend_spec, seed)?;
    let policy = SelectionPolicy {
        k,
        feasibility_floor: floor,
    };

    let mut records = vec![stamp.meta_record()];
    let mut failed = 0usize;
    for (query, pool) in &inputs.entries {
        let group = format!("{}/k{}", pool.regime, k);
        let relevant = pool.relevant_ids();
        let mut record = RankRecord {
            record_type: "rank",
            query_id: query.query_id.clone(),
            group,
            method: method.to_string(),
            selected: Vec::new(),
            scores: Vec::new(),
            filtered_out: Vec::new(),
            failures: Vec::new(),
            hit_fraction: None,
            error: None,
        };
        if method == "gt_oracle" {
            record.selected = gt_oracle_select(query, k, seed);
            record.hit_fraction = Some(hit_fraction(&record.selected, &query_gt_ids(query), k));
        } else {
            let attachments = query
                .attachment
                .as_deref()
                .map(payload_parts)
                .unwrap_or_default();
            let mut ctx = ProbeContext::new(template, &query.question);
            ctx.choices = query.choices.as_deref();
            ctx.shared_attachments = &attachments;
            ctx.top_logprobs = top_logprobs;
            let candidates: Vec<ProbeCandidate> = pool
                .candidates
                .iter()
                .map(|c| ProbeCandidate {
                    id: c.id.clone(),
                    attachments: candidate_parts(c),
                })
                .collect();
            match score_pool(backend.as_ref(), &ctx, &candidates, concurrency) {
                Ok(pool_scores) => {
                    record.failures = pool_scores.failures;
                    match select_top_k(&pool_scores.scores, &policy) {
                        Ok(selection) => {
                            record.selected = selection
                                .selected
                                .iter()
                                .map(|s| s.candidate_id.clone())
                                .collect();
                            record.filtered_out = selection
                                .filtered_out
                                .iter()
                                .map(|s| s.candidate_id.clone())
                                .collect();
                            record.scores = selection.ranked;
                            record.hit_fraction =
                                Some(hit_fraction(&record.selected, &relevant, k));
                        }
                        Err(e) => record.error = Some(e.to_string()),
                    }
                }
                Err(e) => record.error = Some(e.to_string()),
            }
        }
        if record.error.is_some() {
            failed += 1;
        }
        records.push(serde_json::to_value(&record).context("serializing rank record")?);
    }

    write_ldjson(&args.out, &records)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let total = inputs.entries.len();
    eprintln!(
        "ranked {} queries ({} failed) to {}",
        total,
        failed,
        args.out.display()
    );
    enforce_failure_threshold(failed, total, failure_threshold)
}

fn query_gt_ids(query: &evisel_core::pool::QueryRecord) -> Vec<String> {
    query
        .ground_truth
        .iter()
        .map(|record| record.id.clone())
        .collect()
}
