//! `evisel simulate`: synthetic laboratory for the selection laws.

use std::path::PathBuf;

use clap::Args;
use evisel_core::sim::{
    generate_world, run_law_checks, run_strategy_comparison, LambdaMap, NoiseCdf, WorldConfig,
};
use serde::Serialize;
use serde_json::json;

use crate::commands::{finish_validation, write_ldjson, CliError};
use crate::config::{FileConfig, RunStamp};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// What to run: checks, strategies, or both.
    #[arg(long)]
    pub mode: Option<String>,
    /// Number of synthetic queries.
    #[arg(long)]
    pub queries_n: Option<usize>,
    /// Candidates per query.
    #[arg(long)]
    pub candidates: Option<usize>,
    /// Answer space size (2 to 8).
    #[arg(long)]
    pub answer_space: Option<usize>,
    /// Helpfulness noise channel: logistic or gaussian.
    #[arg(long)]
    pub noise: Option<String>,
    /// Scale of the helpfulness noise channel.
    #[arg(long)]
    pub noise_scale: Option<f64>,
    /// Mixture weight map: identity or calibrated_logistic.
    #[arg(long)]
    pub lambda_map: Option<String>,
    /// Signal-to-noise ratio of the retriever's view of true scores.
    #[arg(long)]
    pub snr: Option<f64>,
    /// Candidates per query marked as ground truth.
    #[arg(long)]
    pub gt_count: Option<usize>,
    /// Selection sizes to compare, comma separated.
    #[arg(long)]
    pub ks: Option<String>,
    /// Answer samples drawn per query and strategy.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Feasibility floor used by the law checks.
    #[arg(long)]
    pub p_bar: Option<f64>,
    /// Optional LDJSON output path for the raw records.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Resolved<'a> {
    mode: &'a str,
    world: WorldConfig,
    ks: &'a [usize],
    trials: usize,
    p_bar: f64,
}

fn parse_ks(raw: &str, problems: &mut Vec<String>) -> Vec<usize> {
    let mut ks = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match part.parse::<usize>() {
            Ok(k) if k > 0 => ks.push(k),
            _ => problems.push(format!("invalid selection size `{part}` in --ks")),
        }
    }
    if ks.is_empty() {
        problems.push("--ks must list at least one positive selection size".to_string());
    }
    ks
}

pub fn run(args: &SimulateArgs, _file: &FileConfig, seed: u64) -> Result<(), CliError> {
    let mut problems = Vec::new();

    let mode = args.mode.as_deref().unwrap_or("both");
    if !["checks", "strategies", "both"].contains(&mode) {
        problems.push(format!(
            "unknown mode `{mode}` (expected checks, strategies, or both)"
        ));
    }
    let defaults = WorldConfig::default();
    let noise = match args.noise.as_deref() {
        None => defaults.noise,
        Some("logistic") => NoiseCdf::Logistic,
        Some("gaussian") => NoiseCdf::Gaussian,
        Some(other) => {
            problems.push(format!(
                "unknown noise channel `{other}` (expected logistic or gaussian)"
            ));
            defaults.noise
        }
    };
    let lambda_map = match args.lambda_map.as_deref() {
        None => defaults.lambda_map,
        Some("identity") => LambdaMap::Identity,
        Some("calibrated_logistic") => LambdaMap::CalibratedLogistic,
        Some(other) => {
            problems.push(format!(
                "unknown lambda map `{other}` (expected identity or calibrated_logistic)"
            ));
            defaults.lambda_map
        }
    };
    let config = WorldConfig {
        answer_space_size: args.answer_space.unwrap_or(defaults.answer_space_size),
        n_queries: args.queries_n.unwrap_or(defaults.n_queries),
        candidates_per_query: args.candidates.unwrap_or(defaults.candidates_per_query),
        noise,
        noise_scale: args.noise_scale.unwrap_or(defaults.noise_scale),
        lambda_map,
        relevance_snr: args.snr.unwrap_or(defaults.relevance_snr),
        gt_count: args.gt_count.unwrap_or(defaults.gt_count),
        seed,
    };
    let ks = match args.ks.as_deref() {
        Some(raw) => parse_ks(raw, &mut problems),
        None => vec![3],
    };
    let trials = args.trials.unwrap_or(40);
    if trials == 0 {
        problems.push("--trials must be at least 1".to_string());
    }
    let p_bar = args.p_bar.unwrap_or(0.5);
    if !(p_bar > 0.0 && p_bar < 1.0) {
        problems.push(format!(
            "--p-bar must be strictly between 0 and 1, got {p_bar}"
        ));
    }
    for &k in &ks {
        if k > config.candidates_per_query {
            problems.push(format!(
                "selection size {k} exceeds candidates per query {}",
                config.candidates_per_query
            ));
        }
    }
    if let Err(e) = config.validate() {
        problems.push(e.to_string());
    }
    finish_validation(problems)?;

    let resolved = Resolved {
        mode,
        world: config,
        ks: &ks,
        trials,
        p_bar,
    };
    let stamp = RunStamp::new("simulate", seed, &resolved);
    eprintln!("{}", stamp.header());

    let world = generate_world(&config).map_err(|e| CliError::Runtime(e.into()))?;
    let mut records = vec![stamp.meta_record()];

    if mode != "strategies" {
        let summary = run_law_checks(&world, p_bar).map_err(|e| CliError::Runtime(e.into()))?;
        println!(
            "law checks over {} queries ({} candidates each):",
            config.n_queries, config.candidates_per_query
        );
        println!(
            "  latent order agreement: {} pairs, {} violations",
            summary.order_pairs_checked, summary.order_violations
        );
        println!(
            "  answer-space transfer:  {} pairs, {} violations, {} skipped",
            summary.transfer_pairs_checked,
            summary.transfer_violations,
            summary.transfer_pairs_skipped
        );
        records.push(json!({
            "record_type": "law_checks",
            "p_bar": p_bar,
            "summary": summary,
        }));
    }

    if mode != "checks" {
        let outcomes = run_strategy_comparison(&world, &ks, trials, seed)
            .map_err(|e| CliError::Runtime(e.into()))?;
        println!(
            "strategy comparison ({} answer samples per query):",
            trials
        );
        println!(
            "  {:<22} {:>3} {:>10} {:>14} {:>14}",
            "strategy", "k", "accuracy", "hit_fraction", "mean_ig_nats"
        );
        for outcome in &outcomes {
            println!(
                "  {:<22} {:>3} {:>10.4} {:>14.4} {:>14.6}",
                outcome.strategy.as_str(),
                outcome.k,
                outcome.answer_accuracy,
                outcome.mean_hit_fraction,
                outcome.mean_selected_ig
            );
            records.push(json!({
                "record_type": "strategy_outcome",
                "outcome": outcome,
            }));
        }
    }

    if let Some(path) = &args.out {
        write_ldjson(path, &records)?;
        eprintln!("wrote {} records to {}", records.len(), path.display());
    }
    Ok(())
}
