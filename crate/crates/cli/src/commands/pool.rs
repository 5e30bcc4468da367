//! `evisel pool`: build candidate pools from a query file.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use evisel_core::pool::{build_pool, load_queries, save_pools, Pool, PoolRegime};
use serde::Serialize;

use crate::commands::{finish_validation, pool_error_message, CliError, ALLOWED_POOL_SIZES};
use crate::config::{FileConfig, RunStamp};

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Query file (LDJSON).
    #[arg(long)]
    pub queries: PathBuf,
    /// Pool file to write (LDJSON, one pool per line).
    #[arg(long)]
    pub out: PathBuf,
    /// Construction regime: benchmark_default, pure_retrieve, gt_hard_neg,
    /// or gt_hard_neg_stochastic.
    #[arg(long)]
    pub regime: Option<String>,
    /// Pool size: 10, 15, or 20.
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Serialize)]
struct Resolved {
    queries: String,
    regime: String,
    size: usize,
}

pub fn run(args: &PoolArgs, file: &FileConfig, seed: u64) -> Result<(), CliError> {
    let mut problems = Vec::new();

    let regime_name = args
        .regime
        .clone()
        .or_else(|| file.pool.regime.clone())
        .unwrap_or_else(|| PoolRegime::BenchmarkDefault.as_str().to_string());
    let regime = match regime_name.parse::<PoolRegime>() {
        Ok(regime) => regime,
        Err(e) => {
            problems.push(e.to_string());
            PoolRegime::BenchmarkDefault
        }
    };
    let size = args.size.or(file.pool.size).unwrap_or(10);
    if !ALLOWED_POOL_SIZES.contains(&size) {
        problems.push(format!(
            "pool size {size} not supported (expected one of {ALLOWED_POOL_SIZES:?})"
        ));
    }

    let queries = match load_queries(&args.queries) {
        Ok(queries) => queries,
        Err(e) => {
            problems.push(pool_error_message(&args.queries, e));
            Vec::new()
        }
    };
    if queries.is_empty() && problems.is_empty() {
        problems.push(format!("{}: no queries", args.queries.display()));
    }

    let mut pools: Vec<Pool> = Vec::with_capacity(queries.len());
    for query in &queries {
        match build_pool(query, regime, size, seed) {
            Ok(pool) => pools.push(pool),
            Err(e) => problems.push(e.to_string()),
        }
    }
    finish_validation(problems)?;

    let resolved = Resolved {
        queries: args.queries.display().to_string(),
        regime: regime.as_str().to_string(),
        size,
    };
    let stamp = RunStamp::new("pool", seed, &resolved);
    eprintln!("{}", stamp.header());

    save_pools(&args.out, &pools)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(CliError::Runtime)?;
    let under_filled = pools.iter().filter(|p| p.under_filled).count();
    eprintln!(
        "wrote {} pools ({} under-filled) to {}",
        pools.len(),
        under_filled,
        args.out.display()
    );
    Ok(())
}
