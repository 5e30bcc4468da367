//! `evisel cost`: price surrogate probing against main-model judging.

use clap::Args;
use evisel_core::pipeline::{estimate_cost, model_profile, CostEstimate, MODEL_PROFILES};
use serde::Serialize;

use crate::commands::{finish_validation, CliError};
use crate::config::{FileConfig, RunStamp};

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Pool size N priced as N probes plus one generation.
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Surrogate model profile id.
    #[arg(long)]
    pub surrogate: Option<String>,
    /// Main model profile id.
    #[arg(long)]
    pub main: Option<String>,
    /// Cost unit: gflops (prefill compute) or seconds (measured latency).
    #[arg(long)]
    pub unit: Option<String>,
    /// Override the surrogate's decode steps.
    #[arg(long)]
    pub surrogate_decode: Option<f64>,
    /// Override the main model's decode steps.
    #[arg(long)]
    pub main_decode: Option<f64>,
    /// Output format: text or json.
    #[arg(long)]
    pub format: Option<String>,
    /// List the embedded model profiles and exit.
    #[arg(long)]
    pub list: bool,
}

#[derive(Serialize)]
struct Resolved<'a> {
    pool_size: usize,
    surrogate: &'a str,
    main: &'a str,
    unit: &'a str,
    surrogate_decode: f64,
    main_decode: f64,
    format: &'a str,
}

#[derive(Serialize)]
struct JsonOutput<'a> {
    schema_version: u32,
    unit: &'a str,
    pool_size: usize,
    surrogate: &'a str,
    main: &'a str,
    surrogate_decode: f64,
    main_decode: f64,
    estimate: CostEstimate,
    surrogate_verbalized_decode_ratio: f64,
    main_verbalized_decode_ratio: f64,
}

fn list_profiles() {
    println!(
        "{:<15} {:>8} {:>14} {:>14} {:>12} {:>12} {:>12}",
        "id", "params_b", "probe_gflops", "probe_decode", "uq_decode", "decode_ratio", "prefill_s"
    );
    for profile in &MODEL_PROFILES {
        println!(
            "{:<15} {:>8.1} {:>14.0} {:>14} {:>12} {:>12.2} {:>12.4}",
            profile.id,
            profile.params_b,
            profile.discriminative.prefill_gflops,
            profile.discriminative.decode_tokens,
            profile.verbalized.decode_tokens,
            profile.decode_ratio(),
            profile.discriminative.prefill_seconds,
        );
    }
}

pub fn run(args: &CostArgs, _file: &FileConfig, seed: u64) -> Result<(), CliError> {
    if args.list {
        list_profiles();
        return Ok(());
    }
    let mut problems = Vec::new();

    let pool_size = args.pool_size.unwrap_or(10);
    if pool_size == 0 {
        problems.push("pool size must be at least 1".to_string());
    }
    let known = || {
        MODEL_PROFILES
            .iter()
            .map(|p| p.id)
            .collect::<Vec<_>>()
            .join(", ")
    };
    let surrogate_id = args.surrogate.as_deref().unwrap_or("qwen3-vl-2b");
    let surrogate = model_profile(surrogate_id);
    if surrogate.is_none() {
        problems.push(format!(
            "unknown surrogate profile `{surrogate_id}` (known: {})",
            known()
        ));
    }
    let main_id = args.main.as_deref().unwrap_or("qwen3-vl-8b");
    let main = model_profile(main_id);
    if main.is_none() {
        problems.push(format!(
            "unknown main profile `{main_id}` (known: {})",
            known()
        ));
    }
    let unit = args.unit.as_deref().unwrap_or("gflops");
    if !["gflops", "seconds"].contains(&unit) {
        problems.push(format!(
            "unknown unit `{unit}` (expected gflops or seconds)"
        ));
    }
    for (label, value) in [
        ("surrogate", args.surrogate_decode),
        ("main", args.main_decode),
    ] {
        if let Some(value) = value {
            if !(value >= 0.0) || !value.is_finite() {
                problems.push(format!("{label} decode steps must be nonnegative"));
            }
        }
    }
    let format = args.format.as_deref().unwrap_or("text");
    if !["text", "json"].contains(&format) {
        problems.push(format!("unknown format `{format}` (expected text or json)"));
    }
    finish_validation(problems)?;
    let surrogate = surrogate.expect("validation passed");
    let main = main.expect("validation passed");

    // In GFLOPs the decode phase is negligible next to prefill and prices
    // at zero; in seconds each model decodes its measured token count
    // unless overridden.
    let (surrogate_phase, main_phase, default_surrogate_decode, default_main_decode) =
        match unit {
            "seconds" => (
                surrogate.discriminative.latency_phase(),
                main.discriminative.latency_phase(),
                f64::from(surrogate.discriminative.decode_tokens),
                f64::from(main.discriminative.decode_tokens),
            ),
            _ => (
                surrogate.discriminative.prefill_flops_phase(),
                main.discriminative.prefill_flops_phase(),
                0.0,
                0.0,
            ),
        };
    let surrogate_decode = args.surrogate_decode.unwrap_or(default_surrogate_decode);
    let main_decode = args.main_decode.unwrap_or(default_main_decode);

    let resolved = Resolved {
        pool_size,
        surrogate: surrogate.id,
        main: main.id,
        unit,
        surrogate_decode,
        main_decode,
        format,
    };
    let stamp = RunStamp::new("cost", seed, &resolved);
    eprintln!("{}", stamp.header());

    let estimate = estimate_cost(
        pool_size,
        surrogate_phase,
        surrogate_decode,
        main_phase,
        main_decode,
    );
    if format == "json" {
        let output = JsonOutput {
            schema_version: 1,
            unit,
            pool_size,
            surrogate: surrogate.id,
            main: main.id,
            surrogate_decode,
            main_decode,
            estimate,
            surrogate_verbalized_decode_ratio: surrogate.decode_ratio(),
            main_verbalized_decode_ratio: main.decode_ratio(),
        };
        println!(
            "{}",
            serde_json::to_string_pretty(&output)
                .map_err(|e| CliError::Runtime(e.into()))?
        );
    } else {
        println!("unit: {unit}");
        println!(
            "surrogate route: {} probes on {} + 1 generation on {} = {:.4}",
            pool_size, surrogate.id, main.id, estimate.surrogate_route
        );
        println!(
            "main route:      {} judgments + 1 generation on {} = {:.4}",
            pool_size, main.id, estimate.main_route
        );
        println!("cost ratio (main / surrogate): {:.4}", estimate.ratio);
        println!(
            "verbalized-confidence decode ratio: {:.2} ({}), {:.2} ({})",
            surrogate.decode_ratio(),
            surrogate.id,
            main.decode_ratio(),
            main.id
        );
    }
    Ok(())
}
