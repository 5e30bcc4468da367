//! `evisel eval`: aggregate run results into a report.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use evisel_core::eval::{
    aggregate_report, render_csv, render_json, render_text_table, QueryResult, Report,
    REPORT_SCHEMA_VERSION,
};
use serde::{Deserialize, Serialize};

use crate::commands::{finish_validation, CliError};
use crate::config::{read_result_records, FileConfig, RunStamp};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Result file from `evisel run`.
    #[arg(long)]
    pub results: PathBuf,
    /// Output format: text, csv, or json.
    #[arg(long)]
    pub format: Option<String>,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct ResultRow {
    query_id: String,
    #[serde(default)]
    group: Option<String>,
    #[serde(default)]
    correct: Option<bool>,
    #[serde(default)]
    hit_fraction: Option<f64>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Serialize)]
struct Resolved {
    results: String,
    format: String,
}

pub fn run(args: &EvalArgs, _file: &FileConfig, seed: u64) -> Result<(), CliError> {
    let mut problems = Vec::new();

    let format = args.format.as_deref().unwrap_or("text").to_string();
    if !["text", "csv", "json"].contains(&format.as_str()) {
        problems.push(format!(
            "unknown format `{format}` (expected text, csv, or json)"
        ));
    }
    let rows: Vec<ResultRow> = read_result_records(&args.results, &mut problems);
    let mut results = Vec::with_capacity(rows.len());
    for row in &rows {
        if row.error.is_some() {
            // Failed queries carry no answer; they are excluded rather
            // than silently counted as wrong.
            continue;
        }
        let Some(correct) = row.correct else {
            problems.push(format!(
                "query `{}` has no `correct` field; evaluate `run` outputs over queries with reference answers",
                row.query_id
            ));
            continue;
        };
        results.push(QueryResult {
            query_id: row.query_id.clone(),
            group: row.group.clone().unwrap_or_else(|| "all".to_string()),
            correct,
            hit_fraction: row.hit_fraction,
        });
    }
    finish_validation(problems)?;

    let resolved = Resolved {
        results: args.results.display().to_string(),
        format: format.clone(),
    };
    let stamp = RunStamp::new("eval", seed, &resolved);
    eprintln!("{}", stamp.header());

    // An empty results file is a valid, empty report.
    let report = if results.is_empty() {
        Report {
            schema_version: REPORT_SCHEMA_VERSION,
            total_queries: 0,
            groups: Vec::new(),
        }
    } else {
        aggregate_report(&results)
            .context("aggregating results")
            .map_err(CliError::Runtime)?
    };
    let excluded = rows.iter().filter(|r| r.error.is_some()).count();
    if excluded > 0 {
        eprintln!("excluded {excluded} failed queries from the report");
    }
    let rendered = match format.as_str() {
        "csv" => render_csv(&report),
        "json" => render_json(&report)
            .context("rendering report")
            .map_err(CliError::Runtime)?,
        _ => render_text_table(&report),
    };
    match &args.out {
        Some(path) => {
            std::fs::write(path, rendered)
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote report to {}", path.display());
        }
        None => print!("{rendered}"),
    }
    Ok(())
}
