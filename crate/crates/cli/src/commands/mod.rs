//! Subcommand implementations.

pub mod cost;
pub mod eval;
pub mod pool;
pub mod rank;
pub mod run;
pub mod simulate;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use evisel_core::pool::{
    build_pool, load_pools, load_queries, Pool, PoolError, PoolRegime, QueryRecord,
};
use evisel_core::scorers::{ScoreFailure, SurrogateScore};
use serde::{Deserialize, Serialize};

/// Pool sizes the command line accepts.
pub const ALLOWED_POOL_SIZES: [usize; 3] = [10, 15, 20];

/// Failure modes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Input problems, all collected before any work; exit code 1.
    Validation(Vec<String>),
    /// Failure while executing; exit code 2.
    Runtime(anyhow::Error),
    /// The run finished but more queries failed than allowed; exit code 3.
    PartialFailure {
        failed: usize,
        total: usize,
        threshold: f64,
    },
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

/// Formats a pool-file error; bare I/O errors gain the offending path,
/// schema errors already carry it.
pub fn pool_error_message(path: &Path, e: PoolError) -> String {
    match &e {
        PoolError::Io(_) => format!("{}: {e}", path.display()),
        _ => e.to_string(),
    }
}

/// Ends the validation phase: any collected problem aborts the command.
pub fn finish_validation(problems: Vec<String>) -> Result<(), CliError> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(problems))
    }
}

/// Writes LDJSON records, one value per line.
pub fn write_ldjson(path: &Path, records: &[serde_json::Value]) -> anyhow::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// One ranked query in a `rank` output file.
#[derive(Debug, Serialize, Deserialize)]
pub struct RankRecord {
    pub record_type: &'static str,
    pub query_id: String,
    pub group: String,
    pub method: String,
    pub selected: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<SurrogateScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filtered_out: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<ScoreFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_fraction: Option<f64>,
    /// Set when the whole query failed; such queries count against the
    /// failure threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One answered query in a `run` output file.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub record_type: &'static str,
    pub query_id: String,
    pub group: String,
    pub answer: String,
    /// Match against the reference answer, when the query carries one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_fraction: Option<f64>,
    pub selected: Vec<String>,
    pub probes_attempted: usize,
    pub probes_scored: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<ScoreFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Queries paired with their pools, either loaded or freshly built.
pub struct Inputs {
    pub entries: Vec<(QueryRecord, Pool)>,
}

/// Loads queries and resolves each one's pool. With `--pools` the pools
/// come from the given file and every query must have exactly one; without
/// it, pools are built under the resolved regime and size.
pub fn load_inputs(
    queries_path: &Path,
    pools_path: Option<&Path>,
    regime: PoolRegime,
    size: usize,
    seed: u64,
    problems: &mut Vec<String>,
) -> Inputs {
    let queries = match load_queries(queries_path) {
        Ok(queries) => queries,
        Err(e) => {
            problems.push(pool_error_message(queries_path, e));
            return Inputs { entries: Vec::new() };
        }
    };
    if queries.is_empty() {
        problems.push(format!("{}: no queries", queries_path.display()));
    }
    let mut entries = Vec::with_capacity(queries.len());
    match pools_path {
        Some(path) => {
            let pools = match load_pools(path) {
                Ok(pools) => pools,
                Err(e) => {
                    problems.push(pool_error_message(path, e));
                    Vec::new()
                }
            };
            let mut by_query: BTreeMap<&str, &Pool> = BTreeMap::new();
            for pool in &pools {
                if by_query.insert(&pool.query_id, pool).is_some() {
                    problems.push(format!(
                        "{}: more than one pool for query `{}`",
                        path.display(),
                        pool.query_id
                    ));
                }
            }
            for query in &queries {
                match by_query.get(query.query_id.as_str()) {
                    Some(pool) => entries.push((query.clone(), (*pool).clone())),
                    None => problems.push(format!(
                        "{}: no pool for query `{}`",
                        path.display(),
                        query.query_id
                    )),
                }
            }
        }
        None => {
            for query in queries {
                match build_pool(&query, regime, size, seed) {
                    Ok(pool) => entries.push((query, pool)),
                    Err(e) => problems.push(e.to_string()),
                }
            }
        }
    }
    Inputs { entries }
}

/// Applies the failure threshold once outputs are written: failing more
/// than `threshold` of the queries turns the run into a partial failure.
pub fn enforce_failure_threshold(
    failed: usize,
    total: usize,
    threshold: f64,
) -> Result<(), CliError> {
    if total == 0 {
        return Ok(());
    }
    if failed as f64 / total as f64 > threshold {
        return Err(CliError::PartialFailure {
            failed,
            total,
            threshold,
        });
    }
    Ok(())
}
