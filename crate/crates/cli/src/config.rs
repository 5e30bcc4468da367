//! Config file handling and run reproducibility stamps.
//!
//! Every knob resolves through the same precedence: a command-line flag
//! beats the config file, and the config file beats the built-in default.
//! Commands serialize their fully resolved settings to canonical JSON and
//! hash them together with the tool version, command name, and seed; the
//! resulting stamp goes to stderr on every run and into the leading meta
//! record of LDJSON result files, so any output can be traced back to the
//! exact configuration that produced it.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Default master seed when neither flag nor file provides one.
pub const DEFAULT_SEED: u64 = 42;

/// Backend table in the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendFileConfig {
    /// `synthetic` or `http`.
    pub kind: String,
    pub base_url: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token; the
    /// token itself never appears in flags or files.
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolFileConfig {
    pub regime: Option<String>,
    pub size: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankFileConfig {
    pub k: Option<usize>,
    pub floor: Option<f64>,
    pub probe_template: Option<String>,
    pub concurrency: Option<usize>,
    pub top_logprobs: Option<usize>,
    pub failure_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFileConfig {
    pub answer_template: Option<String>,
    pub max_answer_tokens: Option<usize>,
}

/// Root of the TOML config file. Every table is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub pool: PoolFileConfig,
    #[serde(default)]
    pub rank: RankFileConfig,
    #[serde(default)]
    pub run: RunFileConfig,
    pub surrogate_backend: Option<BackendFileConfig>,
    pub main_backend: Option<BackendFileConfig>,
}

/// Loads the config file when a path was given, collecting problems
/// instead of failing fast.
pub fn load_file_config(path: Option<&Path>, problems: &mut Vec<String>) -> FileConfig {
    let Some(path) = path else {
        return FileConfig::default();
    };
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) => {
            problems.push(format!("config {}: {e}", path.display()));
            return FileConfig::default();
        }
    };
    match toml::from_str(&text) {
        Ok(config) => config,
        Err(e) => {
            problems.push(format!("config {}: {e}", path.display()));
            FileConfig::default()
        }
    }
}

/// Stamp identifying one fully resolved invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunStamp {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

impl RunStamp {
    /// Hashes the resolved settings with the version, command, and seed.
    pub fn new<T: Serialize>(command: &'static str, seed: u64, resolved: &T) -> Self {
        let canonical =
            serde_json::to_string(resolved).expect("resolved settings serialize to JSON");
        let mut hasher = Sha256::new();
        hasher.update(env!("CARGO_PKG_VERSION").as_bytes());
        hasher.update([0xff]);
        hasher.update(command.as_bytes());
        hasher.update([0xff]);
        hasher.update(seed.to_le_bytes());
        hasher.update([0xff]);
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        let mut config_hash = String::with_capacity(16);
        for byte in &digest[..8] {
            let _ = write!(config_hash, "{byte:02x}");
        }
        RunStamp {
            tool: "evisel",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config_hash,
        }
    }

    /// One-line reproducibility header for stderr.
    pub fn header(&self) -> String {
        format!(
            "{} v{} command={} seed={} config={}",
            self.tool, self.version, self.command, self.seed, self.config_hash
        )
    }

    /// Leading meta record for LDJSON result files.
    pub fn meta_record(&self) -> serde_json::Value {
        serde_json::json!({
            "record_type": "meta",
            "tool": self.tool,
            "version": self.version,
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
        })
    }
}

/// Reads LDJSON records of one deserializable shape, skipping the meta
/// record and blank lines. Problems carry the line number.
pub fn read_result_records<T: DeserializeOwned>(
    path: &Path,
    problems: &mut Vec<String>,
) -> Vec<T> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) => {
            problems.push(format!("{}: {e}", path.display()));
            return Vec::new();
        }
    };
    let mut records = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(line) {
            Ok(value) => value,
            Err(e) => {
                problems.push(format!("{} line {}: {e}", path.display(), index + 1));
                continue;
            }
        };
        if value.get("record_type").and_then(|v| v.as_str()) == Some("meta") {
            continue;
        }
        match serde_json::from_value(value) {
            Ok(record) => records.push(record),
            Err(e) => problems.push(format!("{} line {}: {e}", path.display(), index + 1)),
        }
    }
    records
}
