//! Candidate-pool construction and pool files.
//!
//! A pool is the fixed candidate set a selection method ranks for one
//! query. Pools are built from a query's ground-truth list (benchmark
//! order) and its retrieval list (descending retrieval score) under one of
//! four regimes:
//!
//! * `benchmark_default`: up to five leading ground-truth candidates, then
//!   retrieved candidates in order until the pool is full;
//! * `pure_retrieve`: the retrieval list as-is;
//! * `gt_hard_neg`: ground truth plus only non-relevant retrieved
//!   candidates, the hard negatives;
//! * `gt_hard_neg_stochastic`: ground truth, five fixed hard negatives,
//!   then a seeded sample of the remaining retrieved candidates.
//!
//! Everywhere, candidates deduplicate by payload (first occurrence wins)
//! and two candidates sharing an id with different payloads are an error.
//! Pools that cannot reach the requested size are flagged, not rejected.
//!
//! Pool files are LDJSON, one pool per line; schema errors report the
//! offending line number.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeded::{rng_from_seed, sample_indices, shuffle, stable_hash};

/// Ground-truth candidates admitted before retrieval fill.
pub const GT_CAP: usize = 5;
/// Fixed hard negatives admitted by the stochastic regime before sampling.
pub const STOCHASTIC_FIXED_NEGATIVES: usize = 5;

/// Pool construction and file failures.
#[derive(Debug, Error)]
pub enum PoolError {
    #[error("pool size must be at least 1")]
    ZeroSize,
    #[error("query `{query_id}`: candidate id `{candidate_id}` appears with two different payloads")]
    DuplicateCandidateId {
        query_id: String,
        candidate_id: String,
    },
    #[error("unknown pool regime `{0}`")]
    UnknownRegime(String),
    #[error("{path} line {line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pool construction regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolRegime {
    BenchmarkDefault,
    PureRetrieve,
    GtHardNeg,
    GtHardNegStochastic,
}

impl PoolRegime {
    pub const ALL: [PoolRegime; 4] = [
        PoolRegime::BenchmarkDefault,
        PoolRegime::PureRetrieve,
        PoolRegime::GtHardNeg,
        PoolRegime::GtHardNegStochastic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PoolRegime::BenchmarkDefault => "benchmark_default",
            PoolRegime::PureRetrieve => "pure_retrieve",
            PoolRegime::GtHardNeg => "gt_hard_neg",
            PoolRegime::GtHardNegStochastic => "gt_hard_neg_stochastic",
        }
    }
}

impl fmt::Display for PoolRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoolRegime {
    type Err = PoolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PoolRegime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| PoolError::UnknownRegime(s.to_string()))
    }
}

/// One candidate as stored in query files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: String,
    /// Opaque content reference: a URL, a file path, or inline text.
    pub payload: String,
    /// Ground-truth relevance of the candidate to its query.
    #[serde(default)]
    pub relevant: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_score: Option<f64>,
}

/// One query with its ground-truth and retrieval lists.
///
/// `ground_truth` keeps benchmark order; `retrieved` keeps descending
/// retrieval-score order. Ground-truth entries are relevant by definition,
/// whatever their `relevant` field says.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    /// Payload of the query's own attachment, for example the input image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment: Option<String>,
    #[serde(default)]
    pub ground_truth: Vec<CandidateRecord>,
    #[serde(default)]
    pub retrieved: Vec<CandidateRecord>,
}

/// Where a pool candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrigin {
    GroundTruth,
    Retrieved,
    HardNegative,
    Sampled,
}

/// One candidate inside a built pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolCandidate {
    pub id: String,
    pub payload: String,
    pub relevant: bool,
    pub origin: CandidateOrigin,
}

/// A built pool for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub query_id: String,
    pub regime: PoolRegime,
    pub size_target: usize,
    /// True when the inputs could not fill the pool to `size_target`.
    pub under_filled: bool,
    pub candidates: Vec<PoolCandidate>,
}

impl Pool {
    /// Ids of the relevant candidates, in pool order.
    pub fn relevant_ids(&self) -> Vec<&str> {
        self.candidates
            .iter()
            .filter(|c| c.relevant)
            .map(|c| c.id.as_str())
            .collect()
    }
}

struct PoolAccumulator<'a> {
    query_id: &'a str,
    size: usize,
    seen_payloads: BTreeSet<&'a str>,
    seen_ids: BTreeSet<&'a str>,
    candidates: Vec<PoolCandidate>,
}

impl<'a> PoolAccumulator<'a> {
    fn new(query_id: &'a str, size: usize) -> Self {
        PoolAccumulator {
            query_id,
            size,
            seen_payloads: BTreeSet::new(),
            seen_ids: BTreeSet::new(),
            candidates: Vec::with_capacity(size),
        }
    }

    fn full(&self) -> bool {
        self.candidates.len() >= self.size
    }

    /// Admits a candidate unless its payload was already admitted. Returns
    /// an error for an id reused with a different payload.
    fn push(
        &mut self,
        record: &'a CandidateRecord,
        relevant: bool,
        origin: CandidateOrigin,
    ) -> Result<(), PoolError> {
        if self.seen_payloads.contains(record.payload.as_str()) {
            return Ok(());
        }
        if !self.seen_ids.insert(record.id.as_str()) {
            return Err(PoolError::DuplicateCandidateId {
                query_id: self.query_id.to_string(),
                candidate_id: record.id.clone(),
            });
        }
        self.seen_payloads.insert(record.payload.as_str());
        self.candidates.push(PoolCandidate {
            id: record.id.clone(),
            payload: record.payload.clone(),
            relevant,
            origin,
        });
        Ok(())
    }
}

fn stochastic_fill_seed(seed: u64, query_id: &str) -> u64 {
    stable_hash(&[
        &seed.to_le_bytes(),
        query_id.as_bytes(),
        b"stochastic_fill",
    ])
}

/// Builds the candidate pool for one query.
///
/// `seed` is consumed only by the stochastic regime; pools for a given
/// `(query, regime, size, seed)` are identical across runs.
pub fn build_pool(
    query: &QueryRecord,
    regime: PoolRegime,
    size: usize,
    seed: u64,
) -> Result<Pool, PoolError> {
    if size == 0 {
        return Err(PoolError::ZeroSize);
    }
    let mut acc = PoolAccumulator::new(&query.query_id, size);
    match regime {
        PoolRegime::BenchmarkDefault => {
            for record in query.ground_truth.iter().take(GT_CAP) {
                if acc.full() {
                    break;
                }
                acc.push(record, true, CandidateOrigin::GroundTruth)?;
            }
            for record in &query.retrieved {
                if acc.full() {
                    break;
                }
                acc.push(record, record.relevant, CandidateOrigin::Retrieved)?;
            }
        }
        PoolRegime::PureRetrieve => {
            for record in &query.retrieved {
                if acc.full() {
                    break;
                }
                acc.push(record, record.relevant, CandidateOrigin::Retrieved)?;
            }
        }
        PoolRegime::GtHardNeg => {
            for record in query.ground_truth.iter().take(GT_CAP) {
                if acc.full() {
                    break;
                }
                acc.push(record, true, CandidateOrigin::GroundTruth)?;
            }
            for record in query.retrieved.iter().filter(|r| !r.relevant) {
                if acc.full() {
                    break;
                }
                acc.push(record, false, CandidateOrigin::HardNegative)?;
            }
        }
        PoolRegime::GtHardNegStochastic => {
            for record in query.ground_truth.iter().take(GT_CAP) {
                if acc.full() {
                    break;
                }
                acc.push(record, true, CandidateOrigin::GroundTruth)?;
            }
            let mut negatives = 0;
            for record in query.retrieved.iter().filter(|r| !r.relevant) {
                if acc.full() || negatives >= STOCHASTIC_FIXED_NEGATIVES {
                    break;
                }
                let before = acc.candidates.len();
                acc.push(record, false, CandidateOrigin::HardNegative)?;
                if acc.candidates.len() > before {
                    negatives += 1;
                }
            }
            // Remaining retrieved candidates, sampled without replacement
            // under the per-query stream.
            let remaining: Vec<&CandidateRecord> = query
                .retrieved
                .iter()
                .filter(|r| !acc.seen_payloads.contains(r.payload.as_str()))
                .collect();
            let mut rng = rng_from_seed(stochastic_fill_seed(seed, &query.query_id));
            let order = sample_indices(&mut rng, remaining.len(), remaining.len());
            for index in order {
                if acc.full() {
                    break;
                }
                let record = remaining[index];
                acc.push(record, record.relevant, CandidateOrigin::Sampled)?;
            }
        }
    }
    let under_filled = acc.candidates.len() < size;
    Ok(Pool {
        query_id: query.query_id.clone(),
        regime,
        size_target: size,
        under_filled,
        candidates: acc.candidates,
    })
}

/// Ground-truth oracle selection: a seeded shuffle of the query's
/// ground-truth candidates, truncated to `k`.
///
/// The shuffle is drawn once from a per-query stream keyed by
/// `(global seed, query id)`, so selections nest: the ids chosen at `k` are
/// a prefix of the ids chosen at `k + 1`.
pub fn gt_oracle_select(query: &QueryRecord, k: usize, seed: u64) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut ids: Vec<&str> = Vec::new();
    for record in &query.ground_truth {
        if seen.insert(record.payload.as_str()) {
            ids.push(&record.id);
        }
    }
    let stream = stable_hash(&[
        &seed.to_le_bytes(),
        query.query_id.as_bytes(),
        b"gt_oracle",
    ]);
    let mut rng = rng_from_seed(stream);
    shuffle(&mut rng, &mut ids);
    ids.truncate(k.min(ids.len()));
    ids.into_iter().map(str::to_string).collect()
}

fn read_ldjson<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PoolError> {
    let file = File::open(path)?;
    let mut records = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| PoolError::Schema {
            path: path.display().to_string(),
            line: index + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn write_ldjson<T: Serialize>(path: &Path, records: &[T]) -> Result<(), PoolError> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut writer, record).map_err(|e| PoolError::Schema {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads query records from an LDJSON file, rejecting duplicate query ids.
pub fn load_queries(path: &Path) -> Result<Vec<QueryRecord>, PoolError> {
    let queries: Vec<QueryRecord> = read_ldjson(path)?;
    let mut seen = BTreeSet::new();
    for (index, query) in queries.iter().enumerate() {
        if !seen.insert(query.query_id.as_str()) {
            return Err(PoolError::Schema {
                path: path.display().to_string(),
                line: index + 1,
                message: format!("duplicate query_id `{}`", query.query_id),
            });
        }
    }
    Ok(queries)
}

/// Reads pools from an LDJSON file.
pub fn load_pools(path: &Path) -> Result<Vec<Pool>, PoolError> {
    read_ldjson(path)
}

/// Writes pools as LDJSON, one pool per line.
pub fn save_pools(path: &Path, pools: &[Pool]) -> Result<(), PoolError> {
    write_ldjson(path, pools)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, payload: &str, relevant: bool) -> CandidateRecord {
        CandidateRecord {
            id: id.to_string(),
            payload: payload.to_string(),
            relevant,
            retrieval_score: None,
        }
    }

    fn query(n_gt: usize, n_retrieved: usize, relevant_retrieved: &[usize]) -> QueryRecord {
        QueryRecord {
            query_id: "q1".into(),
            question: "What color is the band?".into(),
            choices: None,
            answer: Some("black".into()),
            attachment: Some("img:q1".into()),
            ground_truth: (0..n_gt)
                .map(|i| record(&format!("gt{i}"), &format!("img:gt{i}"), true))
                .collect(),
            retrieved: (0..n_retrieved)
                .map(|i| {
                    record(
                        &format!("r{i}"),
                        &format!("img:r{i}"),
                        relevant_retrieved.contains(&i),
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn benchmark_default_caps_ground_truth_then_fills_with_retrieved() {
        let q = query(7, 10, &[]);
        let pool = build_pool(&q, PoolRegime::BenchmarkDefault, 10, 0).unwrap();
        assert_eq!(pool.candidates.len(), 10);
        assert!(!pool.under_filled);
        let gt: Vec<&str> = pool.candidates[..5].iter().map(|c| c.id.as_str()).collect();
        assert_eq!(gt, vec!["gt0", "gt1", "gt2", "gt3", "gt4"]);
        assert!(pool.candidates[..5]
            .iter()
            .all(|c| c.origin == CandidateOrigin::GroundTruth && c.relevant));
        let fill: Vec<&str> = pool.candidates[5..].iter().map(|c| c.id.as_str()).collect();
        assert_eq!(fill, vec!["r0", "r1", "r2", "r3", "r4"]);
        assert!(pool.candidates[5..]
            .iter()
            .all(|c| c.origin == CandidateOrigin::Retrieved));
    }

    #[test]
    fn payload_duplicates_are_skipped_silently() {
        let mut q = query(2, 3, &[]);
        // First retrieved candidate shares its payload with a ground truth.
        q.retrieved[0].payload = "img:gt0".into();
        let pool = build_pool(&q, PoolRegime::BenchmarkDefault, 5, 0).unwrap();
        let ids: Vec<&str> = pool.candidates.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, vec!["gt0", "gt1", "r1", "r2"]);
        assert!(pool.under_filled);
    }

    #[test]
    fn an_id_with_two_payloads_is_rejected() {
        let mut q = query(1, 2, &[]);
        q.retrieved[1].id = "r0".into();
        let err = build_pool(&q, PoolRegime::BenchmarkDefault, 5, 0).unwrap_err();
        assert!(matches!(
            err,
            PoolError::DuplicateCandidateId { ref candidate_id, .. } if candidate_id == "r0"
        ));
    }

    #[test]
    fn pure_retrieve_keeps_retrieval_order_and_relevance() {
        let q = query(4, 6, &[1, 3]);
        let pool = build_pool(&q, PoolRegime::PureRetrieve, 5, 0).unwrap();
        let ids: Vec<&str> = pool.candidates.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, vec!["r0", "r1", "r2", "r3", "r4"]);
        assert_eq!(pool.relevant_ids(), vec!["r1", "r3"]);
        assert!(pool
            .candidates
            .iter()
            .all(|c| c.origin == CandidateOrigin::Retrieved));
    }

    #[test]
    fn hard_negative_regime_admits_only_irrelevant_retrieved() {
        let q = query(3, 10, &[0, 1, 2]);
        let pool = build_pool(&q, PoolRegime::GtHardNeg, 8, 0).unwrap();
        assert_eq!(pool.candidates.len(), 8);
        assert_eq!(pool.relevant_ids(), vec!["gt0", "gt1", "gt2"]);
        let negatives: Vec<&str> = pool.candidates[3..].iter().map(|c| c.id.as_str()).collect();
        assert_eq!(negatives, vec!["r3", "r4", "r5", "r6", "r7"]);
        assert!(pool.candidates[3..]
            .iter()
            .all(|c| c.origin == CandidateOrigin::HardNegative));
    }

    #[test]
    fn stochastic_regime_fixes_gt_and_negatives_then_samples() {
        let q = query(6, 20, &[0, 1]);
        let pool_a = build_pool(&q, PoolRegime::GtHardNegStochastic, 15, 7).unwrap();
        let pool_b = build_pool(&q, PoolRegime::GtHardNegStochastic, 15, 7).unwrap();
        assert_eq!(pool_a, pool_b);
        assert_eq!(pool_a.candidates.len(), 15);
        // Five ground truth, then five fixed negatives in retrieval order.
        assert!(pool_a.candidates[..5]
            .iter()
            .all(|c| c.origin == CandidateOrigin::GroundTruth));
        let negatives: Vec<&str> =
            pool_a.candidates[5..10].iter().map(|c| c.id.as_str()).collect();
        assert_eq!(negatives, vec!["r2", "r3", "r4", "r5", "r6"]);
        assert!(pool_a.candidates[10..]
            .iter()
            .all(|c| c.origin == CandidateOrigin::Sampled));

        let pool_c = build_pool(&q, PoolRegime::GtHardNegStochastic, 15, 8).unwrap();
        assert_eq!(pool_a.candidates[..10], pool_c.candidates[..10]);
        let tail_a: Vec<&str> = pool_a.candidates[10..].iter().map(|c| c.id.as_str()).collect();
        let tail_c: Vec<&str> = pool_c.candidates[10..].iter().map(|c| c.id.as_str()).collect();
        assert_ne!(tail_a, tail_c, "different seeds should sample different tails");
    }

    #[test]
    fn short_inputs_flag_the_pool_instead_of_failing() {
        let q = query(2, 3, &[]);
        let pool = build_pool(&q, PoolRegime::GtHardNeg, 10, 0).unwrap();
        assert!(pool.under_filled);
        assert_eq!(pool.candidates.len(), 5);
        assert!(matches!(
            build_pool(&q, PoolRegime::BenchmarkDefault, 0, 0),
            Err(PoolError::ZeroSize)
        ));
    }

    #[test]
    fn oracle_selection_is_deterministic_and_nested() {
        let q = query(6, 0, &[]);
        let full = gt_oracle_select(&q, 6, 42);
        assert_eq!(full.len(), 6);
        for k in 0..=6 {
            let selection = gt_oracle_select(&q, k, 42);
            assert_eq!(selection, full[..k.min(6)]);
        }
        assert_eq!(gt_oracle_select(&q, 99, 42), full);
        assert_ne!(gt_oracle_select(&q, 6, 43), full);
    }

    #[test]
    fn oracle_selection_differs_across_queries() {
        let mut q1 = query(6, 0, &[]);
        let mut q2 = query(6, 0, &[]);
        q1.query_id = "qa".into();
        q2.query_id = "qb".into();
        assert_ne!(gt_oracle_select(&q1, 6, 42), gt_oracle_select(&q2, 6, 42));
    }

    #[test]
    fn regime_names_round_trip() {
        for regime in PoolRegime::ALL {
            assert_eq!(regime.as_str().parse::<PoolRegime>().unwrap(), regime);
        }
        assert!(matches!(
            "nope".parse::<PoolRegime>(),
            Err(PoolError::UnknownRegime(_))
        ));
    }

    #[test]
    fn pool_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pools.ldjson");
        let q = query(6, 20, &[0, 1]);
        let pools: Vec<Pool> = PoolRegime::ALL
            .into_iter()
            .map(|regime| build_pool(&q, regime, 10, 3).unwrap())
            .collect();
        save_pools(&path, &pools).unwrap();
        assert_eq!(load_pools(&path).unwrap(), pools);
    }

    #[test]
    fn schema_errors_carry_the_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.ldjson");
        std::fs::write(
            &path,
            "{\"query_id\":\"q1\",\"question\":\"ok?\"}\n\nnot json\n",
        )
        .unwrap();
        let err = load_queries(&path).unwrap_err();
        match err {
            PoolError::Schema { line, .. } => assert_eq!(line, 3),
            other => panic!("expected schema error, got {other}"),
        }
    }

    #[test]
    fn duplicate_query_ids_are_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.ldjson");
        std::fs::write(
            &path,
            "{\"query_id\":\"q1\",\"question\":\"a\"}\n{\"query_id\":\"q1\",\"question\":\"b\"}\n",
        )
        .unwrap();
        let err = load_queries(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate query_id"));
    }

    proptest! {
        #[test]
        fn prop_pools_respect_size_and_uniqueness(
            n_gt in 0usize..8,
            n_retrieved in 0usize..30,
            size in 1usize..25,
            seed in any::<u64>(),
            regime_index in 0usize..4,
        ) {
            let q = query(n_gt, n_retrieved, &[0, 2, 4]);
            let regime = PoolRegime::ALL[regime_index];
            let pool = build_pool(&q, regime, size, seed).unwrap();
            prop_assert!(pool.candidates.len() <= size);
            prop_assert_eq!(pool.under_filled, pool.candidates.len() < size);
            let mut ids: Vec<&str> = pool.candidates.iter().map(|c| c.id.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), pool.candidates.len());
            let mut payloads: Vec<&str> =
                pool.candidates.iter().map(|c| c.payload.as_str()).collect();
            payloads.sort_unstable();
            payloads.dedup();
            prop_assert_eq!(payloads.len(), pool.candidates.len());
        }

        #[test]
        fn prop_stochastic_pools_are_seed_deterministic(
            seed in any::<u64>(),
            size in 1usize..20,
        ) {
            let q = query(6, 25, &[0, 1, 2]);
            let a = build_pool(&q, PoolRegime::GtHardNegStochastic, size, seed).unwrap();
            let b = build_pool(&q, PoolRegime::GtHardNegStochastic, size, seed).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn prop_oracle_selection_nests_across_k(
            n_gt in 1usize..10,
            seed in any::<u64>(),
        ) {
            let q = query(n_gt, 0, &[]);
            let full = gt_oracle_select(&q, n_gt, seed);
            for k in 1..=n_gt {
                let selection = gt_oracle_select(&q, k, seed);
                prop_assert_eq!(&selection[..], &full[..k]);
            }
        }
    }
}
