//! Evaluation metrics and report aggregation.
//!
//! Covers answer matching, ground-truth hit rates for selections,
//! surrogate-versus-main disagreement (the false-positive rate at a
//! fraction `q`), Kendall tau-b rank correlation, and plain-text, CSV, and
//! versioned JSON report rendering.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version stamp embedded in JSON reports.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Metric and report failures.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("rankings differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("fraction q must lie in (0, 1], got {0}")]
    QOutOfRange(f64),
    #[error("duplicate candidate id `{0}`")]
    DuplicateId(String),
    #[error("no data to aggregate")]
    EmptyInput,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Splits a leading option marker such as `(b)`, `b)`, `b.`, or `b:` off a
/// normalized answer, returning the letter and the remainder.
fn split_option_marker(text: &str) -> Option<(char, &str)> {
    let (first, rest) = match text.split_once(' ') {
        Some((first, rest)) => (first, rest),
        None => (text, ""),
    };
    let bytes = first.as_bytes();
    let letter = match bytes {
        [b'(', l, b')'] => *l,
        [l, b')' | b'.' | b':'] => *l,
        _ => return None,
    };
    letter
        .is_ascii_lowercase()
        .then(|| (letter as char, rest))
}

/// Case-insensitive, whitespace-normalized answer equality.
///
/// A leading option marker is interchangeable with the text it labels:
/// `(B) cello` matches `cello`, `b`, and `B.`.
pub fn exact_match(prediction: &str, reference: &str) -> bool {
    let p = normalize(prediction);
    let r = normalize(reference);
    if p == r {
        return true;
    }
    let p_marker = split_option_marker(&p);
    let r_marker = split_option_marker(&r);
    if let Some((letter, rest)) = p_marker {
        if !rest.is_empty() && rest == r {
            return true;
        }
        if r.len() == 1 && r.chars().next() == Some(letter) {
            return true;
        }
    }
    if let Some((letter, rest)) = r_marker {
        if !rest.is_empty() && p == rest {
            return true;
        }
        if p.len() == 1 && p.chars().next() == Some(letter) {
            return true;
        }
    }
    if let (Some((pl, _)), Some((rl, _))) = (p_marker, r_marker) {
        if pl == rl {
            return true;
        }
    }
    false
}

/// Fraction of the top `k` selected ids that are relevant, with the
/// denominator capped at the selection length. Empty selections score 0.
pub fn hit_fraction<A: AsRef<str>, B: AsRef<str>>(selected: &[A], relevant: &[B], k: usize) -> f64 {
    let relevant: BTreeSet<&str> = relevant.iter().map(AsRef::as_ref).collect();
    let top: Vec<&str> = selected.iter().take(k).map(AsRef::as_ref).collect();
    let denominator = k.min(selected.len());
    if denominator == 0 {
        return 0.0;
    }
    let hits = top.iter().filter(|id| relevant.contains(**id)).count();
    hits as f64 / denominator as f64
}

/// Mean of per-query hit fractions, as a percentage.
pub fn gt_hit_rate(per_query: &[f64]) -> Result<f64, EvalError> {
    if per_query.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(per_query.iter().sum::<f64>() / per_query.len() as f64 * 100.0)
}

/// One candidate scored by both the surrogate and the main model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedScore {
    pub candidate_id: String,
    pub surrogate: f64,
    pub main: f64,
}

/// Fraction of the surrogate's top `ceil(q * n)` candidates that the main
/// model places in its bottom `ceil(q * n)`: candidates the surrogate
/// endorses against the main model's judgment.
pub fn false_positive_rate(scores: &[PairedScore], q: f64) -> Result<f64, EvalError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(EvalError::QOutOfRange(q));
    }
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut seen = BTreeSet::new();
    for score in scores {
        if !seen.insert(score.candidate_id.as_str()) {
            return Err(EvalError::DuplicateId(score.candidate_id.clone()));
        }
    }
    let m = (q * scores.len() as f64).ceil() as usize;
    let mut by_surrogate: Vec<&PairedScore> = scores.iter().collect();
    by_surrogate.sort_by(|a, b| {
        b.surrogate
            .total_cmp(&a.surrogate)
            .then_with(|| a.candidate_id.cmp(&b.candidate_id))
    });
    let mut by_main: Vec<&PairedScore> = scores.iter().collect();
    by_main.sort_by(|a, b| {
        a.main
            .total_cmp(&b.main)
            .then_with(|| a.candidate_id.cmp(&b.candidate_id))
    });
    let top: BTreeSet<&str> = by_surrogate[..m].iter().map(|s| s.candidate_id.as_str()).collect();
    let overlap = by_main[..m]
        .iter()
        .filter(|s| top.contains(s.candidate_id.as_str()))
        .count();
    Ok(overlap as f64 / m as f64)
}

/// Mean per-query false-positive rate across score groups.
pub fn mean_false_positive_rate(groups: &[Vec<PairedScore>], q: f64) -> Result<f64, EvalError> {
    if groups.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut total = 0.0;
    for group in groups {
        total += false_positive_rate(group, q)?;
    }
    Ok(total / groups.len() as f64)
}

/// Kendall tau-b rank correlation with tie correction, by direct pair
/// enumeration. A ranking that is constant on either side has an undefined
/// correlation and reports 0.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(EvalError::TooFewItems {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len();
    let mut concordant = 0u64;
    let mut discordant = 0u64;
    let mut ties_x = 0u64;
    let mut ties_y = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                ties_x += 1;
            }
            if dy == 0.0 {
                ties_y += 1;
            }
            if dx == 0.0 || dy == 0.0 {
                continue;
            }
            if (dx > 0.0) == (dy > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    let denominator = ((n0 - ties_x as f64) * (n0 - ties_y as f64)).sqrt();
    if denominator == 0.0 {
        return Ok(0.0);
    }
    Ok((concordant as f64 - discordant as f64) / denominator)
}

/// One evaluated query, tagged with the group it aggregates under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    /// Aggregation key, for example `benchmark_default/k10/n2`.
    pub group: String,
    pub correct: bool,
    /// Hit fraction of the query's selection, when one was made.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_fraction: Option<f64>,
}

/// Aggregate over one group of queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub queries: usize,
    pub accuracy_pct: f64,
    /// Mean hit fraction as a percentage, over queries that reported one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_hit_rate_pct: Option<f64>,
}

/// Aggregated evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub total_queries: usize,
    pub groups: Vec<GroupSummary>,
}

/// Aggregates per-query results into per-group summaries.
///
/// Groups appear in first-appearance order and every query lands in
/// exactly one group, so group counts sum to `total_queries`.
pub fn aggregate_report(rows: &[QueryResult]) -> Result<Report, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut order: Vec<&str> = Vec::new();
    for row in rows {
        if !order.contains(&row.group.as_str()) {
            order.push(&row.group);
        }
    }
    let mut groups = Vec::with_capacity(order.len());
    for group in order {
        let members: Vec<&QueryResult> = rows.iter().filter(|r| r.group == group).collect();
        let correct = members.iter().filter(|r| r.correct).count();
        let fractions: Vec<f64> = members.iter().filter_map(|r| r.hit_fraction).collect();
        let gt_hit_rate_pct = if fractions.is_empty() {
            None
        } else {
            Some(fractions.iter().sum::<f64>() / fractions.len() as f64 * 100.0)
        };
        groups.push(GroupSummary {
            group: group.to_string(),
            queries: members.len(),
            accuracy_pct: correct as f64 / members.len() as f64 * 100.0,
            gt_hit_rate_pct,
        });
    }
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        total_queries: rows.len(),
        groups,
    })
}

fn format_optional_pct(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.2}"),
        None => "n/a".to_string(),
    }
}

/// Renders a report as an aligned plain-text table.
pub fn render_text_table(report: &Report) -> String {
    let header = ["group", "queries", "accuracy %", "gt hit %"];
    let mut rows: Vec<[String; 4]> = vec![header.map(str::to_string)];
    for group in &report.groups {
        rows.push([
            group.group.clone(),
            group.queries.to_string(),
            format!("{:.2}", group.accuracy_pct),
            format_optional_pct(group.gt_hit_rate_pct),
        ]);
    }
    let mut widths = [0usize; 4];
    for row in &rows {
        for (width, cell) in widths.iter_mut().zip(row) {
            *width = (*width).max(cell.len());
        }
    }
    let mut out = String::new();
    for (index, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(cell, width)| format!("{cell:<width$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if index == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "{}", rule.join("  "));
        }
    }
    let _ = writeln!(out, "total queries: {}", report.total_queries);
    out
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Renders a report as CSV with a header row.
pub fn render_csv(report: &Report) -> String {
    let mut out = String::from("group,queries,accuracy_pct,gt_hit_rate_pct\n");
    for group in &report.groups {
        let hit = group
            .gt_hit_rate_pct
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{:.6},{}",
            csv_escape(&group.group),
            group.queries,
            group.accuracy_pct,
            hit
        );
    }
    out
}

/// Renders a report as versioned JSON.
pub fn render_json(report: &Report) -> Result<String, EvalError> {
    Ok(serde_json::to_string_pretty(report)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_match_normalizes_case_and_whitespace() {
        assert!(exact_match("  Grand   Piano ", "grand piano"));
        assert!(exact_match("cello", "Cello"));
        assert!(!exact_match("cello", "violin"));
        assert!(!exact_match("", "violin"));
        assert!(exact_match("", ""));
    }

    #[test]
    fn exact_match_handles_option_markers() {
        assert!(exact_match("(B) cello", "cello"));
        assert!(exact_match("b) cello", "cello"));
        assert!(exact_match("B.", "b"));
        assert!(exact_match("(b)", "B"));
        assert!(exact_match("cello", "(B) cello"));
        assert!(exact_match("b", "(B) cello"));
        assert!(exact_match("(b) cello", "(B) violin"));
        assert!(!exact_match("(a) cello", "(B) violin"));
        assert!(!exact_match("a cat", "cat"));
    }

    #[test]
    fn hit_fraction_caps_the_denominator_at_the_selection_length() {
        let selected = vec!["a", "b", "c"];
        let relevant = vec!["b", "c", "d"];
        assert_eq!(hit_fraction(&selected, &relevant, 3), 2.0 / 3.0);
        assert_eq!(hit_fraction(&selected, &relevant, 2), 0.5);
        // k exceeds the selection: denominator falls back to its length.
        assert_eq!(hit_fraction(&selected, &relevant, 5), 2.0 / 3.0);
        let empty: Vec<&str> = Vec::new();
        assert_eq!(hit_fraction(&empty, &relevant, 3), 0.0);
        assert_eq!(hit_fraction(&selected, &empty, 3), 0.0);
    }

    #[test]
    fn gt_hit_rate_is_the_mean_in_percent() {
        assert_eq!(gt_hit_rate(&[1.0, 0.5, 0.0]).unwrap(), 50.0);
        assert!(matches!(gt_hit_rate(&[]), Err(EvalError::EmptyInput)));
    }

    fn paired(ids: &[&str], surrogate: &[f64], main: &[f64]) -> Vec<PairedScore> {
        ids.iter()
            .zip(surrogate)
            .zip(main)
            .map(|((id, &s), &m)| PairedScore {
                candidate_id: id.to_string(),
                surrogate: s,
                main: m,
            })
            .collect()
    }

    #[test]
    fn false_positive_rate_matches_hand_computed_cases() {
        let ids = ["a", "b", "c", "d", "e"];
        let inverted = paired(&ids, &[5.0, 4.0, 3.0, 2.0, 1.0], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(false_positive_rate(&inverted, 0.4).unwrap(), 1.0);
        let aligned = paired(&ids, &[5.0, 4.0, 3.0, 2.0, 1.0], &[5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(false_positive_rate(&aligned, 0.4).unwrap(), 0.0);
        let partial = paired(&ids, &[5.0, 4.0, 3.0, 2.0, 1.0], &[5.0, 1.0, 4.0, 3.0, 2.0]);
        assert_eq!(false_positive_rate(&partial, 0.4).unwrap(), 0.5);
    }

    #[test]
    fn false_positive_rate_validates_inputs() {
        let scores = paired(&["a", "b"], &[1.0, 2.0], &[1.0, 2.0]);
        assert!(matches!(
            false_positive_rate(&scores, 0.0),
            Err(EvalError::QOutOfRange(_))
        ));
        assert!(matches!(
            false_positive_rate(&scores, 1.5),
            Err(EvalError::QOutOfRange(_))
        ));
        assert!(matches!(
            false_positive_rate(&[], 0.5),
            Err(EvalError::EmptyInput)
        ));
        let dup = paired(&["a", "a"], &[1.0, 2.0], &[1.0, 2.0]);
        assert!(matches!(
            false_positive_rate(&dup, 0.5),
            Err(EvalError::DuplicateId(_))
        ));
        // q = 1 compares the full sets, which always coincide.
        assert_eq!(false_positive_rate(&scores, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn mean_false_positive_rate_averages_per_group() {
        let ids = ["a", "b", "c", "d", "e"];
        let groups = vec![
            paired(&ids, &[5.0, 4.0, 3.0, 2.0, 1.0], &[1.0, 2.0, 3.0, 4.0, 5.0]),
            paired(&ids, &[5.0, 4.0, 3.0, 2.0, 1.0], &[5.0, 4.0, 3.0, 2.0, 1.0]),
        ];
        assert_eq!(mean_false_positive_rate(&groups, 0.4).unwrap(), 0.5);
        assert!(matches!(
            mean_false_positive_rate(&[], 0.4),
            Err(EvalError::EmptyInput)
        ));
    }

    #[test]
    fn kendall_tau_matches_hand_computed_cases() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y_rev = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau_b(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau_b(&x, &y_rev).unwrap(), -1.0);
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 1.0, 4.0, 3.0];
        assert!((kendall_tau_b(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // Tie correction: one tied pair on each side.
        let tx = [1.0, 1.0, 2.0, 3.0];
        let ty = [1.0, 2.0, 2.0, 3.0];
        assert!((kendall_tau_b(&tx, &ty).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn kendall_tau_handles_degenerate_inputs() {
        assert_eq!(kendall_tau_b(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(
            kendall_tau_b(&[1.0], &[1.0]),
            Err(EvalError::TooFewItems { .. })
        ));
        assert!(matches!(
            kendall_tau_b(&[1.0, 2.0], &[1.0]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    fn row(query_id: &str, group: &str, correct: bool, hit: Option<f64>) -> QueryResult {
        QueryResult {
            query_id: query_id.to_string(),
            group: group.to_string(),
            correct,
            hit_fraction: hit,
        }
    }

    #[test]
    fn aggregation_preserves_group_order_and_partitions_queries() {
        let rows = vec![
            row("q1", "beta", true, Some(1.0)),
            row("q2", "alpha", false, Some(0.5)),
            row("q3", "beta", false, None),
            row("q4", "alpha", true, Some(0.0)),
            row("q5", "beta", true, Some(0.5)),
        ];
        let report = aggregate_report(&rows).unwrap();
        let names: Vec<&str> = report.groups.iter().map(|g| g.group.as_str()).collect();
        assert_eq!(names, vec!["beta", "alpha"]);
        assert_eq!(report.total_queries, 5);
        let counted: usize = report.groups.iter().map(|g| g.queries).sum();
        assert_eq!(counted, report.total_queries);
        let beta = &report.groups[0];
        assert_eq!(beta.queries, 3);
        assert!((beta.accuracy_pct - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(beta.gt_hit_rate_pct, Some(75.0));
        assert!(matches!(aggregate_report(&[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn groups_without_hit_fractions_report_none() {
        let rows = vec![row("q1", "g", true, None), row("q2", "g", false, None)];
        let report = aggregate_report(&rows).unwrap();
        assert_eq!(report.groups[0].gt_hit_rate_pct, None);
    }

    #[test]
    fn text_table_aligns_columns_and_totals() {
        let rows = vec![
            row("q1", "benchmark_default/k10", true, Some(1.0)),
            row("q2", "pure", false, None),
        ];
        let rendered = render_text_table(&aggregate_report(&rows).unwrap());
        let lines: Vec<&str> = rendered.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("group"));
        assert!(lines[1].starts_with("-----"));
        assert!(lines[2].contains("100.00"));
        assert!(lines[3].contains("n/a"));
        assert_eq!(lines[4], "total queries: 2");
    }

    #[test]
    fn csv_quotes_fields_that_need_it() {
        let rows = vec![row("q1", "a,b", true, Some(0.25))];
        let csv = render_csv(&aggregate_report(&rows).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "group,queries,accuracy_pct,gt_hit_rate_pct");
        assert_eq!(lines[1], "\"a,b\",1,100.000000,25.000000");
    }

    #[test]
    fn json_reports_carry_a_schema_version() {
        let rows = vec![row("q1", "g", true, None)];
        let json = render_json(&aggregate_report(&rows).unwrap()).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["schema_version"], 1);
        assert_eq!(value["total_queries"], 1);
        let parsed: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.groups.len(), 1);
    }

    proptest! {
        #[test]
        fn prop_tau_stays_in_range_and_is_symmetric_under_negation(
            pairs in proptest::collection::vec((-100i32..100, -100i32..100), 2..40),
        ) {
            let x: Vec<f64> = pairs.iter().map(|(a, _)| f64::from(*a)).collect();
            let y: Vec<f64> = pairs.iter().map(|(_, b)| f64::from(*b)).collect();
            let tau = kendall_tau_b(&x, &y).unwrap();
            prop_assert!((-1.0..=1.0).contains(&tau));
            let neg_y: Vec<f64> = y.iter().map(|v| -v).collect();
            let neg_tau = kendall_tau_b(&x, &neg_y).unwrap();
            prop_assert!((tau + neg_tau).abs() < 1e-12);
        }

        #[test]
        fn prop_tau_of_a_ranking_with_itself_is_one(
            mut values in proptest::collection::vec(-100i32..100, 2..40),
        ) {
            values.sort_unstable();
            values.dedup();
            prop_assume!(values.len() >= 2);
            let x: Vec<f64> = values.iter().map(|v| f64::from(*v)).collect();
            prop_assert_eq!(kendall_tau_b(&x, &x).unwrap(), 1.0);
        }

        #[test]
        fn prop_false_positive_rate_is_a_fraction(
            n in 2usize..30,
            q in 0.05f64..1.0,
            seed in any::<u64>(),
        ) {
            let mut rng = crate::seeded::rng_from_seed(seed);
            let scores: Vec<PairedScore> = (0..n)
                .map(|i| PairedScore {
                    candidate_id: format!("c{i:02}"),
                    surrogate: crate::seeded::uniform_f64(&mut rng),
                    main: crate::seeded::uniform_f64(&mut rng),
                })
                .collect();
            let rate = false_positive_rate(&scores, q).unwrap();
            prop_assert!((0.0..=1.0).contains(&rate));
        }

        #[test]
        fn prop_hit_fraction_is_a_fraction(
            n_selected in 0usize..10,
            n_relevant in 0usize..10,
            k in 1usize..12,
        ) {
            let selected: Vec<String> = (0..n_selected).map(|i| format!("s{i}")).collect();
            let relevant: Vec<String> = (0..n_relevant).map(|i| format!("s{}", i * 2)).collect();
            let fraction = hit_fraction(&selected, &relevant, k);
            prop_assert!((0.0..=1.0).contains(&fraction));
        }
    }
}
