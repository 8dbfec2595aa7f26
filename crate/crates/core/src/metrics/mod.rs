//! Campaign aggregation, per-feature decile analysis, and pair selection.

mod levenshtein;
mod selection;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{DetStatus, RunRecord};
use crate::subject::{ProgramPair, TestInput};
use crate::tokens::{TokenError, TokenEstimator};

pub use levenshtein::{levenshtein, normalized_levenshtein};
pub use selection::{
    select_pairs, test_to_input, SelectedPair, SelectionConfig, SelectionError, SelectionStats, Submission,
    Verdict,
};

/// Metadata key carrying a precomputed cyclomatic complexity.
pub const CYCLOMATIC_KEY: &str = "cyclomatic_complexity";
/// Metadata key carrying the token count of the problem's longest test.
pub const TEST_TOKENS_KEY: &str = "test_tokens";

pub const SUBSETS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("pair {0} appears more than once")]
    DuplicatePair(String),
    #[error("need at least {needed} pairs with a {metric} value, found {found}")]
    InsufficientData { metric: &'static str, needed: usize, found: usize },
}

/// Per-pair features used to stratify results.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairFeatures {
    /// Tokens of the longer of the two sources.
    pub src_tokens: Option<usize>,
    pub test_tokens: Option<usize>,
    pub lev_distance: Option<f64>,
    pub cyclomatic_complexity: Option<u32>,
}

/// Computes the features available without a harness. Cyclomatic complexity
/// and test tokens are read from pair metadata when present; test tokens
/// otherwise fall back to the example input.
pub fn compute_features(
    pair: &ProgramPair,
    example: Option<&TestInput>,
    estimator: &dyn TokenEstimator,
) -> Result<PairFeatures, TokenError> {
    let src_tokens = estimator.count(&pair.p_source)?.max(estimator.count(&pair.q_source)?);
    let test_tokens = match pair.metadata.get(TEST_TOKENS_KEY).and_then(|v| v.parse().ok()) {
        Some(n) => Some(n),
        None => match example {
            Some(e) => Some(estimator.count(&e.raw_text)?),
            None => None,
        },
    };
    Ok(PairFeatures {
        src_tokens: Some(src_tokens),
        test_tokens,
        lev_distance: Some(normalized_levenshtein(&pair.p_source, &pair.q_source)),
        cyclomatic_complexity: pair.metadata.get(CYCLOMATIC_KEY).and_then(|v| v.parse().ok()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SrcTokens,
    Cyclomatic,
    TestTokens,
    Levenshtein,
}

impl Metric {
    pub const ALL: [Metric; 4] =
        [Metric::SrcTokens, Metric::Cyclomatic, Metric::TestTokens, Metric::Levenshtein];

    pub fn name(self) -> &'static str {
        match self {
            Metric::SrcTokens => "src_tokens",
            Metric::Cyclomatic => "cyclomatic",
            Metric::TestTokens => "test_tokens",
            Metric::Levenshtein => "levenshtein",
        }
    }

    pub fn value(self, f: &PairFeatures) -> Option<f64> {
        match self {
            Metric::SrcTokens => f.src_tokens.map(|v| v as f64),
            Metric::Cyclomatic => f.cyclomatic_complexity.map(f64::from),
            Metric::TestTokens => f.test_tokens.map(|v| v as f64),
            Metric::Levenshtein => f.lev_distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: u32,
    /// Pairs whose DET was found at or before this iteration.
    pub success_pairs: usize,
    /// Tests generated up to and including this iteration.
    pub total_tests: usize,
    pub det_problems: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair_id: String,
    pub problem_id: String,
    pub status: DetStatus,
    pub success_iteration: Option<u32>,
    pub tests_generated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub pairs: usize,
    pub problems: usize,
    pub success_pairs: usize,
    pub total_tests: usize,
    pub det_problems: usize,
    pub status_counts: BTreeMap<String, usize>,
    pub per_iteration: Vec<IterationRow>,
    pub pair_summaries: Vec<PairSummary>,
}

fn status_name(status: DetStatus) -> String {
    serde_json::to_value(status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .expect("unit variants serialize as strings")
}

/// Aggregates per-pair records. The result does not depend on record order.
pub fn aggregate(records: &[RunRecord]) -> Result<CampaignReport, ReportError> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    for w in sorted.windows(2) {
        if w[0].pair_id == w[1].pair_id {
            return Err(ReportError::DuplicatePair(w[0].pair_id.clone()));
        }
    }

    let problems: BTreeSet<&str> = sorted.iter().map(|r| r.problem_id.as_str()).collect();
    let success = |r: &RunRecord| r.status == DetStatus::Success;
    let det_problems: BTreeSet<&str> =
        sorted.iter().filter(|r| success(r)).map(|r| r.problem_id.as_str()).collect();

    let mut status_counts = BTreeMap::new();
    for r in &sorted {
        *status_counts.entry(status_name(r.status)).or_insert(0) += 1;
    }

    let horizon = sorted.iter().map(|r| r.tests_per_iteration.len()).max().unwrap_or(0);
    let per_iteration = (1..=horizon)
        .map(|k| {
            let found = |r: &&&RunRecord| {
                success(r) && r.success_iteration.is_some_and(|i| i as usize <= k)
            };
            IterationRow {
                iteration: k as u32,
                success_pairs: sorted.iter().filter(found).count(),
                total_tests: sorted
                    .iter()
                    .map(|r| r.tests_per_iteration.iter().take(k).sum::<usize>())
                    .sum(),
                det_problems: sorted
                    .iter()
                    .filter(found)
                    .map(|r| r.problem_id.as_str())
                    .collect::<BTreeSet<_>>()
                    .len(),
            }
        })
        .collect();

    Ok(CampaignReport {
        pairs: sorted.len(),
        problems: problems.len(),
        success_pairs: sorted.iter().filter(|r| success(r)).count(),
        total_tests: sorted.iter().map(|r| r.tests_generated).sum(),
        det_problems: det_problems.len(),
        status_counts,
        per_iteration,
        pair_summaries: sorted
            .iter()
            .map(|r| PairSummary {
                pair_id: r.pair_id.clone(),
                problem_id: r.problem_id.clone(),
                status: r.status,
                success_iteration: r.success_iteration,
                tests_generated: r.tests_generated,
            })
            .collect(),
    })
}

fn ratio(num: usize, den: usize) -> String {
    if den == 0 {
        format!("n/a ({num}/{den})")
    } else {
        format!("{:.1}% ({num}/{den})", 100.0 * num as f64 / den as f64)
    }
}

impl CampaignReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "pairs: {}  problems: {}", self.pairs, self.problems);
        let _ = writeln!(
            out,
            "{:<10} {:>22} {:>10} {:>22}",
            "iteration", "#Success_Pair", "#TT", "#DET_Pr"
        );
        for row in &self.per_iteration {
            let _ = writeln!(
                out,
                "{:<10} {:>22} {:>10} {:>22}",
                row.iteration,
                ratio(row.success_pairs, self.pairs),
                row.total_tests,
                ratio(row.det_problems, self.problems)
            );
        }
        let _ = writeln!(
            out,
            "{:<10} {:>22} {:>10} {:>22}",
            "total",
            ratio(self.success_pairs, self.pairs),
            self.total_tests,
            ratio(self.det_problems, self.problems)
        );
        let statuses: Vec<String> =
            self.status_counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(out, "status: {}", statuses.join(" "));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileRow {
    /// 1-based subset index, lowest metric first.
    pub subset: usize,
    pub size: usize,
    pub median: f64,
    pub successes: usize,
    pub ssuccess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileAnalysis {
    pub metric: Metric,
    pub rows: Vec<DecileRow>,
    /// Spearman correlation between subset index and success rate; 0 when
    /// either side is constant.
    pub rho: f64,
    pub p_value: f64,
    /// Exact permutation p-value, when requested.
    pub p_exact: Option<f64>,
}

/// Splits pairs into ten near-equal subsets by ascending `metric` (ties broken
/// by pair id) and correlates subset order with success rate.
pub fn decile_analysis(
    records: &[RunRecord],
    metric: Metric,
    exact: bool,
) -> Result<DecileAnalysis, ReportError> {
    let mut points: Vec<(f64, &str, bool)> = records
        .iter()
        .filter_map(|r| {
            metric
                .value(&r.features)
                .filter(|v| v.is_finite())
                .map(|v| (v, r.pair_id.as_str(), r.status == DetStatus::Success))
        })
        .collect();
    if points.len() < SUBSETS {
        return Err(ReportError::InsufficientData {
            metric: metric.name(),
            needed: SUBSETS,
            found: points.len(),
        });
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let n = points.len();
    let rows: Vec<DecileRow> = (0..SUBSETS)
        .map(|i| {
            let chunk = &points[i * n / SUBSETS..(i + 1) * n / SUBSETS];
            let values: Vec<f64> = chunk.iter().map(|p| p.0).collect();
            let successes = chunk.iter().filter(|p| p.2).count();
            DecileRow {
                subset: i + 1,
                size: chunk.len(),
                median: stats::median_sorted(&values).expect("subsets are non-empty"),
                successes,
                ssuccess: successes as f64 / chunk.len() as f64,
            }
        })
        .collect();
    let rates: Vec<f64> = rows.iter().map(|r| r.ssuccess).collect();
    let (rho, p_value, p_exact) = correlate_with_order(&rates, exact);
    Ok(DecileAnalysis { metric, rows, rho, p_value, p_exact })
}

/// Spearman rho (and p-values) of `rates` against their position.
pub fn correlate_with_order(rates: &[f64], exact: bool) -> (f64, f64, Option<f64>) {
    let order: Vec<f64> = (1..=rates.len()).map(|i| i as f64).collect();
    match stats::spearman(&order, rates) {
        Some(rho) => (
            rho,
            stats::t_approx_p_value(rho, rates.len()),
            if exact { stats::permutation_p_value(&order, rates) } else { None },
        ),
        None => (0.0, 1.0, exact.then_some(1.0)),
    }
}

impl DecileAnalysis {
    pub fn render_csv(&self) -> String {
        let mut out = String::from("subset,size,median,successes,ssuccess\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{:.4}", r.subset, r.size, r.median, r.successes, r.ssuccess);
        }
        out
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("{}\n", self.metric.name());
        let _ = writeln!(out, "{:<7} {:>6} {:>12} {:>9}", "subset", "size", "median", "ssuccess");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "S{:<6} {:>6} {:>12} {:>9.2}",
                r.subset, r.size, r.median, r.ssuccess
            );
        }
        let _ = write!(out, "rho = {:.3}, p = {:.4}", self.rho, self.p_value);
        if let Some(p) = self.p_exact {
            let _ = write!(out, " (exact p = {p:.4})");
        }
        out.push('\n');
        out
    }
}
