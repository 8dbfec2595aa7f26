//! The `report`, `select` and `transform` subcommands.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use diffexpose::engine::RunRecord;
use diffexpose::metrics::{aggregate, decile_analysis, select_pairs, Metric, ReportError, SelectionConfig, Submission};
use diffexpose::prompt::render_test_input;
use diffexpose::runner::RunError;
use diffexpose::tokens::RegexTokenEstimator;
use regex::Regex;

use crate::campaign::file_stem;
use crate::{fail, setup, EXIT_INPUT, EXIT_INSUFFICIENT, EXIT_UNSUPPORTED};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    SrcTok,
    Cyclo,
    TestTok,
    Lev,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::SrcTok => Metric::SrcTokens,
            MetricArg::Cyclo => Metric::Cyclomatic,
            MetricArg::TestTok => Metric::TestTokens,
            MetricArg::Lev => Metric::Levenshtein,
        }
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of per-pair record files.
    pub records_dir: PathBuf,
    /// Feature for the decile analysis.
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// Also compute the exact permutation p-value.
    #[arg(long)]
    pub exact: bool,
    /// Where to write the decile CSV (default: the records directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// JSON-lines file of submissions.
    #[arg(long)]
    pub submissions: PathBuf,
    /// JSON object mapping problem id to its list of official test texts.
    #[arg(long)]
    pub tests: PathBuf,
    /// Output directory for sources and manifest.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn load_records(dir: &Path) -> anyhow::Result<Vec<RunRecord>> {
    let entries = std::fs::read_dir(dir).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", p.display())))
        })
        .collect()
}

pub fn report(args: ReportArgs) -> anyhow::Result<u8> {
    let records = load_records(&args.records_dir)?;
    let summary = aggregate(&records).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    let mut out = std::io::stdout().lock();
    write!(out, "{}", summary.render_text())?;
    let Some(metric) = args.metric else { return Ok(0) };
    let metric = Metric::from(metric);
    let analysis = match decile_analysis(&records, metric, args.exact) {
        Ok(a) => a,
        Err(e @ ReportError::InsufficientData { .. }) => return Err(fail(EXIT_INSUFFICIENT, e.to_string())),
        Err(e) => return Err(fail(EXIT_INPUT, e.to_string())),
    };
    writeln!(out)?;
    write!(out, "{}", analysis.render_text())?;
    let dir = args.out.unwrap_or(args.records_dir);
    std::fs::create_dir_all(&dir)?;
    let csv = dir.join(format!("deciles_{}.csv", metric.name()));
    std::fs::write(&csv, analysis.render_csv()).with_context(|| format!("writing {}", csv.display()))?;
    writeln!(out, "wrote {}", csv.display())?;
    Ok(0)
}

/// Whether a script reads standard input at all.
fn reads_stdin(script: &str) -> bool {
    Regex::new(r"\binput\s*\(|\bsys\.stdin\b|\bstdin\.read").expect("valid pattern").is_match(script)
}

pub fn transform(path: &Path) -> anyhow::Result<u8> {
    let script = std::fs::read_to_string(path).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    if !reads_stdin(&script) {
        return Err(fail(EXIT_UNSUPPORTED, format!("{}: no stdin reads found", path.display())));
    }
    match setup::harness()?.transform(&script) {
        Ok(function) => {
            print!("{function}");
            Ok(0)
        }
        Err(RunError::ToolFailed(why)) => Err(fail(EXIT_UNSUPPORTED, format!("{}: {why}", path.display()))),
        Err(e) => Err(fail(EXIT_INPUT, e.to_string())),
    }
}

pub fn select(args: SelectArgs) -> anyhow::Result<u8> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", p.display())));
    let submissions: Vec<Submission> = read(&args.submissions)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| fail(EXIT_INPUT, format!("submission line {}: {e}", i + 1))))
        .collect::<anyhow::Result<_>>()?;
    let tests: BTreeMap<String, Vec<String>> =
        serde_json::from_str(&read(&args.tests)?).map_err(|e| fail(EXIT_INPUT, format!("tests: {e}")))?;
    let harness = setup::harness()?;
    let (selected, stats) =
        select_pairs(&submissions, &tests, &RegexTokenEstimator, &harness, &SelectionConfig::default())
            .map_err(|e| fail(EXIT_INPUT, e.to_string()))?;

    let sources = args.out.join("sources");
    std::fs::create_dir_all(&sources)?;
    let mut manifest = String::new();
    for s in &selected {
        let stem = file_stem(&s.pair.pair_id);
        let (p, q) = (format!("sources/{stem}_p.py"), format!("sources/{stem}_q.py"));
        std::fs::write(args.out.join(&p), &s.pair.p_source)?;
        std::fs::write(args.out.join(&q), &s.pair.q_source)?;
        let example: serde_json::Value = serde_json::from_str(&render_test_input(&s.example))?;
        let line = serde_json::json!({
            "pair_id": s.pair.pair_id,
            "problem_id": s.pair.problem_id,
            "p_path": p,
            "q_path": q,
            "example_args": example,
            "metadata": s.pair.metadata,
        });
        manifest += &format!("{line}\n");
    }
    std::fs::write(args.out.join("manifest.jsonl"), manifest)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(0)
}
