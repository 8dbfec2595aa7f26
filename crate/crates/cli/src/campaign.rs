//! The `run` and `pair` subcommands.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Context;
use clap::Args;
use diffexpose::emitter::{emit_unit_test, write_unit_test};
use diffexpose::engine::{generate_det, DetResult, DetStatus, ErrorKind, RunRecord};
use diffexpose::metrics::{aggregate, compute_features, CYCLOMATIC_KEY};
use diffexpose::prompt::render_test_input;
use diffexpose::subject::{InputOrigin, ProgramPair, TestInput};
use diffexpose::tokens::RegexTokenEstimator;
use serde::Deserialize;

use crate::setup::{self, EngineFlags, Setup};
use crate::{fail, EXIT_AUTH, EXIT_EXAMPLE_DIFFERS, EXIT_INPUT, EXIT_NOT_FOUND};

pub const MAX_DEFAULT_WORKERS: usize = 8;

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON-lines manifest: {pair_id, problem_id, p_path, q_path, example_args}.
    pub manifest: PathBuf,
    #[command(flatten)]
    pub engine: EngineFlags,
    /// Output directory for records, tests and the report.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Parallel pairs (default: processors, at most 8).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Replace an existing report in the output directory.
    #[arg(long)]
    pub overwrite: bool,
    /// Keep each pair's conversation in its record.
    #[arg(long)]
    pub transcripts: bool,
    /// Ask the harness for Q's cyclomatic complexity when the manifest lacks it.
    #[arg(long)]
    pub complexity: bool,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    pub p_path: PathBuf,
    pub q_path: PathBuf,
    /// Example test as a JSON array of arguments, e.g. '["4 2 1 3"]'.
    #[arg(long)]
    pub example: String,
    #[arg(long)]
    pub pair_id: Option<String>,
    #[command(flatten)]
    pub engine: EngineFlags,
    /// Directory for the emitted test file.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    pair_id: String,
    problem_id: String,
    p_path: PathBuf,
    q_path: PathBuf,
    example_args: serde_json::Value,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

struct Job {
    pair: ProgramPair,
    example: TestInput,
}

fn read_source(base: &Path, path: &Path) -> anyhow::Result<String> {
    let full = base.join(path);
    std::fs::read_to_string(&full).map_err(|e| fail(EXIT_INPUT, format!("reading {}: {e}", full.display())))
}

fn parse_example(json: &str) -> anyhow::Result<TestInput> {
    TestInput::parse_json_array(json, InputOrigin::Example)
        .map_err(|e| fail(EXIT_INPUT, format!("example test {json}: {e}")))
}

fn load_manifest(path: &Path) -> anyhow::Result<Vec<Job>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_INPUT, format!("reading manifest {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut jobs = Vec::new();
    let mut ids = HashSet::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: &dyn std::fmt::Display| fail(EXIT_INPUT, format!("{}:{}: {e}", path.display(), no + 1));
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| at(&e))?;
        if !ids.insert(entry.pair_id.clone()) {
            return Err(at(&format!("duplicate pair_id {}", entry.pair_id)));
        }
        let example = parse_example(&entry.example_args.to_string()).map_err(|e| at(&e))?;
        let mut pair = ProgramPair::new(
            entry.pair_id,
            entry.problem_id,
            read_source(base, &entry.p_path)?,
            read_source(base, &entry.q_path)?,
        )
        .map_err(|e| at(&e))?;
        pair.metadata.extend(entry.metadata);
        jobs.push(Job { pair, example });
    }
    Ok(jobs)
}

/// File-system-safe form of a pair id.
pub fn file_stem(pair_id: &str) -> String {
    pair_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(MAX_DEFAULT_WORKERS)
}

fn run_job(job: &mut Job, setup: &Setup, complexity: bool, transcripts: bool) -> (RunRecord, DetResult) {
    if complexity && !job.pair.metadata.contains_key(CYCLOMATIC_KEY) {
        match setup::harness().and_then(|h| Ok(h.complexity(&job.pair.q_source)?)) {
            Ok(c) => {
                job.pair.metadata.insert(CYCLOMATIC_KEY.into(), c.to_string());
            }
            Err(e) => log::warn!("{}: complexity unavailable: {e}", job.pair.pair_id),
        }
    }
    let result = generate_det(&job.pair, &job.example, &setup.engine, &*setup.provider, &*setup.runner);
    let features = compute_features(&job.pair, Some(&job.example), &RegexTokenEstimator).unwrap_or_default();
    let record = RunRecord::new(&job.pair, &result, &setup.engine, features, transcripts);
    (record, result)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn run(args: RunArgs) -> anyhow::Result<u8> {
    let mut jobs = load_manifest(&args.manifest)?;
    let report_path = args.out.join("report.json");
    if report_path.exists() && !args.overwrite {
        return Err(fail(EXIT_INPUT, format!("{} exists; pass --overwrite", report_path.display())));
    }
    let setup = setup::build(&args.engine)?;
    let workers = args.workers.or(setup.workers).unwrap_or_else(default_workers).max(1);

    let next = AtomicUsize::new(0);
    let auth_failed = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<(RunRecord, DetResult)>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let jobs_ref: Vec<Mutex<&mut Job>> = jobs.iter_mut().map(Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs_ref.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs_ref.len() || auth_failed.load(Ordering::SeqCst) {
                    break;
                }
                let mut job = jobs_ref[i].lock().expect("job lock");
                let done = run_job(&mut job, &setup, args.complexity, args.transcripts);
                if done.0.error_kind == Some(ErrorKind::Auth) {
                    auth_failed.store(true, Ordering::SeqCst);
                }
                log::info!("{}: {:?}", done.0.pair_id, done.0.status);
                *slots[i].lock().expect("slot lock") = Some(done);
            });
        }
    });
    drop(jobs_ref);
    setup.save_recordings()?;
    if auth_failed.load(Ordering::SeqCst) {
        return Err(fail(EXIT_AUTH, "provider authentication failed; campaign stopped"));
    }

    let records_dir = args.out.join("records");
    let tests_dir = args.out.join("tests");
    std::fs::create_dir_all(&records_dir)?;
    let mut records = Vec::new();
    for (job, slot) in jobs.iter().zip(slots) {
        let (record, result) = slot.into_inner().expect("slot lock").expect("every job ran");
        let stem = file_stem(&record.pair_id);
        write_json(&records_dir.join(format!("{stem}.json")), &record)?;
        if result.status == DetStatus::Success {
            let text = emit_unit_test(&job.pair, &result)?;
            write_unit_test(&tests_dir, &stem, &text, true)?;
        }
        records.push(record);
    }
    let report = aggregate(&records).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    write_json(&report_path, &report)?;
    let text = report.render_text();
    std::fs::write(args.out.join("report.txt"), &text)?;
    print!("{text}");
    let errors = records.iter().filter(|r| r.status == DetStatus::Error).count();
    if errors > 0 {
        eprintln!("{errors} pair(s) ended in error; see {}", records_dir.display());
        return Ok(EXIT_NOT_FOUND);
    }
    Ok(0)
}

pub fn pair(args: PairArgs) -> anyhow::Result<u8> {
    let here = Path::new(".");
    let p = read_source(here, &args.p_path)?;
    let q = read_source(here, &args.q_path)?;
    let example = parse_example(&args.example)?;
    let pair_id = args.pair_id.clone().unwrap_or_else(|| {
        args.q_path.file_stem().map_or("pair".into(), |s| s.to_string_lossy().into_owned())
    });
    let pair = ProgramPair::new(pair_id, "single", p, q).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    let setup = setup::build(&args.engine)?;
    let result = generate_det(&pair, &example, &setup.engine, &*setup.provider, &*setup.runner);
    setup.save_recordings()?;
    match result.status {
        DetStatus::Success => {
            let det = result.det.as_ref().expect("success carries a DET");
            println!("DET: {}", render_test_input(det));
            println!("found in iteration {}", result.success_iteration.unwrap_or(0));
            let text = emit_unit_test(&pair, &result)?;
            let path = write_unit_test(&args.out, &file_stem(&pair.pair_id), &text, args.overwrite)
                .map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
            println!("wrote {}", path.display());
            Ok(0)
        }
        DetStatus::Exhausted => {
            println!(
                "no difference-exposing test found after {} iteration(s) ({} tests generated)",
                setup.engine.max_iterations, result.tests_generated
            );
            Ok(EXIT_NOT_FOUND)
        }
        DetStatus::AbortedExampleMismatch => Err(fail(
            EXIT_EXAMPLE_DIFFERS,
            result.error_detail.unwrap_or_else(|| "the example test already differs".into()),
        )),
        DetStatus::Error => {
            let code = if result.error_kind == Some(ErrorKind::Auth) { EXIT_AUTH } else { EXIT_INPUT };
            Err(fail(code, result.error_detail.unwrap_or_else(|| "engine error".into())))
        }
    }
}
