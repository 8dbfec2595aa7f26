//! The generation loop: initial prompt, then iterations with execution
//! feedback until a verified difference-exposing test turns up or the
//! iteration budget runs out.

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffdetect::{analyze, format_exec_diff};
use crate::prompt::{
    build_description_prompt, build_pr0, build_pr1, build_pr1_no_candidates, parse_completions,
    AblationFlags, PromptContext,
};
use crate::provider::{ChatProvider, Conversation, ProviderError, Role, SamplingParams};
use crate::runner::{run_on_pair, Executor, PairRunResult, DEFAULT_TIMEOUT};
use crate::subject::{ProgramPair, RunStatus, TestInput, Version};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("max_iterations must be at least 1")]
    NoIterations,
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error("subject timeout must be positive")]
    NonPositiveTimeout,
    #[error("temperature must be non-negative")]
    NegativeTemperature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub max_iterations: u32,
    pub sampling: SamplingParams,
    pub ablation: AblationFlags,
    /// Seconds per subject run.
    pub subject_timeout: f64,
    /// Trace the example run and the fed-back candidate.
    pub trace_feedback: bool,
    /// Also trace every candidate execution.
    pub trace_all_candidates: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            sampling: SamplingParams::default(),
            ablation: AblationFlags::default(),
            subject_timeout: DEFAULT_TIMEOUT.as_secs_f64(),
            trace_feedback: true,
            trace_all_candidates: false,
        }
    }
}

impl EngineConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_iterations < 1 {
            return Err(ConfigError::NoIterations);
        }
        if self.sampling.n_samples < 1 {
            return Err(ConfigError::NoSamples);
        }
        if !(self.subject_timeout > 0.0) {
            return Err(ConfigError::NonPositiveTimeout);
        }
        if !(self.sampling.temperature >= 0.0) {
            return Err(ConfigError::NegativeTemperature);
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.subject_timeout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetStatus {
    Success,
    Exhausted,
    AbortedExampleMismatch,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Auth,
    Provider,
    Runner,
    Config,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetResult {
    pub status: DetStatus,
    pub det: Option<TestInput>,
    /// 1-based.
    pub success_iteration: Option<u32>,
    pub tests_generated: usize,
    pub tests_executed: usize,
    pub llm_calls: usize,
    /// Unique parsed candidates per completed iteration.
    pub tests_per_iteration: Vec<usize>,
    pub skipped_lines: usize,
    pub partial_batches: usize,
    pub error_kind: Option<ErrorKind>,
    pub error_detail: Option<String>,
    pub transcript: Conversation,
}

impl DetResult {
    fn empty() -> Self {
        Self {
            status: DetStatus::Exhausted,
            det: None,
            success_iteration: None,
            tests_generated: 0,
            tests_executed: 0,
            llm_calls: 0,
            tests_per_iteration: Vec::new(),
            skipped_lines: 0,
            partial_batches: 0,
            error_kind: None,
            error_detail: None,
            transcript: Conversation::new(),
        }
    }

    fn fail(mut self, kind: ErrorKind, detail: impl Into<String>) -> Self {
        self.status = DetStatus::Error;
        self.error_kind = Some(kind);
        self.error_detail = Some(detail.into());
        self
    }

    fn provider_failure(self, err: ProviderError) -> Self {
        let kind = match err {
            ProviderError::Auth(_) => ErrorKind::Auth,
            _ => ErrorKind::Provider,
        };
        self.fail(kind, err.to_string())
    }

    pub fn is_success(&self) -> bool {
        self.status == DetStatus::Success
    }
}

fn runner_failure(run: &PairRunResult) -> Option<String> {
    run.error().map(|e| e.to_string())
}

fn exec_diff_text(run: &PairRunResult) -> Option<String> {
    let (p, q) = run.both()?;
    let report = analyze(p.trace.as_ref()?, q.trace.as_ref()?);
    if report.from_truncated_trace {
        log::info!("execution difference computed from a truncated trace");
    }
    Some(format_exec_diff(&report.differences)).filter(|t| !t.is_empty())
}

fn shared_output(run: &PairRunResult) -> Vec<String> {
    let (p, _) = run.both().expect("checked by caller");
    match p.outcome.status {
        RunStatus::Ok => p.outcome.output_lines.clone(),
        RunStatus::RuntimeError => vec!["(runtime error)".into()],
        RunStatus::Timeout => vec!["(timeout)".into()],
        RunStatus::HarnessError => vec!["(harness error)".into()],
    }
}

/// Searches for an input on which the two versions of `pair` disagree.
pub fn generate_det<P, E>(
    pair: &ProgramPair,
    example: &TestInput,
    cfg: &EngineConfig,
    provider: &P,
    runner: &E,
) -> DetResult
where
    P: ChatProvider + ?Sized,
    E: Executor + ?Sized,
{
    let mut result = DetResult::empty();
    if let Err(e) = cfg.validate() {
        return result.fail(ErrorKind::Config, e.to_string());
    }
    if let Err(e) = pair.validate() {
        return result.fail(ErrorKind::Config, e.to_string());
    }
    let timeout = cfg.timeout();
    let flags = cfg.ablation;

    let example_run = run_on_pair(runner, pair, example, cfg.trace_feedback, timeout);
    if let Some(e) = runner_failure(&example_run) {
        return result.fail(ErrorKind::Runner, format!("running the example test: {e}"));
    }
    if example_run.differ {
        let (p, q) = example_run.both().expect("both ran");
        result.status = DetStatus::AbortedExampleMismatch;
        result.error_detail = Some(format!(
            "the example test {} already exposes a difference (P: {:?} {:?}, Q: {:?} {:?})",
            example.raw_text, p.outcome.status, p.outcome.output_lines, q.outcome.status,
            q.outcome.output_lines
        ));
        return result;
    }

    let (mut desc_p, mut desc_q) = (None, None);
    if flags.include_description {
        for version in [Version::P, Version::Q] {
            let conv = Conversation::from_user(build_description_prompt(pair.source(version)));
            result.llm_calls += 1;
            match provider.chat(&conv, &cfg.sampling.single()) {
                Ok(reply) => {
                    let desc = reply.completions.into_iter().next();
                    match version {
                        Version::P => desc_p = desc,
                        Version::Q => desc_q = desc,
                    }
                }
                Err(e) => return result.provider_failure(e),
            }
        }
    }

    let ctx = PromptContext {
        pair: pair.clone(),
        desc_p,
        desc_q,
        example: Some((example.clone(), shared_output(&example_run))),
        exec_diff_text: exec_diff_text(&example_run),
        ablation: flags,
    };
    result
        .transcript
        .push(Role::User, build_pr0(&ctx))
        .expect("fresh conversation");

    let mut executed: HashSet<String> = HashSet::from([example.canonical_key()]);
    for iteration in 1..=cfg.max_iterations {
        result.llm_calls += 1;
        let reply = match provider.chat(&result.transcript, &cfg.sampling) {
            Ok(reply) => reply,
            Err(e) => return result.provider_failure(e),
        };
        if reply.partial {
            result.partial_batches += 1;
        }
        let parsed = parse_completions(&reply.completions);
        result.skipped_lines += parsed.skipped_lines;
        result.tests_generated += parsed.tests.len();
        result.tests_per_iteration.push(parsed.tests.len());

        for candidate in &parsed.tests {
            if !executed.insert(candidate.canonical_key()) {
                continue;
            }
            result.tests_executed += 1;
            let run = run_on_pair(runner, pair, candidate, cfg.trace_all_candidates, timeout);
            if let Some(e) = runner_failure(&run) {
                return result.fail(ErrorKind::Runner, e);
            }
            if !run.differ {
                continue;
            }
            let verify = run_on_pair(runner, pair, candidate, false, timeout);
            if !verify.differ {
                log::warn!("candidate {} did not reproduce a difference", candidate.raw_text);
                continue;
            }
            if let Some(first) = reply.completions.first() {
                let _ = result.transcript.push(Role::Assistant, first.clone());
            }
            result.status = DetStatus::Success;
            result.det = Some(candidate.clone());
            result.success_iteration = Some(iteration);
            return result;
        }

        if let Some(first) = reply.completions.first() {
            result
                .transcript
                .push(Role::Assistant, first.clone())
                .expect("a user message precedes every assistant message");
        }
        if iteration == cfg.max_iterations {
            break;
        }

        let feedback = match parsed.tests.first() {
            None => build_pr1_no_candidates(),
            Some(first) => {
                let run = run_on_pair(runner, pair, first, cfg.trace_feedback, timeout);
                if let Some(e) = runner_failure(&run) {
                    return result.fail(ErrorKind::Runner, e);
                }
                let (p, q) = run.both().expect("both ran");
                match build_pr1(first, &p.outcome, &q.outcome, exec_diff_text(&run).as_deref(), flags) {
                    Ok(text) => text,
                    Err(e) => return result.fail(ErrorKind::Internal, e.to_string()),
                }
            }
        };
        result.transcript.push(Role::User, feedback).expect("user messages always allowed");
    }
    result.status = DetStatus::Exhausted;
    result
}

/// Per-pair machine-readable run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub pair_id: String,
    pub problem_id: String,
    pub status: DetStatus,
    pub det: Option<TestInput>,
    pub success_iteration: Option<u32>,
    pub tests_generated: usize,
    pub tests_executed: usize,
    pub llm_calls: usize,
    pub tests_per_iteration: Vec<usize>,
    pub skipped_lines: usize,
    pub partial_batches: usize,
    pub error_kind: Option<ErrorKind>,
    pub error_detail: Option<String>,
    pub config: EngineConfig,
    #[serde(default)]
    pub features: crate::metrics::PairFeatures,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Conversation>,
}

impl RunRecord {
    pub fn new(
        pair: &ProgramPair,
        result: &DetResult,
        config: &EngineConfig,
        features: crate::metrics::PairFeatures,
        keep_transcript: bool,
    ) -> Self {
        Self {
            pair_id: pair.pair_id.clone(),
            problem_id: pair.problem_id.clone(),
            status: result.status,
            det: result.det.clone(),
            success_iteration: result.success_iteration,
            tests_generated: result.tests_generated,
            tests_executed: result.tests_executed,
            llm_calls: result.llm_calls,
            tests_per_iteration: result.tests_per_iteration.clone(),
            skipped_lines: result.skipped_lines,
            partial_batches: result.partial_batches,
            error_kind: result.error_kind,
            error_detail: result.error_detail.clone(),
            config: config.clone(),
            features,
            transcript: keep_transcript.then(|| result.transcript.clone()),
        }
    }
}
