//! Picks (wrong, accepted) submission pairs from a judge's submission log.

use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runner::{run_on_pair, Executor, RunError};
use crate::subject::{InputOrigin, ModelError, ProgramPair, TestInput, Value};
use crate::tokens::{TokenError, TokenEstimator};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("token estimation failed: {0}")]
    Tokens(#[from] TokenError),
    #[error("harness failure: {0}")]
    Runner(#[from] RunError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    WrongAnswer,
    RuntimeError,
    TimeLimitExceeded,
    MemoryLimitExceeded,
    CompilationError,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub submission_id: String,
    pub author: String,
    pub problem_id: String,
    pub language: String,
    pub verdict: Verdict,
    /// Submission time; ordering only.
    pub timestamp: i64,
    /// Source already in function form.
    pub source: String,
    /// False when the source needs a third-party package.
    #[serde(default = "yes")]
    pub self_contained: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub max_program_tokens: usize,
    pub max_test_tokens: usize,
    pub min_pairs_per_problem: usize,
    pub timeout_secs: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { max_program_tokens: 2500, max_test_tokens: 100, min_pairs_per_problem: 2, timeout_secs: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedPair {
    pub pair: ProgramPair,
    /// Official test on which both versions print the same output.
    pub example: TestInput,
}

/// How many candidates each condition removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub authors_considered: usize,
    pub not_python_or_not_self_contained: usize,
    pub no_wrong_before_accepted: usize,
    pub test_too_long: usize,
    pub program_too_long: usize,
    pub no_agreeing_test: usize,
    pub too_few_pairs_for_problem: usize,
    pub selected: usize,
}

/// Official test text to arguments: one string argument per input line.
pub fn test_to_input(text: &str) -> TestInput {
    let lines: Vec<&str> = text.lines().collect();
    let raw = serde_json::to_string(&lines).expect("strings serialize");
    if lines.is_empty() {
        return TestInput::zero_argument(InputOrigin::Example, raw);
    }
    let args = lines.iter().map(|l| Value::Str(l.to_string())).collect();
    TestInput::new(args, InputOrigin::Example, raw).expect("string args are always valid")
}

fn is_python(language: &str) -> bool {
    language.to_ascii_lowercase().contains("python") || language.eq_ignore_ascii_case("pypy3")
}

/// For each author and problem, pairs the last wrong-answer submission made
/// before the first accepted one with that accepted one, then keeps pairs
/// that pass the size limits and agree on at least one official test.
pub fn select_pairs<E: Executor + ?Sized>(
    submissions: &[Submission],
    tests: &BTreeMap<String, Vec<String>>,
    estimator: &dyn TokenEstimator,
    runner: &E,
    cfg: &SelectionConfig,
) -> Result<(Vec<SelectedPair>, SelectionStats), SelectionError> {
    let mut stats = SelectionStats::default();
    let mut by_author: BTreeMap<(&str, &str), Vec<&Submission>> = BTreeMap::new();
    for s in submissions {
        by_author.entry((s.problem_id.as_str(), s.author.as_str())).or_default().push(s);
    }
    stats.authors_considered = by_author.len();

    let mut test_ok: HashMap<&str, bool> = HashMap::new();
    for (problem, cases) in tests {
        let mut ok = true;
        for case in cases {
            if estimator.count(case)? >= cfg.max_test_tokens {
                ok = false;
                break;
            }
        }
        test_ok.insert(problem.as_str(), ok);
    }

    let timeout = Duration::from_secs_f64(cfg.timeout_secs.max(0.001));
    let mut survivors: BTreeMap<&str, Vec<SelectedPair>> = BTreeMap::new();
    for ((problem, author), mut subs) in by_author {
        subs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.submission_id.cmp(&b.submission_id)));
        subs.retain(|s| is_python(&s.language) && s.self_contained);
        let Some(accepted) = subs.iter().find(|s| s.verdict == Verdict::Accepted) else {
            stats.not_python_or_not_self_contained += 1;
            continue;
        };
        let Some(wrong) = subs
            .iter()
            .rfind(|s| s.verdict == Verdict::WrongAnswer && s.timestamp < accepted.timestamp)
        else {
            stats.no_wrong_before_accepted += 1;
            continue;
        };
        if !test_ok.get(problem).copied().unwrap_or(false) {
            stats.test_too_long += 1;
            continue;
        }
        if estimator.count(&wrong.source)? >= cfg.max_program_tokens
            || estimator.count(&accepted.source)? >= cfg.max_program_tokens
        {
            stats.program_too_long += 1;
            continue;
        }
        let pair = ProgramPair::new(
            format!("{problem}-{author}"),
            problem,
            wrong.source.clone(),
            accepted.source.clone(),
        )?
        .with_metadata("p_submission", wrong.submission_id.clone())
        .with_metadata("q_submission", accepted.submission_id.clone());

        let mut example = None;
        for case in &tests[problem] {
            let input = test_to_input(case);
            let run = run_on_pair(runner, &pair, &input, false, timeout);
            if let Some(RunError::HarnessUnavailable(msg)) = run.error() {
                return Err(RunError::HarnessUnavailable(msg.clone()).into());
            }
            if let Some((p, q)) = run.both() {
                if p.outcome.is_ok() && p.outcome.same_observation(&q.outcome) {
                    example = Some(input);
                    break;
                }
            }
        }
        match example {
            Some(example) => survivors.entry(problem).or_default().push(SelectedPair { pair, example }),
            None => stats.no_agreeing_test += 1,
        }
    }

    let mut selected = Vec::new();
    for (_, pairs) in survivors {
        if pairs.len() < cfg.min_pairs_per_problem {
            stats.too_few_pairs_for_problem += pairs.len();
        } else {
            selected.extend(pairs);
        }
    }
    stats.selected = selected.len();
    Ok((selected, stats))
}
