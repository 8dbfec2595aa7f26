//! Prompt construction and completion parsing.
//!
//! All prompts are assembled from fixed English sections so that equal
//! contexts always give byte-identical text. Sections switched off by the
//! ablation flags are left out entirely.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subject::{outputs_differ, ExecutionOutcome, InputOrigin, ProgramPair, TestInput};

pub const DESCRIPTION_QUESTION: &str = "What is the intention of this code?";
pub const FORMAL_CONDITION: &str = "P(inputdata)!=Q(inputdata)";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("internal contract violation: {0}")]
    InternalContractViolation(&'static str),
}

/// Which prompt ingredients are included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub include_description: bool,
    pub include_example_test: bool,
    pub include_exec_data: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self { include_description: true, include_example_test: true, include_exec_data: true }
    }
}

impl AblationFlags {
    /// Execution data is only meaningful alongside the example test.
    pub fn exec_data(&self) -> bool {
        self.include_exec_data && self.include_example_test
    }
}

/// Everything the initial prompt can mention.
#[derive(Debug, Clone)]
pub struct PromptContext {
    pub pair: ProgramPair,
    pub desc_p: Option<String>,
    pub desc_q: Option<String>,
    /// The example test and the output both versions produced on it.
    pub example: Option<(TestInput, Vec<String>)>,
    pub exec_diff_text: Option<String>,
    pub ablation: AblationFlags,
}

pub fn build_description_prompt(source: &str) -> String {
    format!("{DESCRIPTION_QUESTION}\n\n{source}")
}

fn render_lines(lines: &[String]) -> String {
    if lines.is_empty() {
        "(empty output)".to_string()
    } else {
        lines.join("\n")
    }
}

fn code_block(source: &str) -> String {
    format!("```python\n{}\n```", source.trim_end_matches('\n'))
}

const FORMAT_INSTRUCTION: &str = "Write each test as one JSON array holding the arguments passed to the function, one test per line, all inside a single fenced code block. For example:\n```\n[\"first argument\", 2]\n```";

pub fn build_pr0(ctx: &PromptContext) -> String {
    let flags = ctx.ablation;
    let mut sections = vec![
        "You are given two versions of a Python program, P and Q. Each version is a function that receives its inputs as positional arguments and returns the list of lines it outputs.".to_string(),
        format!("## Version P\n{}", code_block(&ctx.pair.p_source)),
        format!("## Version Q\n{}", code_block(&ctx.pair.q_source)),
    ];
    if flags.include_description {
        if let Some(desc) = &ctx.desc_p {
            sections.push(format!("## Description of version P\n{}", desc.trim()));
        }
        if let Some(desc) = &ctx.desc_q {
            sections.push(format!("## Description of version Q\n{}", desc.trim()));
        }
    }
    if flags.include_example_test {
        if let Some((input, output)) = &ctx.example {
            let mut s = format!("## Example test\nInput:\n{}", input.raw_text);
            if flags.exec_data() {
                s += &format!("\nOutput of both P and Q:\n{}", render_lines(output));
            }
            sections.push(s);
        }
    }
    if flags.exec_data() {
        if let Some(diff) = ctx.exec_diff_text.as_deref().filter(|d| !d.trim().is_empty()) {
            sections.push(format!("## Execution difference on the example test\n{diff}"));
        }
    }
    sections.push(format!(
        "## Task\n{FORMAT_INSTRUCTION}\nA difference exposing test is a test input for which P and Q produce different outputs, that is {FORMAL_CONDITION}.\nGenerate difference exposing tests for P and Q."
    ));
    sections.join("\n\n") + "\n"
}

const REQUEST_ANOTHER: &str = "Generate another test in the same format: one JSON array of arguments per line inside a fenced code block.";

/// Feedback prompt for a candidate that did not expose a difference.
pub fn build_pr1(
    tested: &TestInput,
    outcome_p: &ExecutionOutcome,
    outcome_q: &ExecutionOutcome,
    exec_diff_text: Option<&str>,
    flags: AblationFlags,
) -> Result<String, PromptError> {
    if outputs_differ(outcome_p, outcome_q) {
        return Err(PromptError::InternalContractViolation(
            "feedback prompt requested for a difference-exposing test",
        ));
    }
    let mut parts = Vec::new();
    if flags.exec_data() {
        if let Some(diff) = exec_diff_text.filter(|d| !d.trim().is_empty()) {
            parts.push(format!("Execution difference on the test input {}:\n{diff}", tested.raw_text));
        }
    }
    let same = if !outcome_p.is_ok() {
        format!(
            "The test input {} caused an error in both P and Q, so it does not expose a difference. We expect a test for which P and Q produce different outputs.",
            tested.raw_text
        )
    } else if flags.exec_data() {
        format!(
            "P and Q produce the same output for the test input {}:\n{}\nWe expect a test for which P and Q produce different outputs.",
            tested.raw_text,
            render_lines(&outcome_p.output_lines)
        )
    } else {
        format!(
            "P and Q produce the same output for the test input {}. We expect a test for which P and Q produce different outputs.",
            tested.raw_text
        )
    };
    parts.push(same);
    parts.push(REQUEST_ANOTHER.to_string());
    Ok(parts.join("\n\n") + "\n")
}

/// Feedback prompt for an answer that held no parseable test.
pub fn build_pr1_no_candidates() -> String {
    format!("Your previous answer did not contain any test in the required format.\n\n{REQUEST_ANOTHER}\n")
}

/// Renders a test in the declared response format.
pub fn render_test_input(input: &TestInput) -> String {
    let json: Vec<serde_json::Value> =
        input.args.iter().map(|a| a.to_json().expect("validated on construction")).collect();
    serde_json::to_string(&json).expect("json values serialize")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateParse {
    pub tests: Vec<TestInput>,
    /// Non-blank lines inside code blocks that were not valid tests.
    pub skipped_lines: usize,
}

/// Extracts tests from every fenced block of a completion, in order of
/// appearance, dropping duplicates. An unterminated final block still counts.
pub fn parse_candidate_tests(completion: &str) -> CandidateParse {
    let mut parse = CandidateParse::default();
    let mut seen = HashSet::new();
    let mut in_block = false;
    for line in completion.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with("```") {
            in_block = !in_block;
            continue;
        }
        if !in_block || trimmed.is_empty() {
            continue;
        }
        match TestInput::parse_json_array(trimmed, InputOrigin::LlmGenerated) {
            Ok(test) => {
                if seen.insert(test.canonical_key()) {
                    parse.tests.push(test);
                }
            }
            Err(_) => parse.skipped_lines += 1,
        }
    }
    parse
}

/// Parses several completions as one ordered, de-duplicated candidate list.
pub fn parse_completions<S: AsRef<str>>(completions: &[S]) -> CandidateParse {
    let mut all = CandidateParse::default();
    let mut seen = HashSet::new();
    for completion in completions {
        let parse = parse_candidate_tests(completion.as_ref());
        all.skipped_lines += parse.skipped_lines;
        for test in parse.tests {
            if seen.insert(test.canonical_key()) {
                all.tests.push(test);
            }
        }
    }
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subject::{RunStatus, Value};

    fn pair() -> ProgramPair {
        ProgramPair::new("l1", "6A", "def f(*a):\n    return ['P']\n", "def f(*a):\n    return ['Q']\n")
            .unwrap()
    }

    fn ctx(flags: AblationFlags, diff: Option<&str>) -> PromptContext {
        PromptContext {
            pair: pair(),
            desc_p: Some("Prints P.".into()),
            desc_q: Some("Prints Q.".into()),
            example: Some((
                TestInput::single_string("4 2 1 3", InputOrigin::Example),
                vec!["TRIANGLE".into()],
            )),
            exec_diff_text: diff.map(str::to_string),
            ablation: flags,
        }
    }

    #[test]
    fn description_prompt_layout() {
        assert_eq!(build_description_prompt("x = 1"), "What is the intention of this code?\n\nx = 1");
        assert_eq!(build_description_prompt(""), "What is the intention of this code?\n\n");
    }

    #[test]
    fn pr0_full_context() {
        let text = build_pr0(&ctx(AblationFlags::default(), Some("In version P, ...")));
        assert!(text.contains("4 2 1 3"));
        assert!(text.contains("TRIANGLE"));
        assert!(text.contains("P(inputdata)!=Q(inputdata)"));
        let order = ["## Version P", "## Version Q", "## Description of version P", "## Example test", "## Execution difference", "## Task"];
        let positions: Vec<_> = order.iter().map(|h| text.find(h).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn pr0_without_example_drops_exec_data() {
        let flags = AblationFlags { include_example_test: false, ..Default::default() };
        let text = build_pr0(&ctx(flags, Some("In version P, variable n")));
        assert!(!text.contains("4 2 1 3"));
        assert!(!text.contains("TRIANGLE"));
        assert!(!text.contains("Execution difference"));
    }

    #[test]
    fn pr0_empty_diff_has_no_section() {
        let text = build_pr0(&ctx(AblationFlags::default(), Some("")));
        assert!(!text.contains("Execution difference"));
    }

    #[test]
    fn pr1_parts() {
        let input = TestInput::single_string("4 2 1 3", InputOrigin::LlmGenerated);
        let out = ExecutionOutcome::ok(vec!["TRIANGLE".into()]);
        let two = build_pr1(&input, &out, &out, None, AblationFlags::default()).unwrap();
        assert_eq!(two.trim_end().split("\n\n").count(), 2);
        assert!(two.contains("TRIANGLE") && two.contains("4 2 1 3"));
        let three = build_pr1(&input, &out, &out, Some("In version P, x"), AblationFlags::default()).unwrap();
        assert_eq!(three.trim_end().split("\n\n").count(), 3);
        let flags = AblationFlags { include_exec_data: false, ..Default::default() };
        let hidden = build_pr1(&input, &out, &out, Some("In version P, x"), flags).unwrap();
        assert!(!hidden.contains("In version P"));
    }

    #[test]
    fn pr1_rejects_differing_outcomes() {
        let input = TestInput::single_string("5 2 1 3", InputOrigin::LlmGenerated);
        let p = ExecutionOutcome::ok(vec!["SIGMENT".into()]);
        let q = ExecutionOutcome::ok(vec!["SEGMENT".into()]);
        assert!(matches!(
            build_pr1(&input, &p, &q, None, AblationFlags::default()),
            Err(PromptError::InternalContractViolation(_))
        ));
    }

    #[test]
    fn pr1_double_error_variant() {
        let input = TestInput::single_string("x", InputOrigin::LlmGenerated);
        let p = ExecutionOutcome::failed(RunStatus::RuntimeError, "ValueError");
        let q = ExecutionOutcome::failed(RunStatus::RuntimeError, "IndexError");
        let text = build_pr1(&input, &p, &q, None, AblationFlags::default()).unwrap();
        assert!(text.contains("caused an error in both P and Q"));
    }

    #[test]
    fn parse_examples() {
        let c = parse_candidate_tests("Here you go:\n```\n[\"5 2 1 3\"]\n```\n");
        assert_eq!(c.tests.len(), 1);
        assert_eq!(c.tests[0].args, vec![Value::Str("5 2 1 3".into())]);
        assert_eq!(c.tests[0].origin, InputOrigin::LlmGenerated);
        assert!(parse_candidate_tests("[\"5 2 1 3\"] without a fence").tests.is_empty());
        let dup = parse_candidate_tests("```json\n[1, 2]\n[1,2]\nnot json\n\n```");
        assert_eq!(dup.tests.len(), 1);
        assert_eq!(dup.skipped_lines, 1);
    }

    #[test]
    fn parse_unterminated_block_and_multiple_blocks() {
        let c = parse_candidate_tests("```\n[1]\n```\ntext [9]\n```python\n[2]\n[3");
        let keys: Vec<_> = c.tests.iter().map(|t| t.canonical_key()).collect();
        assert_eq!(keys, vec!["1", "2"]);
        assert_eq!(c.skipped_lines, 1);
    }

    #[test]
    fn parse_completions_dedups_across_samples() {
        let c = parse_completions(&["```\n[1]\n[2]\n```", "```\n[2]\n[3]\n```"]);
        let keys: Vec<_> = c.tests.iter().map(|t| t.canonical_key()).collect();
        assert_eq!(keys, vec!["1", "2", "3"]);
    }
}
