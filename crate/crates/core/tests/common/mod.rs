#![allow(dead_code)]

pub mod golden;
pub mod oracle;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use diffexpose::runner::{Execution, Executor, HarnessRunner, RunError, RunRequest, TraceRecord};
use diffexpose::subject::{ExecutionOutcome, InputOrigin, ProgramPair, TestInput, Value, VarEvent};

pub const TRIANGLE_P: &str = r#"def main(*args):
    return_list = []
    x = args[0].split()
    x.sort()
    for i in range(len(x)):
        x[i] = int(x[i])
    x.sort()
    n = 100
    for j in range(2):
        if x[j] + x[j + 1] > x[j + 2]:
            n = 300
        elif x[j] + x[j + 1] == x[j + 2]:
            n = max(n, 200)
        else:
            n = max(n, 100)
    if n == 300:
        return_list.append('TRIANGLE')
    elif n == 200:
        return_list.append('SIGMENT')
    else:
        return_list.append('IMPOSSIBLE')
    return return_list
"#;

pub fn triangle_q() -> String {
    TRIANGLE_P.replace("SIGMENT", "SEGMENT")
}

pub const REVERSE: &str = r#"import re
def main(*args):
    return_list = []
    s1 = args[0]
    reg = re.compile('(h)+(e)+(l)+(l)+(o)+')
    li = reg.findall(s1)
    if (not li):
        return_list.append('NO')
    else:
        return_list.append('YES')
    return return_list
"#;

pub fn triangle_pair() -> ProgramPair {
    ProgramPair::new("cf-6A-triangle", "6A", TRIANGLE_P, triangle_q()).unwrap()
}

pub fn example() -> TestInput {
    TestInput::single_string("4 2 1 3", InputOrigin::Example)
}

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixtures_dir() -> PathBuf {
    manifest_dir().join("tests").join("fixtures")
}

pub fn python_available() -> bool {
    Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success())
}

pub fn mini_harness_path() -> PathBuf {
    manifest_dir().join("tests").join("support").join("mini_harness.py")
}

/// The Python test double, or `None` (with a note) when python3 is missing.
pub fn mini_harness() -> Option<HarnessRunner> {
    if !python_available() {
        eprintln!("python3 not found; skipping live-harness checks");
        return None;
    }
    Some(HarnessRunner::new(vec!["python3".into(), mini_harness_path().display().to_string()]).unwrap())
}

pub fn run_python(script: &Path) -> std::process::Output {
    Command::new("python3").arg(script).output().expect("python3 runs")
}

/// In-process model of the triangle pair: sorted lengths, classify, label.
pub fn triangle_model(arg: &str, segment_word: &str) -> (Vec<String>, Vec<(String, String)>) {
    let mut x: Vec<i64> = match arg.split_whitespace().map(str::parse).collect() {
        Ok(v) => v,
        Err(_) => return (Vec::new(), Vec::new()),
    };
    x.sort();
    let mut trace = vec![("n".to_string(), "100".to_string())];
    let mut n = 100;
    if x.len() >= 4 {
        for j in 0..2 {
            let next = if x[j] + x[j + 1] > x[j + 2] {
                300
            } else if x[j] + x[j + 1] == x[j + 2] {
                n.max(200)
            } else {
                n.max(100)
            };
            if next != n {
                trace.push(("n".into(), next.to_string()));
            }
            n = next;
        }
    }
    let word = match n {
        300 => "TRIANGLE",
        200 => segment_word,
        _ => "IMPOSSIBLE",
    };
    (vec![word.to_string()], trace)
}

/// Executes subjects with a Rust closure keyed on the request.
pub struct FnExecutor<F> {
    pub f: F,
    pub calls: AtomicUsize,
}

impl<F> FnExecutor<F>
where
    F: Fn(&RunRequest) -> Result<Execution, RunError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> Executor for FnExecutor<F>
where
    F: Fn(&RunRequest) -> Result<Execution, RunError> + Send + Sync,
{
    fn execute(&self, req: &RunRequest) -> Result<Execution, RunError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(req)
    }
}

pub fn first_string_arg(input: &TestInput) -> String {
    match input.args.first() {
        Some(Value::Str(s)) => s.clone(),
        Some(other) => format!("{other:?}"),
        None => String::new(),
    }
}

/// Executor for any pair whose sources are the triangle versions.
pub fn triangle_executor() -> FnExecutor<impl Fn(&RunRequest) -> Result<Execution, RunError> + Send + Sync> {
    FnExecutor::new(|req: &RunRequest| {
        let word = if req.source.contains("SIGMENT") { "SIGMENT" } else { "SEGMENT" };
        let (out, events) = triangle_model(&first_string_arg(&req.input), word);
        Ok(execution(out, &events, req.trace_enabled))
    })
}

pub fn execution(output: Vec<String>, events: &[(String, String)], traced: bool) -> Execution {
    let trace = traced.then(|| {
        TraceRecord::new(
            events
                .iter()
                .enumerate()
                .map(|(i, (v, r))| VarEvent { var_name: v.clone(), value_repr: r.clone(), seq: i as u64 })
                .collect(),
        )
    });
    Execution { outcome: ExecutionOutcome::ok(output), trace }
}

pub fn fenced(tests: &[&str]) -> String {
    format!("Here are some tests:\n```\n{}\n```\n", tests.join("\n"))
}
