//! Runner behaviour against the Python test harness.

mod common;

use std::time::Duration;

use common::*;
use diffexpose::runner::{run_on_pair, Executor, RunRequest};
use diffexpose::subject::{InputOrigin, ProgramPair, RunStatus, TestInput};

const T: Duration = Duration::from_secs(10);

#[test]
fn triangle_outputs_and_trace() {
    let Some(h) = mini_harness() else { return };
    let pair = triangle_pair();
    let run = run_on_pair(&h, &pair, &example(), true, T);
    let (p, q) = run.both().expect("both versions ran");
    assert_eq!(p.outcome.output_lines, ["TRIANGLE"]);
    assert_eq!(q.outcome.output_lines, ["TRIANGLE"]);
    assert!(!run.differ);
    for exec in [p, q] {
        let n: Vec<&str> = exec
            .trace
            .as_ref()
            .unwrap()
            .events
            .iter()
            .filter(|e| e.var_name == "n")
            .map(|e| e.value_repr.as_str())
            .collect();
        assert_eq!(n, ["100", "200", "300"]);
    }

    let det = TestInput::single_string("5 2 1 3", InputOrigin::LlmGenerated);
    let run = run_on_pair(&h, &pair, &det, false, T);
    assert!(run.differ);
    assert_eq!(run.p.unwrap().outcome.output_lines, ["SIGMENT"]);
    assert_eq!(run.q.unwrap().outcome.output_lines, ["SEGMENT"]);
}

#[test]
fn reverse_yes_and_no() {
    let Some(h) = mini_harness() else { return };
    let req = RunRequest::new(REVERSE, TestInput::single_string("hheelloo", InputOrigin::Manual), true, T).unwrap();
    let exec = h.execute(&req).unwrap();
    assert_eq!(exec.outcome.status, RunStatus::Ok);
    assert_eq!(exec.outcome.output_lines, ["YES"]);
    assert!(exec.trace.unwrap().events.iter().any(|e| e.var_name == "li"));

    let req = RunRequest::new(REVERSE, TestInput::single_string("hlelo", InputOrigin::Manual), false, T).unwrap();
    let exec = h.execute(&req).unwrap();
    assert_eq!(exec.outcome.output_lines, ["NO"]);
    assert!(exec.trace.is_none());
}

#[test]
fn empty_output_and_runtime_error() {
    let Some(h) = mini_harness() else { return };
    let empty = RunRequest::new("def f(*a):\n    return []\n", TestInput::zero_argument(InputOrigin::Manual, "[]"), false, T)
        .unwrap();
    let exec = h.execute(&empty).unwrap();
    assert_eq!(exec.outcome.status, RunStatus::Ok);
    assert!(exec.outcome.output_lines.is_empty());

    let boom = RunRequest::new("def f(*a):\n    return [1/0]\n", TestInput::single_string("x", InputOrigin::Manual), false, T)
        .unwrap();
    let exec = h.execute(&boom).unwrap();
    assert_eq!(exec.outcome.status, RunStatus::RuntimeError);
    assert!(exec.outcome.error_detail.contains("ZeroDivisionError"));
}

#[test]
fn repeated_runs_are_identical_and_reap_children() {
    let Some(h) = mini_harness() else { return };
    let req = RunRequest::new(TRIANGLE_P, example(), true, T).unwrap();
    let first = h.execute(&req).unwrap();
    for _ in 0..3 {
        assert!(h.execute(&req).unwrap().same_observation(&first));
    }
    assert_eq!(h.accounting().spawned(), 4);
    assert_eq!(h.accounting().live(), 0);
}

#[test]
fn infinite_loop_times_out() {
    let Some(h) = mini_harness() else { return };
    let req = RunRequest::new(
        "def f(*a):\n    while True:\n        pass\n",
        TestInput::single_string("x", InputOrigin::Manual),
        false,
        Duration::from_millis(500),
    )
    .unwrap();
    let exec = h.execute(&req).unwrap();
    assert_eq!(exec.outcome.status, RunStatus::Timeout);
    assert_eq!(h.accounting().live(), 0);
}

#[test]
fn tool_modes_round_trip() {
    let Some(h) = mini_harness() else { return };
    let script = "s = input()\nprint(s)\n";
    let function = h.transform(script).unwrap();
    assert!(function.contains("args[0]"));
    assert!(function.contains("return_list.append"));
    assert_eq!(h.complexity("def f(*a):\n    return []\n").unwrap(), 1);
    assert_eq!(h.complexity(TRIANGLE_P).unwrap(), 7);
    let err = h.transform("for _ in range(int(input())):\n    print(input())\n").unwrap_err();
    assert!(err.to_string().contains("loop"), "{err}");
}

#[test]
fn transformed_script_runs_like_the_original() {
    let Some(h) = mini_harness() else { return };
    let script = "s1 = input()\nimport re\nli = re.findall('(h)+(e)+(l)+(l)+(o)+', s1)\nprint('YES' if li else 'NO')\n";
    let function = h.transform(script).unwrap();
    let pair = ProgramPair::new("t", "t", function.clone(), function).unwrap();
    let run = run_on_pair(&h, &pair, &TestInput::single_string("hhello", InputOrigin::Manual), false, T);
    assert_eq!(run.p.unwrap().outcome.output_lines, ["YES"]);
}
