//! Emitted unittest modules, executed with python3.

mod common;

use std::time::Duration;

use common::*;
use diffexpose::emitter::{emit_verified, render_unit_test, write_unit_test, EmitError};
use diffexpose::subject::{InputOrigin, ProgramPair, TestInput};

fn run_module(pair: &ProgramPair, det: &TestInput) -> std::process::Output {
    let dir = tempfile::tempdir().unwrap();
    let path = write_unit_test(dir.path(), &pair.pair_id, &render_unit_test(pair, det), false).unwrap();
    run_python(&path)
}

fn det() -> TestInput {
    TestInput::single_string("5 2 1 3", InputOrigin::LlmGenerated)
}

#[test]
fn triangle_module_passes_and_equal_versions_fail() {
    if !python_available() {
        return;
    }
    let out = run_module(&triangle_pair(), &det());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let equal = ProgramPair::new("equal", "6A", TRIANGLE_P, TRIANGLE_P).unwrap();
    let out = run_module(&equal, &det());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("AssertionError"));
}

#[test]
fn one_sided_crash_is_a_clean_pass() {
    if !python_available() {
        return;
    }
    let pair = ProgramPair::new(
        "crash",
        "x",
        "def f(*a):\n    return [str(int(a[0]))]\n",
        "def g(*a):\n    return [a[0]]\n",
    )
    .unwrap();
    let out = run_module(&pair, &TestInput::single_string("abc", InputOrigin::Manual));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let both_crash = ProgramPair::new(
        "both",
        "x",
        "def f(*a):\n    return [str(int(a[0]))]\n",
        "def g(*a):\n    return [1/0]\n",
    )
    .unwrap();
    let out = run_module(&both_crash, &TestInput::single_string("abc", InputOrigin::Manual));
    assert!(!out.status.success());
}

#[test]
fn emit_verified_reruns_before_emitting() {
    let Some(h) = mini_harness() else { return };
    let text = emit_verified(&triangle_pair(), &det(), &h, Duration::from_secs(10)).unwrap();
    assert!(text.contains(r#"self.assertNotEqual(_call(fp, "5 2 1 3"), _call(fq, "5 2 1 3"))"#));
    let err = emit_verified(&triangle_pair(), &example(), &h, Duration::from_secs(10)).unwrap_err();
    assert!(matches!(err, EmitError::RefusedEmit(_)));
}
