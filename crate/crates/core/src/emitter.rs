//! Renders a verified difference-exposing test as a standalone Python
//! `unittest` module.

use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::engine::{DetResult, DetStatus};
use crate::runner::{run_on_pair, Executor};
use crate::subject::{canonical_value_repr, ProgramPair, TestInput, Value};

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("refusing to emit: {0}")]
    RefusedEmit(String),
    #[error("{0} already exists (pass overwrite to replace it)")]
    Exists(PathBuf),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Python literal for a value. Strings use JSON escapes, which Python accepts.
fn python_literal(value: &Value) -> String {
    match value {
        Value::List(items) => {
            format!("[{}]", items.iter().map(python_literal).collect::<Vec<_>>().join(", "))
        }
        other => canonical_value_repr(other).expect("validated on construction"),
    }
}

fn python_string(text: &str) -> String {
    serde_json::to_string(text).expect("strings serialize")
}

fn test_name(pair_id: &str) -> String {
    let mut name: String = pair_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    if name.is_empty() || name.starts_with(|c: char| c.is_ascii_digit()) {
        name.insert(0, 'p');
    }
    name
}

/// Renders the module for a DET the caller has already verified.
pub fn render_unit_test(pair: &ProgramPair, det: &TestInput) -> String {
    let call_args = det.args.iter().map(python_literal).collect::<Vec<_>>().join(", ");
    let mut out = String::new();
    out += &format!("# Difference-exposing test for pair {}.\n", pair.pair_id);
    out += &format!("# Input: {}\n", crate::prompt::render_test_input(det));
    out += "import unittest\n\n";
    out += &format!("P_SOURCE = {}\n\n", python_string(&pair.p_source));
    out += &format!("Q_SOURCE = {}\n\n", python_string(&pair.q_source));
    out += r#"
class _Raised:
    """Stands in for the result of a call that raised."""

    def __init__(self, exc):
        self.name = type(exc).__name__

    def __eq__(self, other):
        return isinstance(other, _Raised)

    def __hash__(self):
        return 0

    def __repr__(self):
        return "<raised %s>" % self.name


def _load(source, label):
    namespace = {"__name__": label}
    exec(compile(source, "<%s>" % label, "exec"), namespace)
    functions = [
        value
        for value in namespace.values()
        if callable(value) and getattr(getattr(value, "__code__", None), "co_filename", None) == "<%s>" % label
    ]
    if len(functions) != 1:
        raise RuntimeError("%s must define exactly one top-level function" % label)
    return functions[0]


def _call(function, *args):
    try:
        return function(*args)
    except Exception as exc:
        return _Raised(exc)


fp = _load(P_SOURCE, "version_p")
fq = _load(Q_SOURCE, "version_q")

"#;
    out += "\nclass DifferenceExposingTest(unittest.TestCase):\n";
    out += &format!("    def test_{}(self):\n", test_name(&pair.pair_id));
    out += &format!("        self.assertNotEqual(_call(fp, {call_args}), _call(fq, {call_args}))\n");
    out += "\n\nif __name__ == \"__main__\":\n    unittest.main()\n";
    out
}

/// Emits the test for a successful engine result.
pub fn emit_unit_test(pair: &ProgramPair, result: &DetResult) -> Result<String, EmitError> {
    match (&result.status, &result.det) {
        (DetStatus::Success, Some(det)) => Ok(render_unit_test(pair, det)),
        _ => Err(EmitError::RefusedEmit(format!(
            "pair {} has no verified difference-exposing test",
            pair.pair_id
        ))),
    }
}

/// Re-executes `det` on both versions and emits only if they still differ.
pub fn emit_verified<E: Executor + ?Sized>(
    pair: &ProgramPair,
    det: &TestInput,
    runner: &E,
    timeout: Duration,
) -> Result<String, EmitError> {
    let run = run_on_pair(runner, pair, det, false, timeout);
    if let Some(e) = run.error() {
        return Err(EmitError::RefusedEmit(format!("could not verify: {e}")));
    }
    if !run.differ {
        return Err(EmitError::RefusedEmit(format!(
            "input {} does not expose a difference",
            det.raw_text
        )));
    }
    Ok(render_unit_test(pair, det))
}

pub fn test_file_name(pair_id: &str) -> String {
    format!("{pair_id}_det_test.py")
}

/// Writes the module into `dir` as `<pair_id>_det_test.py`.
pub fn write_unit_test(
    dir: &Path,
    pair_id: &str,
    text: &str,
    overwrite: bool,
) -> Result<PathBuf, EmitError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(test_file_name(pair_id));
    if path.exists() && !overwrite {
        return Err(EmitError::Exists(path));
    }
    std::fs::write(&path, text)?;
    Ok(path)
}
