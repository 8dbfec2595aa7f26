//! Domain model for program pairs, test inputs and execution outcomes.
//!
//! The comparison semantics in [`outputs_differ`] define what counts as a
//! difference-exposing test throughout the crate.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unsupported value: {0}")]
    UnsupportedValue(String),
    #[error("program pair `{0}` has an empty {1} source")]
    EmptySource(String, &'static str),
    #[error("test input has no arguments and is not flagged as a zero-argument input")]
    EmptyArgs,
    #[error("invalid test input text: {0}")]
    InvalidInput(String),
}

/// Two versions of one program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramPair {
    pub pair_id: String,
    pub problem_id: String,
    pub p_source: String,
    pub q_source: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ProgramPair {
    pub fn new(
        pair_id: impl Into<String>,
        problem_id: impl Into<String>,
        p_source: impl Into<String>,
        q_source: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let pair = Self {
            pair_id: pair_id.into(),
            problem_id: problem_id.into(),
            p_source: p_source.into(),
            q_source: q_source.into(),
            metadata: BTreeMap::new(),
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.p_source.is_empty() {
            return Err(ModelError::EmptySource(self.pair_id.clone(), "P"));
        }
        if self.q_source.is_empty() {
            return Err(ModelError::EmptySource(self.pair_id.clone(), "Q"));
        }
        Ok(())
    }

    pub fn source(&self, version: Version) -> &str {
        match version {
            Version::P => &self.p_source,
            Version::Q => &self.q_source,
        }
    }
}

/// Which side of a pair a run or a difference belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Version {
    P,
    Q,
}

impl Version {
    pub fn other(self) -> Self {
        match self {
            Version::P => Version::Q,
            Version::Q => Version::P,
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Version::P => "P",
            Version::Q => "Q",
        })
    }
}

/// A primitive argument value, or a flat list of primitives.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
}

impl Value {
    fn is_primitive(&self) -> bool {
        !matches!(self, Value::List(_))
    }

    /// Converts a JSON value, rejecting objects, nulls, non-i64 integers and
    /// lists nested deeper than one level.
    pub fn from_json(json: &serde_json::Value) -> Result<Self, ModelError> {
        Self::from_json_at_depth(json, 0)
    }

    fn from_json_at_depth(json: &serde_json::Value, depth: usize) -> Result<Self, ModelError> {
        use serde_json::Value as J;
        match json {
            J::Bool(b) => Ok(Value::Bool(*b)),
            J::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Value::Int(i))
                } else if n.is_u64() {
                    Err(ModelError::UnsupportedValue(format!("integer {n} out of range")))
                } else {
                    n.as_f64()
                        .map(Value::Float)
                        .ok_or_else(|| ModelError::UnsupportedValue(n.to_string()))
                }
            }
            J::String(s) => Ok(Value::Str(s.clone())),
            J::Array(items) if depth == 0 => items
                .iter()
                .map(|item| Self::from_json_at_depth(item, depth + 1))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::List),
            J::Array(_) => Err(ModelError::UnsupportedValue("nested list".into())),
            J::Null => Err(ModelError::UnsupportedValue("null".into())),
            J::Object(_) => Err(ModelError::UnsupportedValue("object".into())),
        }
    }

    pub fn to_json(&self) -> Result<serde_json::Value, ModelError> {
        use serde_json::Value as J;
        Ok(match self {
            Value::Int(i) => J::from(*i),
            Value::Float(f) => serde_json::Number::from_f64(*f)
                .map(J::Number)
                .ok_or_else(|| ModelError::UnsupportedValue(format!("non-finite float {f}")))?,
            Value::Bool(b) => J::Bool(*b),
            Value::Str(s) => J::String(s.clone()),
            Value::List(items) => {
                if items.iter().any(|v| !v.is_primitive()) {
                    return Err(ModelError::UnsupportedValue("nested list".into()));
                }
                J::Array(items.iter().map(Value::to_json).collect::<Result<_, _>>()?)
            }
        })
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json()
            .map_err(serde::ser::Error::custom)?
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let json = serde_json::Value::deserialize(deserializer)?;
        Value::from_json(&json).map_err(serde::de::Error::custom)
    }
}

/// Renders a value so that equal values give equal strings and distinct
/// values give distinct strings.
///
/// Floats always carry a `.` or an exponent so they never collide with
/// integers; strings use JSON quoting; lists are `[a, b]`.
pub fn canonical_value_repr(value: &Value) -> Result<String, ModelError> {
    match value {
        Value::List(items) => {
            let mut parts = Vec::with_capacity(items.len());
            for item in items {
                if !item.is_primitive() {
                    return Err(ModelError::UnsupportedValue("nested list".into()));
                }
                parts.push(canonical_value_repr(item)?);
            }
            Ok(format!("[{}]", parts.join(", ")))
        }
        Value::Int(i) => Ok(i.to_string()),
        Value::Float(f) if !f.is_finite() => {
            Err(ModelError::UnsupportedValue(format!("non-finite float {f}")))
        }
        // Debug formatting is the shortest round-trip form and keeps ".0".
        Value::Float(f) => Ok(format!("{f:?}")),
        Value::Bool(true) => Ok("True".into()),
        Value::Bool(false) => Ok("False".into()),
        Value::Str(s) => Ok(serde_json::to_string(s).expect("strings always serialize")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputOrigin {
    Example,
    LlmGenerated,
    Manual,
}

/// An ordered argument list fed to both versions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestInput {
    pub args: Vec<Value>,
    pub origin: InputOrigin,
    pub raw_text: String,
    #[serde(default)]
    pub zero_argument: bool,
}

impl TestInput {
    pub fn new(
        args: Vec<Value>,
        origin: InputOrigin,
        raw_text: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if args.is_empty() {
            return Err(ModelError::EmptyArgs);
        }
        args.iter().try_for_each(|a| canonical_value_repr(a).map(drop))?;
        Ok(Self { args, origin, raw_text: raw_text.into(), zero_argument: false })
    }

    pub fn zero_argument(origin: InputOrigin, raw_text: impl Into<String>) -> Self {
        Self { args: Vec::new(), origin, raw_text: raw_text.into(), zero_argument: true }
    }

    /// Parses a JSON array of argument values, e.g. `["4 2 1 3"]`.
    pub fn parse_json_array(text: &str, origin: InputOrigin) -> Result<Self, ModelError> {
        let json: serde_json::Value =
            serde_json::from_str(text.trim()).map_err(|e| ModelError::InvalidInput(e.to_string()))?;
        let serde_json::Value::Array(items) = json else {
            return Err(ModelError::InvalidInput("expected a JSON array of arguments".into()));
        };
        let args = items
            .iter()
            .map(|item| Value::from_json_at_depth(item, 0))
            .collect::<Result<Vec<_>, _>>()?;
        if args.is_empty() {
            Ok(Self::zero_argument(origin, text.trim()))
        } else {
            Self::new(args, origin, text.trim())
        }
    }

    /// Convenience constructor for single-string inputs such as `"4 2 1 3"`.
    pub fn single_string(arg: impl Into<String>, origin: InputOrigin) -> Self {
        let arg = arg.into();
        let raw = serde_json::to_string(&[&arg]).expect("strings always serialize");
        Self { args: vec![Value::Str(arg)], origin, raw_text: raw, zero_argument: false }
    }

    /// Canonical rendering of the argument list, used as an identity key.
    pub fn canonical_key(&self) -> String {
        self.args
            .iter()
            .map(|a| canonical_value_repr(a).unwrap_or_else(|_| format!("{a:?}")))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn same_args(&self, other: &TestInput) -> bool {
        self.canonical_key() == other.canonical_key()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    RuntimeError,
    Timeout,
    HarnessError,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: RunStatus,
    pub output_lines: Vec<String>,
    pub error_detail: String,
    /// Seconds.
    pub wall_time: f64,
}

impl ExecutionOutcome {
    pub fn ok(output_lines: Vec<String>) -> Self {
        Self { status: RunStatus::Ok, output_lines, error_detail: String::new(), wall_time: 0.0 }
    }

    /// A non-ok outcome. Panics if `status` is `Ok`.
    pub fn failed(status: RunStatus, error_detail: impl Into<String>) -> Self {
        assert!(status != RunStatus::Ok, "failed outcome needs a non-ok status");
        Self { status, output_lines: Vec::new(), error_detail: error_detail.into(), wall_time: 0.0 }
    }

    pub fn with_wall_time(mut self, seconds: f64) -> Self {
        self.wall_time = seconds;
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// Equality of everything observable except wall time.
    pub fn same_observation(&self, other: &Self) -> bool {
        self.status == other.status
            && self.output_lines == other.output_lines
            && self.error_detail == other.error_detail
    }
}

/// True iff the two runs are functionally distinguishable: their statuses
/// differ, or both succeeded with different output lines.
///
/// Two failed runs with the same status never differ, whatever their error
/// text says.
pub fn outputs_differ(a: &ExecutionOutcome, b: &ExecutionOutcome) -> bool {
    if a.status != b.status {
        return true;
    }
    a.status == RunStatus::Ok && a.output_lines != b.output_lines
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarEvent {
    pub var_name: String,
    pub value_repr: String,
    pub seq: u64,
}

/// A value taken by a common variable in one version that the other
/// version never produces for that variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionDifference {
    pub version: Version,
    pub var_name: String,
    pub value_repr: String,
    pub seq: u64,
}
