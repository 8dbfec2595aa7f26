//! Harness wire protocol.
//!
//! One JSON request object on stdin; JSON lines on stdout: zero or more
//! `{"event": {...}}` lines followed by exactly one `{"result": {...}}` line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subject::{RunStatus, Value, VarEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Run,
    Transform,
    Complexity,
}

/// Field order is part of the protocol.
#[derive(Debug, Clone, Serialize)]
pub struct Request<'a> {
    pub source: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub args: Option<&'a [Value]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<bool>,
    pub mode: Mode,
}

impl<'a> Request<'a> {
    pub fn run(source: &'a str, args: &'a [Value], trace: bool) -> Self {
        Self { source, args: Some(args), trace: Some(trace), mode: Mode::Run }
    }

    pub fn tool(source: &'a str, mode: Mode) -> Self {
        Self { source, args: None, trace: None, mode }
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string(self)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("line {line}: not valid JSON: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: expected an `event` or `result` object")]
    UnknownLine { line: usize },
    #[error("line {line}: event seq {seq} does not increase (previous {previous})")]
    NonMonotoneSeq { line: usize, seq: u64, previous: u64 },
    #[error("line {line}: output after the terminal result line")]
    TrailingOutput { line: usize },
    #[error("no terminal result line")]
    MissingResult,
    #[error("unknown result status `{0}`")]
    UnknownStatus(String),
    #[error("harness exited with code {code:?}: {stderr}")]
    BadExit { code: Option<i32>, stderr: String },
}

#[derive(Debug, Deserialize)]
struct EventBody {
    var: String,
    value: String,
    seq: u64,
}

#[derive(Debug, Deserialize)]
struct ResultBody {
    status: String,
    #[serde(default)]
    output: Vec<String>,
    #[serde(default)]
    error: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Line {
    Event { event: EventBody },
    Result { result: ResultBody },
}

/// Decoded harness response.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub status: RunStatus,
    pub output: Vec<String>,
    pub error: String,
    pub events: Vec<VarEvent>,
    pub truncated: bool,
}

/// Decodes a complete harness stdout. Events past `event_cap` are dropped
/// and the response is marked truncated.
pub fn parse_response(
    stdout: &str,
    exit_code: Option<i32>,
    stderr: &str,
    event_cap: usize,
) -> Result<Response, ProtocolError> {
    if exit_code != Some(0) {
        return Err(ProtocolError::BadExit {
            code: exit_code,
            stderr: stderr.chars().take(2000).collect(),
        });
    }
    let mut events = Vec::new();
    let mut truncated = false;
    let mut last_seq: Option<u64> = None;
    let mut result: Option<ResultBody> = None;

    for (idx, raw) in stdout.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if result.is_some() {
            return Err(ProtocolError::TrailingOutput { line });
        }
        let json: serde_json::Value = serde_json::from_str(raw)
            .map_err(|e| ProtocolError::Malformed { line, reason: e.to_string() })?;
        match serde_json::from_value::<Line>(json) {
            Ok(Line::Event { event }) => {
                if let Some(previous) = last_seq {
                    if event.seq <= previous {
                        return Err(ProtocolError::NonMonotoneSeq { line, seq: event.seq, previous });
                    }
                }
                last_seq = Some(event.seq);
                if events.len() < event_cap {
                    events.push(VarEvent {
                        var_name: event.var,
                        value_repr: event.value,
                        seq: event.seq,
                    });
                } else {
                    truncated = true;
                }
            }
            Ok(Line::Result { result: body }) => result = Some(body),
            Err(_) => return Err(ProtocolError::UnknownLine { line }),
        }
    }

    let body = result.ok_or(ProtocolError::MissingResult)?;
    let status = match body.status.as_str() {
        "ok" => RunStatus::Ok,
        "runtime_error" => RunStatus::RuntimeError,
        other => return Err(ProtocolError::UnknownStatus(other.to_string())),
    };
    let error = if status == RunStatus::Ok {
        if !body.error.is_empty() {
            log::warn!("harness reported ok with error text; ignoring it");
        }
        String::new()
    } else {
        body.error
    };
    Ok(Response { status, output: body.output, error, events, truncated })
}
