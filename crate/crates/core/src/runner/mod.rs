//! Executes subject programs through the harness in child processes.

pub mod protocol;
mod recorded;

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subject::{
    outputs_differ, ExecutionOutcome, ModelError, ProgramPair, RunStatus, TestInput, VarEvent,
    Version,
};
pub use protocol::{Mode, ProtocolError};
pub use recorded::{RecordedRunner, RecordingRunner, RecordedEntry};

pub const HARNESS_CMD_ENV: &str = "DIFFEXPOSE_HARNESS_CMD";
pub const DEFAULT_HARNESS_CMD: &str = "diffexpose-harness";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_EVENT_CAP: usize = 100_000;
pub const DEFAULT_GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum RunError {
    #[error("harness unavailable: {0}")]
    HarnessUnavailable(String),
    #[error("invalid run request: {0}")]
    InvalidRequest(String),
    #[error("no recorded harness response for {0}")]
    MissingRecording(String),
    #[error("tool request failed: {0}")]
    ToolFailed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One execution of one version on one input.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub source: String,
    pub input: TestInput,
    pub trace_enabled: bool,
    pub timeout: Duration,
    /// Parent directory for the per-run temporary directory; system temp when unset.
    pub workdir: Option<PathBuf>,
}

impl RunRequest {
    pub fn new(
        source: impl Into<String>,
        input: TestInput,
        trace_enabled: bool,
        timeout: Duration,
    ) -> Result<Self, RunError> {
        if timeout.is_zero() {
            return Err(RunError::InvalidRequest("timeout must be positive".into()));
        }
        Ok(Self { source: source.into(), input, trace_enabled, timeout, workdir: None })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub events: Vec<VarEvent>,
    pub truncated: bool,
}

impl TraceRecord {
    pub fn new(events: Vec<VarEvent>) -> Self {
        Self { events, truncated: false }
    }
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub outcome: ExecutionOutcome,
    pub trace: Option<TraceRecord>,
}

impl Execution {
    /// Deterministic-subject equality: outcome (minus wall time) and trace.
    pub fn same_observation(&self, other: &Execution) -> bool {
        self.outcome.same_observation(&other.outcome) && self.trace == other.trace
    }
}

/// Anything that can run a subject version on an input.
pub trait Executor: Send + Sync {
    fn execute(&self, req: &RunRequest) -> Result<Execution, RunError>;
}

impl<E: Executor + ?Sized> Executor for &E {
    fn execute(&self, req: &RunRequest) -> Result<Execution, RunError> {
        (**self).execute(req)
    }
}

impl<E: Executor + ?Sized> Executor for Arc<E> {
    fn execute(&self, req: &RunRequest) -> Result<Execution, RunError> {
        (**self).execute(req)
    }
}

/// Live child-process accounting.
#[derive(Debug, Default)]
pub struct SpawnAccounting {
    spawned: AtomicUsize,
    reaped: AtomicUsize,
}

impl SpawnAccounting {
    pub fn spawned(&self) -> usize {
        self.spawned.load(Ordering::SeqCst)
    }

    pub fn live(&self) -> usize {
        self.spawned() - self.reaped.load(Ordering::SeqCst)
    }
}

/// Raw result of one harness invocation, before protocol decoding.
#[derive(Debug, Clone)]
pub struct RawResponse {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
    pub wall_time: Duration,
}

/// Runs the harness command once per request.
#[derive(Debug, Clone)]
pub struct HarnessRunner {
    command: Vec<String>,
    grace: Duration,
    event_cap: usize,
    accounting: Arc<SpawnAccounting>,
}

impl HarnessRunner {
    pub fn new(command: Vec<String>) -> Result<Self, RunError> {
        if command.is_empty() {
            return Err(RunError::HarnessUnavailable("empty harness command".into()));
        }
        Ok(Self {
            command,
            grace: DEFAULT_GRACE,
            event_cap: DEFAULT_EVENT_CAP,
            accounting: Arc::default(),
        })
    }

    /// Parses a shell-style command line, e.g. `python3 -m harness`.
    pub fn from_command_line(line: &str) -> Result<Self, RunError> {
        let parts = shlex::split(line)
            .ok_or_else(|| RunError::HarnessUnavailable(format!("cannot parse `{line}`")))?;
        Self::new(parts)
    }

    /// Uses `DIFFEXPOSE_HARNESS_CMD` when set, the default harness otherwise.
    pub fn from_env() -> Result<Self, RunError> {
        match std::env::var(HARNESS_CMD_ENV) {
            Ok(line) if !line.trim().is_empty() => Self::from_command_line(&line),
            _ => Self::new(vec![DEFAULT_HARNESS_CMD.to_string()]),
        }
    }

    pub fn with_event_cap(mut self, cap: usize) -> Self {
        self.event_cap = cap;
        self
    }

    pub fn with_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    pub fn event_cap(&self) -> usize {
        self.event_cap
    }

    pub fn accounting(&self) -> &SpawnAccounting {
        &self.accounting
    }

    /// Spawns the harness, feeds `request_json`, and collects its output.
    /// The child is killed once `timeout` elapses.
    pub fn invoke_raw(
        &self,
        request_json: &str,
        timeout: Duration,
        workdir: Option<&PathBuf>,
    ) -> Result<RawResponse, RunError> {
        let dir = match workdir {
            Some(parent) => tempfile::Builder::new().prefix("diffexpose-").tempdir_in(parent)?,
            None => tempfile::Builder::new().prefix("diffexpose-").tempdir()?,
        };
        let start = Instant::now();
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .current_dir(dir.path())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
                    RunError::HarnessUnavailable(format!("{}: {e}", self.command[0]))
                }
                _ => RunError::Io(e),
            })?;
        self.accounting.spawned.fetch_add(1, Ordering::SeqCst);

        let stdin = child.stdin.take().expect("stdin is piped");
        let payload = request_json.as_bytes().to_vec();
        let writer = thread::spawn(move || {
            let mut stdin = stdin;
            // The subject may exit without reading; a broken pipe is not our error.
            let _ = stdin.write_all(&payload);
        });
        let stdout_rx = drain(child.stdout.take().expect("stdout is piped"));
        let stderr_rx = drain(child.stderr.take().expect("stderr is piped"));

        let deadline = start + timeout;
        let mut poll = Duration::from_millis(1);
        let (status, timed_out) = loop {
            match child.try_wait() {
                Ok(Some(status)) => break (Some(status), false),
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let status = child.wait().ok();
                    break (status, true);
                }
                Ok(None) => {
                    thread::sleep(poll.min(deadline.saturating_duration_since(Instant::now())));
                    poll = (poll * 2).min(Duration::from_millis(20));
                }
                Err(e) => {
                    let _ = child.kill();
                    let _ = child.wait();
                    self.accounting.reaped.fetch_add(1, Ordering::SeqCst);
                    return Err(RunError::Io(e));
                }
            }
        };
        self.accounting.reaped.fetch_add(1, Ordering::SeqCst);
        let wall_time = start.elapsed();
        let _ = writer.join();

        let stdout = stdout_rx.recv_timeout(self.grace).unwrap_or_default();
        let stderr = stderr_rx.recv_timeout(self.grace).unwrap_or_default();
        Ok(RawResponse {
            exit_code: status.and_then(|s| s.code()),
            stdout: String::from_utf8_lossy(&stdout).into_owned(),
            stderr: String::from_utf8_lossy(&stderr).into_owned(),
            timed_out,
            wall_time,
        })
    }

    /// Sends a `transform` or `complexity` request and returns its output lines.
    pub fn tool_request(&self, source: &str, mode: Mode) -> Result<Vec<String>, RunError> {
        let json = protocol::Request::tool(source, mode)
            .to_json()
            .map_err(|e| RunError::InvalidRequest(e.to_string()))?;
        let raw = self.invoke_raw(&json, DEFAULT_TIMEOUT, None)?;
        if raw.timed_out {
            return Err(RunError::ToolFailed(format!("{mode:?} request timed out")));
        }
        let response = protocol::parse_response(&raw.stdout, raw.exit_code, &raw.stderr, 0)
            .map_err(|e| RunError::ToolFailed(e.to_string()))?;
        if response.status != RunStatus::Ok {
            return Err(RunError::ToolFailed(response.error));
        }
        Ok(response.output)
    }

    /// Script-to-function transformation performed by the harness.
    pub fn transform(&self, script: &str) -> Result<String, RunError> {
        let mut out = self.tool_request(script, Mode::Transform)?;
        if out.len() != 1 {
            return Err(RunError::ToolFailed(format!(
                "transform returned {} outputs, expected 1",
                out.len()
            )));
        }
        Ok(out.remove(0))
    }

    pub fn complexity(&self, source: &str) -> Result<u32, RunError> {
        let out = self.tool_request(source, Mode::Complexity)?;
        out.first()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| RunError::ToolFailed(format!("bad complexity output {out:?}")))
    }
}

fn drain<R: Read + Send + 'static>(mut reader: R) -> mpsc::Receiver<Vec<u8>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = reader.read_to_end(&mut buf);
        let _ = tx.send(buf);
    });
    rx
}

/// Maps a raw harness response onto an execution.
pub(crate) fn decode(raw: &RawResponse, trace_enabled: bool, event_cap: usize) -> Execution {
    let wall = raw.wall_time.as_secs_f64();
    if raw.timed_out {
        return Execution {
            outcome: ExecutionOutcome::failed(RunStatus::Timeout, "timed out").with_wall_time(wall),
            trace: None,
        };
    }
    match protocol::parse_response(&raw.stdout, raw.exit_code, &raw.stderr, event_cap) {
        Ok(response) => {
            let trace = trace_enabled
                .then_some(TraceRecord { events: response.events, truncated: response.truncated });
            let outcome = ExecutionOutcome {
                status: response.status,
                output_lines: response.output,
                error_detail: response.error,
                wall_time: wall,
            };
            Execution { outcome, trace }
        }
        Err(e) => Execution {
            outcome: ExecutionOutcome::failed(RunStatus::HarnessError, e.to_string())
                .with_wall_time(wall),
            trace: None,
        },
    }
}

pub(crate) fn request_json(req: &RunRequest) -> Result<String, RunError> {
    protocol::Request::run(&req.source, &req.input.args, req.trace_enabled)
        .to_json()
        .map_err(|e| RunError::InvalidRequest(e.to_string()))
}

impl Executor for HarnessRunner {
    fn execute(&self, req: &RunRequest) -> Result<Execution, RunError> {
        let json = request_json(req)?;
        let raw = self.invoke_raw(&json, req.timeout, req.workdir.as_ref())?;
        Ok(decode(&raw, req.trace_enabled, self.event_cap))
    }
}

/// Both versions' runs on one input.
#[derive(Debug)]
pub struct PairRunResult {
    pub p: Result<Execution, RunError>,
    pub q: Result<Execution, RunError>,
    /// Only true when both runs completed and their outcomes differ.
    pub differ: bool,
}

impl PairRunResult {
    pub fn get(&self, version: Version) -> &Result<Execution, RunError> {
        match version {
            Version::P => &self.p,
            Version::Q => &self.q,
        }
    }

    /// First runner error, if either side failed to execute at all.
    pub fn error(&self) -> Option<&RunError> {
        self.p.as_ref().err().or_else(|| self.q.as_ref().err())
    }

    pub fn both(&self) -> Option<(&Execution, &Execution)> {
        match (&self.p, &self.q) {
            (Ok(p), Ok(q)) => Some((p, q)),
            _ => None,
        }
    }
}

/// Runs `input` on both versions independently.
pub fn run_on_pair<E: Executor + ?Sized>(
    executor: &E,
    pair: &ProgramPair,
    input: &TestInput,
    trace: bool,
    timeout: Duration,
) -> PairRunResult {
    let run = |version: Version| {
        let req = RunRequest::new(pair.source(version), input.clone(), trace, timeout)?;
        executor.execute(&req)
    };
    let p = run(Version::P);
    let q = run(Version::Q);
    let differ = match (&p, &q) {
        (Ok(a), Ok(b)) => outputs_differ(&a.outcome, &b.outcome),
        _ => false,
    };
    PairRunResult { p, q, differ }
}
