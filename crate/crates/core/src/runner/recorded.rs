//! Recorded harness transcripts, replayed through the same protocol decoder.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{decode, request_json, Execution, Executor, HarnessRunner, RawResponse, RunError, RunRequest, DEFAULT_EVENT_CAP};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedEntry {
    /// SHA-256 of the exact request JSON sent to the harness.
    pub request_sha256: String,
    pub request: String,
    pub exit_code: Option<i32>,
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    #[serde(default)]
    pub timed_out: bool,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct FixtureFile {
    entries: Vec<RecordedEntry>,
}

fn request_hash(request: &str) -> String {
    hex::encode(Sha256::digest(request.as_bytes()))
}

/// Answers run requests from recorded harness output.
#[derive(Debug, Default)]
pub struct RecordedRunner {
    entries: BTreeMap<String, RecordedEntry>,
    event_cap: usize,
}

impl RecordedRunner {
    pub fn new(entries: impl IntoIterator<Item = RecordedEntry>) -> Self {
        Self {
            entries: entries.into_iter().map(|e| (e.request_sha256.clone(), e)).collect(),
            event_cap: DEFAULT_EVENT_CAP,
        }
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)?;
        let file: FixtureFile = serde_json::from_str(&text)
            .map_err(|e| RunError::InvalidRequest(format!("{}: {e}", path.display())))?;
        Ok(Self::new(file.entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Executor for RecordedRunner {
    fn execute(&self, req: &RunRequest) -> Result<Execution, RunError> {
        let json = request_json(req)?;
        let hash = request_hash(&json);
        let entry = self
            .entries
            .get(&hash)
            .filter(|e| e.request == json)
            .ok_or_else(|| RunError::MissingRecording(json.chars().take(200).collect()))?;
        let raw = RawResponse {
            exit_code: entry.exit_code,
            stdout: entry.stdout.clone(),
            stderr: entry.stderr.clone(),
            timed_out: entry.timed_out,
            wall_time: Duration::ZERO,
        };
        Ok(decode(&raw, req.trace_enabled, self.event_cap))
    }
}

/// Runs a live harness and keeps every transcript for later replay.
#[derive(Debug)]
pub struct RecordingRunner {
    inner: HarnessRunner,
    entries: Mutex<BTreeMap<String, RecordedEntry>>,
}

impl RecordingRunner {
    pub fn new(inner: HarnessRunner) -> Self {
        Self { inner, entries: Mutex::default() }
    }

    pub fn entries(&self) -> Vec<RecordedEntry> {
        self.entries.lock().expect("poisoned").values().cloned().collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        let file = FixtureFile { entries: self.entries() };
        let text = serde_json::to_string_pretty(&file).expect("fixtures serialize");
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

impl Executor for RecordingRunner {
    fn execute(&self, req: &RunRequest) -> Result<Execution, RunError> {
        let json = request_json(req)?;
        let raw = self.inner.invoke_raw(&json, req.timeout, req.workdir.as_ref())?;
        let entry = RecordedEntry {
            request_sha256: request_hash(&json),
            request: json,
            exit_code: raw.exit_code,
            stdout: raw.stdout.clone(),
            stderr: raw.stderr.clone(),
            timed_out: raw.timed_out,
        };
        self.entries.lock().expect("poisoned").insert(entry.request_sha256.clone(), entry);
        Ok(decode(&raw, req.trace_enabled, self.inner.event_cap()))
    }
}
