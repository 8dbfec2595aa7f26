//! Configuration merging and provider/runner construction.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, ValueEnum};
use diffexpose::engine::EngineConfig;
use diffexpose::provider::{
    ChatProvider, HttpConfig, HttpProvider, ProviderError, RecordingProvider, ReplayProvider,
};
use diffexpose::runner::{Executor, HarnessRunner, RecordedRunner};
use serde::Deserialize;

use crate::{fail, EXIT_AUTH, EXIT_INPUT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Http,
    Replay,
}

/// Provider settings accepted in the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub kind: Option<ProviderKind>,
    pub replay_dir: Option<PathBuf>,
    pub api_base: Option<String>,
    pub max_retries: Option<u32>,
    pub context_limit: Option<usize>,
}

/// The config file: engine settings at the top level plus a `provider` object.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    #[serde(flatten)]
    pub engine: EngineConfig,
    pub provider: ProviderSettings,
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EngineFlags {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<u32>,
    /// Completions requested per iteration.
    #[arg(long)]
    pub samples: Option<u32>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub no_description: bool,
    #[arg(long)]
    pub no_example_test: bool,
    #[arg(long)]
    pub no_exec_data: bool,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Fixture directory for the replay provider.
    #[arg(long)]
    pub replay_dir: Option<PathBuf>,
    /// Save a replay fixture for every provider call into this directory.
    #[arg(long)]
    pub record_dir: Option<PathBuf>,
    /// Answer runs from a recorded harness fixture file instead of spawning the harness.
    #[arg(long)]
    pub harness_replay: Option<PathBuf>,
    /// Seconds per subject run.
    #[arg(long)]
    pub timeout: Option<f64>,
}

pub struct Setup {
    pub engine: EngineConfig,
    pub workers: Option<usize>,
    pub provider: Arc<dyn ChatProvider>,
    recorder: Option<Arc<RecordingProvider<Arc<dyn ChatProvider>>>>,
    record_dir: Option<PathBuf>,
    pub runner: Arc<dyn Executor>,
}

impl Setup {
    /// Writes recorded provider fixtures, if recording was requested.
    pub fn save_recordings(&self) -> anyhow::Result<()> {
        if let (Some(rec), Some(dir)) = (&self.recorder, &self.record_dir) {
            std::fs::create_dir_all(dir)?;
            rec.save_dir(dir).with_context(|| format!("saving fixtures to {}", dir.display()))?;
        }
        Ok(())
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_INPUT, format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(EXIT_INPUT, format!("config {}: {e}", path.display())))
}

pub fn provider_error(err: ProviderError) -> anyhow::Error {
    match err {
        ProviderError::Auth(msg) => fail(EXIT_AUTH, format!("authentication failed: {msg}")),
        other => fail(EXIT_INPUT, other.to_string()),
    }
}

pub fn build(flags: &EngineFlags) -> anyhow::Result<Setup> {
    let file = load_config(flags.config.as_deref())?;
    let mut engine = file.engine;
    if let Some(n) = flags.iterations {
        engine.max_iterations = n;
    }
    if let Some(n) = flags.samples {
        engine.sampling.n_samples = n;
    }
    if let Some(t) = flags.temperature {
        engine.sampling.temperature = t;
    }
    if let Some(m) = &flags.model {
        engine.sampling.model_id = m.clone();
    }
    if let Some(t) = flags.timeout {
        engine.subject_timeout = t;
    }
    engine.ablation.include_description &= !flags.no_description;
    engine.ablation.include_example_test &= !flags.no_example_test;
    engine.ablation.include_exec_data &= !flags.no_exec_data;
    engine.validate().map_err(|e| fail(EXIT_INPUT, format!("invalid configuration: {e}")))?;

    let settings = file.provider;
    let kind = flags.provider.or(settings.kind).unwrap_or(ProviderKind::Http);
    let base: Arc<dyn ChatProvider> = match kind {
        ProviderKind::Replay => {
            let dir = flags
                .replay_dir
                .clone()
                .or(settings.replay_dir)
                .ok_or_else(|| fail(EXIT_INPUT, "the replay provider needs --replay-dir"))?;
            let mut replay = ReplayProvider::load_dir(&dir)
                .map_err(|e| fail(EXIT_INPUT, format!("loading {}: {e}", dir.display())))?;
            if let Some(limit) = settings.context_limit {
                replay = replay.with_context_limit(limit);
            }
            Arc::new(replay)
        }
        ProviderKind::Http => {
            let mut cfg = HttpConfig::from_env().map_err(provider_error)?;
            if let Some(base) = settings.api_base {
                if std::env::var(diffexpose::provider::API_BASE_ENV).is_err() {
                    cfg.api_base = base;
                }
            }
            if let Some(n) = settings.max_retries {
                cfg.max_retries = n;
            }
            if let Some(limit) = settings.context_limit {
                cfg.context_limit = limit;
            }
            Arc::new(HttpProvider::new(cfg).map_err(provider_error)?)
        }
    };
    let (provider, recorder): (Arc<dyn ChatProvider>, _) = match &flags.record_dir {
        Some(_) => {
            let rec = Arc::new(RecordingProvider::new(base));
            (rec.clone(), Some(rec))
        }
        None => (base, None),
    };

    let runner: Arc<dyn Executor> = match &flags.harness_replay {
        Some(path) => Arc::new(
            RecordedRunner::load(path).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))?,
        ),
        None => Arc::new(harness()?),
    };
    Ok(Setup {
        engine,
        workers: file.workers,
        provider,
        recorder,
        record_dir: flags.record_dir.clone(),
        runner,
    })
}

pub fn harness() -> anyhow::Result<HarnessRunner> {
    HarnessRunner::from_env().map_err(|e| fail(EXIT_INPUT, e.to_string()))
}
