use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    check_context, ChatProvider, ChatReply, Conversation, Message, ProviderError, RequestLog,
    RequestRecord, SamplingParams, DEFAULT_CONTEXT_LIMIT,
};
use crate::tokens::{RegexTokenEstimator, TokenEstimator};

/// On-disk replay fixture: one file per conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayFixture {
    pub conversation_hash: String,
    /// Optional copy of the conversation, used to detect hash collisions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversation: Option<Vec<Message>>,
    pub completions: Vec<String>,
}

fn finish(
    log: &RequestLog,
    conv: &Conversation,
    params: &SamplingParams,
    result: Result<Vec<String>, ProviderError>,
) -> Result<ChatReply, ProviderError> {
    let n = params.n_samples as usize;
    let record = |returned, error: Option<String>| RequestRecord {
        conversation_hash: conv.hash(),
        requested: params.n_samples,
        returned,
        attempts: 1,
        error,
    };
    match result {
        Ok(mut completions) => {
            completions.truncate(n);
            log.push(record(completions.len(), None));
            let partial = completions.len() < n;
            if partial {
                log::warn!("partial batch: {} of {n} completions", completions.len());
            }
            Ok(ChatReply { completions, partial })
        }
        Err(e) => {
            log.push(record(0, Some(e.to_string())));
            Err(e)
        }
    }
}

/// Deterministic provider backed by a directory of fixture files.
pub struct ReplayProvider {
    fixtures: BTreeMap<String, ReplayFixture>,
    estimator: Box<dyn TokenEstimator>,
    context_limit: usize,
    log: RequestLog,
}

impl ReplayProvider {
    pub fn new(fixtures: impl IntoIterator<Item = ReplayFixture>) -> Self {
        Self {
            fixtures: fixtures.into_iter().map(|f| (f.conversation_hash.clone(), f)).collect(),
            estimator: Box::new(RegexTokenEstimator),
            context_limit: DEFAULT_CONTEXT_LIMIT,
            log: RequestLog::default(),
        }
    }

    /// Loads every `*.json` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, ProviderError> {
        let mut fixtures = Vec::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            let fixture: ReplayFixture = serde_json::from_str(&text).map_err(|e| {
                ProviderError::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}: {e}", path.display()),
                ))
            })?;
            fixtures.push(fixture);
        }
        Ok(Self::new(fixtures))
    }

    pub fn with_context_limit(mut self, limit: usize) -> Self {
        self.context_limit = limit;
        self
    }

    pub fn with_estimator(mut self, estimator: Box<dyn TokenEstimator>) -> Self {
        self.estimator = estimator;
        self
    }

    fn lookup(&self, conv: &Conversation) -> Result<Vec<String>, ProviderError> {
        check_context(conv, self.estimator.as_ref(), self.context_limit)?;
        let hash = conv.hash();
        let fixture = self.fixtures.get(&hash).ok_or_else(|| ProviderError::MissingFixture(hash.clone()))?;
        if let Some(recorded) = &fixture.conversation {
            if recorded.as_slice() != conv.messages() {
                return Err(ProviderError::FixtureCollision(hash));
            }
        }
        Ok(fixture.completions.clone())
    }
}

impl ChatProvider for ReplayProvider {
    fn chat(&self, conv: &Conversation, params: &SamplingParams) -> Result<ChatReply, ProviderError> {
        finish(&self.log, conv, params, self.lookup(conv))
    }

    fn requests(&self) -> Vec<RequestRecord> {
        self.log.records()
    }
}

/// Answers successive calls from a fixed queue of replies.
#[derive(Default)]
pub struct ScriptedProvider {
    replies: Mutex<VecDeque<Vec<String>>>,
    fallback: Option<Vec<String>>,
    log: RequestLog,
}

impl ScriptedProvider {
    pub fn new<I, R, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: Mutex::new(
                replies.into_iter().map(|r| r.into_iter().map(Into::into).collect()).collect(),
            ),
            fallback: None,
            log: RequestLog::default(),
        }
    }

    /// Reply used once the queue is empty.
    pub fn with_fallback<S: Into<String>>(mut self, reply: impl IntoIterator<Item = S>) -> Self {
        self.fallback = Some(reply.into_iter().map(Into::into).collect());
        self
    }
}

impl ChatProvider for ScriptedProvider {
    fn chat(&self, conv: &Conversation, params: &SamplingParams) -> Result<ChatReply, ProviderError> {
        let next = if conv.is_empty() {
            Err(ProviderError::InvalidConversation("empty conversation".into()))
        } else {
            let popped = self.replies.lock().expect("poisoned").pop_front();
            popped.or_else(|| self.fallback.clone()).ok_or(ProviderError::ScriptExhausted)
        };
        finish(&self.log, conv, params, next)
    }

    fn requests(&self) -> Vec<RequestRecord> {
        self.log.records()
    }
}

type ReplyFn = dyn Fn(&Conversation, &SamplingParams) -> Result<Vec<String>, ProviderError> + Send + Sync;

/// Computes replies with a closure.
pub struct FnProvider {
    reply: Box<ReplyFn>,
    log: RequestLog,
}

impl FnProvider {
    pub fn new<F>(reply: F) -> Self
    where
        F: Fn(&Conversation, &SamplingParams) -> Result<Vec<String>, ProviderError> + Send + Sync + 'static,
    {
        Self { reply: Box::new(reply), log: RequestLog::default() }
    }
}

impl ChatProvider for FnProvider {
    fn chat(&self, conv: &Conversation, params: &SamplingParams) -> Result<ChatReply, ProviderError> {
        finish(&self.log, conv, params, (self.reply)(conv, params))
    }

    fn requests(&self) -> Vec<RequestRecord> {
        self.log.records()
    }
}

/// Wraps a provider and keeps a replay fixture for every successful call.
pub struct RecordingProvider<P> {
    inner: P,
    fixtures: Mutex<BTreeMap<String, ReplayFixture>>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, fixtures: Mutex::default() }
    }

    pub fn fixtures(&self) -> Vec<ReplayFixture> {
        self.fixtures.lock().expect("poisoned").values().cloned().collect()
    }

    /// Writes one `<hash>.json` file per recorded conversation.
    pub fn save_dir(&self, dir: &Path) -> Result<(), ProviderError> {
        std::fs::create_dir_all(dir)?;
        for fixture in self.fixtures() {
            let path = dir.join(format!("{}.json", fixture.conversation_hash));
            let text = serde_json::to_string_pretty(&fixture).expect("fixture serializes");
            std::fs::write(path, text + "\n")?;
        }
        Ok(())
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn chat(&self, conv: &Conversation, params: &SamplingParams) -> Result<ChatReply, ProviderError> {
        let reply = self.inner.chat(conv, params)?;
        let fixture = ReplayFixture {
            conversation_hash: conv.hash(),
            conversation: Some(conv.messages().to_vec()),
            completions: reply.completions.clone(),
        };
        self.fixtures.lock().expect("poisoned").insert(fixture.conversation_hash.clone(), fixture);
        Ok(reply)
    }

    fn requests(&self) -> Vec<RequestRecord> {
        self.inner.requests()
    }
}
