//! Chat-completion providers.
//!
//! [`HttpProvider`] talks to an OpenAI-compatible endpoint. [`ReplayProvider`]
//! answers from fixture files keyed by a hash of the conversation, and
//! [`ScriptedProvider`] / [`FnProvider`] serve tests.

mod http;
mod replay;

use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tokens::TokenEstimator;

pub use http::{HttpConfig, HttpProvider, API_BASE_ENV, API_KEY_ENV, DEFAULT_API_BASE};
pub use replay::{FnProvider, RecordingProvider, ReplayFixture, ReplayProvider, ScriptedProvider};

pub const DEFAULT_CONTEXT_LIMIT: usize = 16_000;
pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider request failed after {attempts} attempt(s): {message}")]
    Http { status: Option<u16>, message: String, attempts: u32, retryable: bool },
    #[error("conversation needs ~{estimated} tokens, over the {limit}-token context limit")]
    ContextOverflow { estimated: usize, limit: usize },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("no replay fixture for conversation {0}")]
    MissingFixture(String),
    #[error("replay fixture {0} was recorded for a different conversation")]
    FixtureCollision(String),
    #[error("scripted provider has no reply left")]
    ScriptExhausted,
    #[error("invalid conversation: {0}")]
    InvalidConversation(String),
    #[error("token estimation failed: {0}")]
    Tokens(#[from] crate::tokens::TokenError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// Ordered chat history; never holds two consecutive assistant messages.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    messages: Vec<Message>,
}

impl Conversation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_user(content: impl Into<String>) -> Self {
        let mut conv = Self::new();
        conv.messages.push(Message { role: Role::User, content: content.into() });
        conv
    }

    pub fn push(&mut self, role: Role, content: impl Into<String>) -> Result<(), ProviderError> {
        if role == Role::Assistant
            && self.messages.last().is_some_and(|m| m.role == Role::Assistant)
        {
            return Err(ProviderError::InvalidConversation(
                "two consecutive assistant messages".into(),
            ));
        }
        self.messages.push(Message { role, content: content.into() });
        Ok(())
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn is_strict_prefix_of(&self, other: &Conversation) -> bool {
        self.len() < other.len() && other.messages[..self.len()] == self.messages[..]
    }

    /// SHA-256 over the JSON serialization of all messages.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.messages).expect("messages serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn estimate_tokens(&self, estimator: &dyn TokenEstimator) -> Result<usize, ProviderError> {
        let mut total = 0;
        for m in &self.messages {
            total += estimator.count(&m.content)? + 4;
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub n_samples: u32,
    pub model_id: String,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            n_samples: 10,
            model_id: "gpt-3.5-turbo-0125".into(),
            max_tokens: 1024,
        }
    }
}

impl SamplingParams {
    pub fn single(&self) -> Self {
        Self { n_samples: 1, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub completions: Vec<String>,
    /// Fewer completions than requested came back.
    pub partial: bool,
}

/// One record per `chat` call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub conversation_hash: String,
    pub requested: u32,
    pub returned: usize,
    pub attempts: u32,
    pub error: Option<String>,
}

#[derive(Debug, Default)]
pub struct RequestLog {
    records: Mutex<Vec<RequestRecord>>,
}

impl RequestLog {
    pub fn push(&self, record: RequestRecord) {
        self.records.lock().expect("poisoned").push(record);
    }

    pub fn records(&self) -> Vec<RequestRecord> {
        self.records.lock().expect("poisoned").clone()
    }
}

pub trait ChatProvider: Send + Sync {
    /// Requests `params.n_samples` completions continuing `conv`.
    fn chat(&self, conv: &Conversation, params: &SamplingParams) -> Result<ChatReply, ProviderError>;

    fn requests(&self) -> Vec<RequestRecord>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for &P {
    fn chat(&self, conv: &Conversation, params: &SamplingParams) -> Result<ChatReply, ProviderError> {
        (**self).chat(conv, params)
    }

    fn requests(&self) -> Vec<RequestRecord> {
        (**self).requests()
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<P> {
    fn chat(&self, conv: &Conversation, params: &SamplingParams) -> Result<ChatReply, ProviderError> {
        (**self).chat(conv, params)
    }

    fn requests(&self) -> Vec<RequestRecord> {
        (**self).requests()
    }
}

pub(crate) fn check_context(
    conv: &Conversation,
    estimator: &dyn TokenEstimator,
    limit: usize,
) -> Result<(), ProviderError> {
    if conv.is_empty() {
        return Err(ProviderError::InvalidConversation("empty conversation".into()));
    }
    let estimated = conv.estimate_tokens(estimator)?;
    if estimated > limit {
        return Err(ProviderError::ContextOverflow { estimated, limit });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_consecutive_assistant_messages() {
        let mut conv = Conversation::from_user("hi");
        conv.push(Role::Assistant, "a").unwrap();
        assert!(conv.push(Role::Assistant, "b").is_err());
        conv.push(Role::User, "c").unwrap();
        conv.push(Role::User, "d").unwrap();
        assert_eq!(conv.len(), 4);
    }

    #[test]
    fn prefix_and_hash() {
        let a = Conversation::from_user("x");
        let mut b = a.clone();
        b.push(Role::Assistant, "y").unwrap();
        assert!(a.is_strict_prefix_of(&b));
        assert!(!b.is_strict_prefix_of(&a));
        assert!(!a.is_strict_prefix_of(&a));
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), Conversation::from_user("x").hash());
    }

    #[test]
    fn defaults() {
        let p = SamplingParams::default();
        assert_eq!((p.temperature, p.n_samples, p.max_tokens), (1.0, 10, 1024));
        assert_eq!(p.single().n_samples, 1);
    }
}
