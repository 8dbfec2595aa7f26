//! OpenAI-compatible chat-completions client with bounded retries.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    check_context, ChatProvider, ChatReply, Conversation, Message, ProviderError, RequestLog,
    RequestRecord, SamplingParams, DEFAULT_CONTEXT_LIMIT, DEFAULT_MAX_RETRIES,
};
use crate::tokens::{RegexTokenEstimator, TokenEstimator};

pub const API_KEY_ENV: &str = "DIFFEXPOSE_API_KEY";
pub const API_BASE_ENV: &str = "DIFFEXPOSE_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub api_base: String,
    pub api_key: String,
    /// Total attempts per chat call.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub request_timeout: Duration,
    pub context_limit: usize,
}

impl HttpConfig {
    pub fn new(api_base: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            api_base: api_base.into(),
            api_key: api_key.into(),
            max_retries: DEFAULT_MAX_RETRIES,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            request_timeout: Duration::from_secs(120),
            context_limit: DEFAULT_CONTEXT_LIMIT,
        }
    }

    /// Reads `DIFFEXPOSE_API_KEY` (required) and `DIFFEXPOSE_API_BASE`.
    pub fn from_env() -> Result<Self, ProviderError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| ProviderError::Auth(format!("{API_KEY_ENV} is not set")))?;
        let base = std::env::var(API_BASE_ENV)
            .ok()
            .filter(|b| !b.trim().is_empty())
            .unwrap_or_else(|| DEFAULT_API_BASE.to_string());
        Ok(Self::new(base, key))
    }

    fn url(&self) -> String {
        let base = self.api_base.trim_end_matches('/');
        if base.ends_with("chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    n: u32,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Done(Vec<String>),
    Retry(Option<u16>, String),
    Fail(ProviderError),
}

pub struct HttpProvider {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    estimator: Box<dyn TokenEstimator>,
    log: RequestLog,
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| ProviderError::Http {
                status: None,
                message: e.to_string(),
                attempts: 0,
                retryable: false,
            })?;
        Ok(Self { config, client, estimator: Box::new(RegexTokenEstimator), log: RequestLog::default() })
    }

    pub fn with_estimator(mut self, estimator: Box<dyn TokenEstimator>) -> Self {
        self.estimator = estimator;
        self
    }

    fn attempt(&self, body: &ChatRequest<'_>) -> Attempt {
        let response = match self
            .client
            .post(self.config.url())
            .bearer_auth(&self.config.api_key)
            .json(body)
            .send()
        {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(None, e.to_string()),
        };
        let status = response.status();
        let code = status.as_u16();
        if code == 401 || code == 403 {
            return Attempt::Fail(ProviderError::Auth(format!("HTTP {code}")));
        }
        let text = response.text().unwrap_or_default();
        if code == 429 || status.is_server_error() {
            return Attempt::Retry(Some(code), text);
        }
        if !status.is_success() {
            if text.contains("context_length_exceeded") {
                return Attempt::Fail(ProviderError::ContextOverflow {
                    estimated: 0,
                    limit: self.config.context_limit,
                });
            }
            return Attempt::Fail(ProviderError::Http {
                status: Some(code),
                message: text,
                attempts: 1,
                retryable: false,
            });
        }
        match serde_json::from_str::<ChatResponse>(&text) {
            Ok(parsed) => Attempt::Done(
                parsed.choices.into_iter().map(|c| c.message.content.unwrap_or_default()).collect(),
            ),
            Err(e) => Attempt::Retry(Some(code), format!("malformed response: {e}")),
        }
    }
}

impl ChatProvider for HttpProvider {
    fn chat(&self, conv: &Conversation, params: &SamplingParams) -> Result<ChatReply, ProviderError> {
        let mut record = RequestRecord {
            conversation_hash: conv.hash(),
            requested: params.n_samples,
            returned: 0,
            attempts: 0,
            error: None,
        };
        if let Err(e) = check_context(conv, self.estimator.as_ref(), self.config.context_limit) {
            record.error = Some(e.to_string());
            self.log.push(record);
            return Err(e);
        }
        let body = ChatRequest {
            model: &params.model_id,
            messages: conv.messages(),
            temperature: params.temperature,
            n: params.n_samples,
            max_tokens: params.max_tokens,
        };
        let max_attempts = self.config.max_retries.max(1);
        let mut backoff = self.config.initial_backoff;
        let result = loop {
            record.attempts += 1;
            match self.attempt(&body) {
                Attempt::Done(completions) => break Ok(completions),
                Attempt::Fail(e) => break Err(e),
                Attempt::Retry(status, message) if record.attempts >= max_attempts => {
                    break Err(ProviderError::Http {
                        status,
                        message,
                        attempts: record.attempts,
                        retryable: true,
                    })
                }
                Attempt::Retry(status, message) => {
                    log::warn!("chat attempt {} failed ({status:?}): {message}", record.attempts);
                    std::thread::sleep(backoff);
                    backoff = (backoff * 2).min(self.config.max_backoff);
                }
            }
        };
        match result {
            Ok(completions) => {
                let n = params.n_samples as usize;
                let partial = completions.len() < n;
                if partial {
                    log::warn!("partial batch: {} of {n} completions", completions.len());
                }
                record.returned = completions.len();
                self.log.push(record);
                Ok(ChatReply { completions, partial })
            }
            Err(e) => {
                record.error = Some(e.to_string());
                self.log.push(record);
                Err(e)
            }
        }
    }

    fn requests(&self) -> Vec<RequestRecord> {
        self.log.records()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves canned HTTP responses, one per connection, recording request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (addr, hits, handle)
    }

    fn fast(base: &str) -> HttpConfig {
        let mut cfg = HttpConfig::new(base, "k");
        cfg.initial_backoff = Duration::from_millis(1);
        cfg.max_backoff = Duration::from_millis(4);
        cfg
    }

    #[test]
    fn sends_openai_shaped_request() {
        let ok = r#"{"choices":[{"message":{"content":"A"}},{"message":{"content":"B"}}]}"#;
        let (base, _, handle) = serve(vec![(200, ok.into())]);
        let provider = HttpProvider::new(fast(&base)).unwrap();
        let params = SamplingParams { n_samples: 2, ..Default::default() };
        let reply = provider.chat(&Conversation::from_user("hi"), &params).unwrap();
        assert_eq!(reply.completions, vec!["A", "B"]);
        assert!(!reply.partial);
        let body: serde_json::Value = serde_json::from_str(&handle.join().unwrap()[0]).unwrap();
        assert_eq!(body["n"], 2);
        assert_eq!(body["temperature"], 1.0);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["max_tokens"], 1024);
    }

    #[test]
    fn retries_are_bounded() {
        let (base, hits, handle) = serve(vec![(500, "{}".into()); 3]);
        let provider = HttpProvider::new(fast(&base)).unwrap();
        let err = provider.chat(&Conversation::from_user("hi"), &SamplingParams::default()).unwrap_err();
        assert!(matches!(err, ProviderError::Http { attempts: 3, retryable: true, .. }));
        handle.join().unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 3);
        let records = provider.requests();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].attempts, 3);
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let (base, hits, handle) = serve(vec![(401, "{}".into())]);
        let provider = HttpProvider::new(fast(&base)).unwrap();
        let err = provider.chat(&Conversation::from_user("hi"), &SamplingParams::default()).unwrap_err();
        assert!(matches!(err, ProviderError::Auth(_)));
        handle.join().unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn partial_batches_are_accepted() {
        let ok = r#"{"choices":[{"message":{"content":"only"}}]}"#;
        let (base, _, handle) = serve(vec![(503, "{}".into()), (200, ok.into())]);
        let provider = HttpProvider::new(fast(&base)).unwrap();
        let reply = provider.chat(&Conversation::from_user("hi"), &SamplingParams::default()).unwrap();
        assert_eq!(reply.completions, vec!["only"]);
        assert!(reply.partial);
        handle.join().unwrap();
        assert_eq!(provider.requests()[0].attempts, 2);
    }

    #[test]
    fn url_building() {
        assert_eq!(HttpConfig::new("http://h/v1/", "k").url(), "http://h/v1/chat/completions");
        assert_eq!(HttpConfig::new("http://h/x/chat/completions", "k").url(), "http://h/x/chat/completions");
    }
}
