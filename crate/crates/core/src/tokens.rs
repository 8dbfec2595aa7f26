//! Token counting for size limits and size metrics.

use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TokenError {
    #[error("token estimator unavailable: {0}")]
    Unavailable(String),
}

pub trait TokenEstimator: Send + Sync {
    fn count(&self, text: &str) -> Result<usize, TokenError>;
}

/// Counts word runs and individual punctuation characters.
#[derive(Debug, Clone, Copy, Default)]
pub struct RegexTokenEstimator;

fn segmenter() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+|[^\w\s]").expect("valid regex"))
}

impl TokenEstimator for RegexTokenEstimator {
    fn count(&self, text: &str) -> Result<usize, TokenError> {
        Ok(segmenter().find_iter(text).count())
    }
}

/// Delegates to an external command that reads text on stdin and prints a
/// single integer.
#[derive(Debug, Clone)]
pub struct CommandTokenEstimator {
    command: Vec<String>,
}

impl CommandTokenEstimator {
    pub fn new(command_line: &str) -> Result<Self, TokenError> {
        let command = shlex::split(command_line)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| TokenError::Unavailable(format!("cannot parse `{command_line}`")))?;
        Ok(Self { command })
    }
}

impl TokenEstimator for CommandTokenEstimator {
    fn count(&self, text: &str) -> Result<usize, TokenError> {
        let unavailable = |e: std::io::Error| TokenError::Unavailable(e.to_string());
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(unavailable)?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let payload = text.to_owned();
        let writer = std::thread::spawn(move || stdin.write_all(payload.as_bytes()));
        let out = child.wait_with_output().map_err(unavailable)?;
        let _ = writer.join();
        if !out.status.success() {
            return Err(TokenError::Unavailable(format!("tokenizer exited with {}", out.status)));
        }
        String::from_utf8_lossy(&out.stdout)
            .trim()
            .parse()
            .map_err(|_| TokenError::Unavailable("tokenizer printed a non-integer".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regex_segmentation() {
        let est = RegexTokenEstimator;
        assert_eq!(est.count("").unwrap(), 0);
        assert_eq!(est.count("x = input().split()").unwrap(), 9);
        assert_eq!(est.count("4 2 1 3").unwrap(), 4);
    }

    #[test]
    fn command_estimator() {
        let est = CommandTokenEstimator::new("sh -c 'wc -w'").unwrap();
        assert_eq!(est.count("a b c").unwrap(), 3);
        let missing = CommandTokenEstimator::new("/nonexistent/tokenizer").unwrap();
        assert!(matches!(missing.count("a"), Err(TokenError::Unavailable(_))));
    }
}
