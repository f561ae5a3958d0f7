use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{StudentLevel, TokenUsage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Checks the shape every backend expects: a leading system message and
/// non-empty system/user content.
pub fn validate_messages(messages: &[ChatMessage]) -> Result<()> {
    match messages.first() {
        None => return Err(Error::InvalidInput("no messages to send".into())),
        Some(m) if m.role != Role::System => {
            return Err(Error::InvalidInput(
                "conversation must start with a system message".into(),
            ))
        }
        _ => {}
    }
    if let Some((i, _)) = messages
        .iter()
        .enumerate()
        .find(|(_, m)| m.role != Role::Assistant && m.content.trim().is_empty())
    {
        return Err(Error::InvalidInput(format!(
            "message {i} has empty content"
        )));
    }
    Ok(())
}

pub const DEFAULT_TEMPERATURE: f64 = 0.4;
pub const DEFAULT_TOP_P: f64 = 0.95;
pub const DEFAULT_MAX_TOKENS: u32 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub n: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            max_tokens: DEFAULT_MAX_TOKENS,
            n: 1,
        }
    }
}

impl SamplingParams {
    pub fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "top_p {} must lie in (0, 1]",
                self.top_p
            )));
        }
        if self.max_tokens == 0 || self.n == 0 {
            return Err(Error::InvalidConfig(
                "max_tokens and n must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub texts: Vec<String>,
    pub usage: TokenUsage,
}

/// Which part of the protocol a model call serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallRole {
    Tutor,
    Student,
    Manager,
    Tracer,
    Pretest,
    Posttest,
}

impl CallRole {
    pub fn as_str(self) -> &'static str {
        match self {
            CallRole::Tutor => "tutor",
            CallRole::Student => "student",
            CallRole::Manager => "manager",
            CallRole::Tracer => "tracer",
            CallRole::Pretest => "pretest",
            CallRole::Posttest => "posttest",
        }
    }
}

impl fmt::Display for CallRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CallRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tutor" => CallRole::Tutor,
            "student" => CallRole::Student,
            "manager" => CallRole::Manager,
            "tracer" => CallRole::Tracer,
            "pretest" => CallRole::Pretest,
            "posttest" => CallRole::Posttest,
            other => return Err(Error::InvalidConfig(format!("unknown role `{other}`"))),
        })
    }
}

/// Metadata attached to each call. Remote backends ignore it; the scripted
/// backend uses it to pick fixtures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallContext {
    pub role: CallRole,
    /// Dialogue turn the call belongs to (0 for the pre-test).
    pub turn: usize,
    pub task_id: String,
    pub level: Option<StudentLevel>,
}

impl CallContext {
    pub fn new(role: CallRole, turn: usize, task_id: impl Into<String>) -> Self {
        Self {
            role,
            turn,
            task_id: task_id.into(),
            level: None,
        }
    }

    pub fn with_level(mut self, level: StudentLevel) -> Self {
        self.level = Some(level);
        self
    }
}

/// Word count times 4/3, rounded up. Used when a provider reports no usage.
pub fn estimate_tokens(text: &str) -> u64 {
    let words = text.split_whitespace().count() as u64;
    (words * 4).div_ceil(3)
}

pub fn estimate_usage(messages: &[ChatMessage], texts: &[String]) -> TokenUsage {
    TokenUsage {
        prompt_tokens: messages.iter().map(|m| estimate_tokens(&m.content)).sum(),
        completion_tokens: texts.iter().map(|t| estimate_tokens(t)).sum(),
        estimated: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let p = SamplingParams::default();
        assert_eq!(
            (p.temperature, p.top_p, p.max_tokens, p.n),
            (0.4, 0.95, 300, 1)
        );
        p.validate().unwrap();
    }

    #[test]
    fn param_validation() {
        assert!(SamplingParams {
            top_p: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SamplingParams {
            temperature: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SamplingParams::default().with_n(0).validate().is_err());
    }

    #[test]
    fn message_validation() {
        assert!(validate_messages(&[]).is_err());
        assert!(validate_messages(&[ChatMessage::user("hi")]).is_err());
        assert!(validate_messages(&[ChatMessage::system("s"), ChatMessage::user(" ")]).is_err());
        validate_messages(&[ChatMessage::system("s"), ChatMessage::assistant("")]).unwrap();
    }

    #[test]
    fn token_estimate() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("one two three"), 4);
        assert_eq!(estimate_tokens("a b c d e f"), 8);
        assert_eq!(estimate_tokens("a"), 2);
    }
}
