//! LLM clients: a chat-completions HTTP client and a scripted mock.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::current_question;
use crate::http::{HttpError, JsonPoster, RetryPolicy};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("LLM transport failure: {0}")]
    Transport(#[from] HttpError),
    #[error("LLM response has no choices")]
    EmptyResponse,
    #[error("mock transcript: {0}")]
    Script(String),
}

/// Text completion with stop sequences. Implementations must be usable from
/// several orchestrations at once.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str, stop: &[String]) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpLlmConfig {
    /// Full URL of a chat/completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    stop: &'a [String],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

pub struct HttpLlm {
    config: HttpLlmConfig,
    poster: JsonPoster,
}

impl HttpLlm {
    pub fn new(config: HttpLlmConfig) -> Result<Self, LlmError> {
        let poster = JsonPoster::new(&config.endpoint, config.api_key_env.as_deref(), config.retry)?;
        Ok(Self { config, poster })
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, prompt: &str, stop: &[String]) -> Result<String, LlmError> {
        let request = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            stop,
            temperature: 0.0,
        };
        let resp: ChatResponse = self.poster.post(&request)?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or(LlmError::EmptyResponse)
    }
}

/// One scripted reply. `suffix` must match the end of the prompt; a `*` in it
/// matches any run of characters within a single line. When `question` is
/// set the rule only applies while that question is being answered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    pub suffix: String,
    pub response: String,
}

impl MockRule {
    pub fn global(suffix: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            question: None,
            suffix: suffix.into(),
            response: response.into(),
        }
    }

    pub fn scoped(question: impl Into<String>, suffix: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            question: Some(question.into()),
            suffix: suffix.into(),
            response: response.into(),
        }
    }

    fn matches(&self, prompt: &str) -> bool {
        match self.suffix.split_once('*') {
            None => prompt.ends_with(&self.suffix),
            Some((head, tail)) => {
                let Some(rest) = prompt.strip_suffix(tail) else {
                    return false;
                };
                // the wildcard covers rest[i..], which must stay on one line
                let line_start = rest.rfind('\n').map_or(0, |i| i + 1);
                (line_start..=rest.len())
                    .filter(|&i| rest.is_char_boundary(i))
                    .any(|i| rest[..i].ends_with(head))
            }
        }
    }
}

/// The on-disk mock transcript.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    /// Returned when no rule matches.
    #[serde(default = "default_fallback")]
    pub fallback: String,
    pub rules: Vec<MockRule>,
}

fn default_fallback() -> String {
    "I am not sure.".to_string()
}

impl MockScript {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Script(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| LlmError::Script(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LlmError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| LlmError::Script(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| LlmError::Script(e.to_string()))
    }
}

/// Deterministic responder driven by a [`MockScript`]. Rules scoped to the
/// current question are tried before global ones, each group in file order.
pub struct ScriptedLlm {
    script: MockScript,
    by_question: HashMap<String, Vec<usize>>,
    global: Vec<usize>,
}

impl ScriptedLlm {
    pub fn new(script: MockScript) -> Self {
        let mut by_question: HashMap<String, Vec<usize>> = HashMap::new();
        let mut global = Vec::new();
        for (i, rule) in script.rules.iter().enumerate() {
            match &rule.question {
                Some(q) => by_question.entry(q.trim().to_string()).or_default().push(i),
                None => global.push(i),
            }
        }
        Self {
            script,
            by_question,
            global,
        }
    }

    pub fn respond(&self, prompt: &str) -> &str {
        let scoped = current_question(prompt)
            .and_then(|q| self.by_question.get(q))
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        scoped
            .iter()
            .chain(&self.global)
            .map(|&i| &self.script.rules[i])
            .find(|r| r.matches(prompt))
            .map_or(self.script.fallback.as_str(), |r| r.response.as_str())
    }
}

impl LlmClient for ScriptedLlm {
    fn complete(&self, prompt: &str, stop: &[String]) -> Result<String, LlmError> {
        let mut out = self.respond(prompt);
        for s in stop.iter().filter(|s| !s.is_empty()) {
            if let Some(at) = out.find(s.as_str()) {
                out = &out[..at];
            }
        }
        Ok(out.to_string())
    }
}
