//! Blocking JSON-over-HTTP POST with bounded retries, shared by the remote
//! embedding and LLM clients.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: usize },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("http status {status}")]
    Status { status: u16 },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingApiKey(String),
}

/// Retry schedule: `retries` extra attempts after the first, sleeping
/// `backoff_ms * 2^k` before retry `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub retries: usize,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            backoff_ms: 250,
            timeout_ms: 30_000,
        }
    }
}

pub(crate) struct JsonPoster {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    policy: RetryPolicy,
}

impl JsonPoster {
    pub fn new(
        url: &str,
        api_key_env: Option<&str>,
        policy: RetryPolicy,
    ) -> Result<Self, HttpError> {
        let api_key = match api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| HttpError::MissingApiKey(var.to_string()))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(policy.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            url: url.to_string(),
            api_key,
            policy,
        })
    }

    pub fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, body: &B) -> Result<R, HttpError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post_once(body) {
                Ok(resp) => return Ok(resp),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Transient(kind)) => {
                    if attempt > self.policy.retries {
                        return Err(match kind {
                            Transient::Timeout => HttpError::Timeout { attempts: attempt },
                            Transient::Other(message) => HttpError::Transport {
                                attempts: attempt,
                                message,
                            },
                        });
                    }
                    let wait = self.policy.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                    tracing::warn!(attempt, wait_ms = wait, url = %self.url, "transient HTTP failure, retrying");
                    std::thread::sleep(Duration::from_millis(wait));
                }
            }
        }
    }

    fn post_once<B: Serialize, R: for<'de> Deserialize<'de>>(&self, body: &B) -> Result<R, Attempt> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(classify)?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Attempt::Transient(Transient::Other(format!("http status {status}"))));
        }
        if status >= 400 {
            return Err(Attempt::Fatal(HttpError::Status { status }));
        }
        resp.body_mut().read_json::<R>().map_err(|e| match classify(e) {
            Attempt::Transient(t) => Attempt::Transient(t),
            Attempt::Fatal(HttpError::Protocol(m)) => Attempt::Fatal(HttpError::Protocol(m)),
            Attempt::Fatal(other) => Attempt::Fatal(HttpError::Protocol(other.to_string())),
        })
    }
}

enum Transient {
    Timeout,
    Other(String),
}

enum Attempt {
    Transient(Transient),
    Fatal(HttpError),
}

fn classify(err: ureq::Error) -> Attempt {
    match err {
        ureq::Error::Timeout(_) => Attempt::Transient(Transient::Timeout),
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => {
            Attempt::Transient(Transient::Timeout)
        }
        ureq::Error::Io(e) => Attempt::Transient(Transient::Other(e.to_string())),
        ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            Attempt::Transient(Transient::Other(err.to_string()))
        }
        ureq::Error::StatusCode(status) => Attempt::Fatal(HttpError::Status { status }),
        ureq::Error::Json(e) => Attempt::Fatal(HttpError::Protocol(e.to_string())),
        other => Attempt::Fatal(HttpError::Protocol(other.to_string())),
    }
}
