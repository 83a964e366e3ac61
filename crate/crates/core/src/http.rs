//! Blocking JSON-over-HTTP with bounded retries, shared by the remote chat and
//! image backends.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// The backend is the offline stand-in and never answers.
    #[error("backend is offline")]
    Offline,
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("unexpected backend response: {0}")]
    BadResponse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            initial_backoff_ms: 250,
            max_backoff_ms: 4000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

pub struct JsonClient {
    client: reqwest::blocking::Client,
    endpoint: String,
    retry: RetryPolicy,
}

impl JsonClient {
    pub fn new(endpoint: &str, timeout: Duration, retry: RetryPolicy) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Unavailable {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            retry,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// POSTs `body` and returns the parsed JSON response. Connection errors,
    /// timeouts, 429 and 5xx are retried; other statuses fail immediately.
    pub fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let outcome = self.client.post(&self.endpoint).json(body).send();
            let retriable_msg = match outcome {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp
                            .json::<Value>()
                            .map_err(|e| BackendError::BadResponse(e.to_string()));
                    }
                    if status.as_u16() != 429 && !status.is_server_error() {
                        return Err(BackendError::Unavailable {
                            attempts: attempt,
                            message: format!("HTTP {status}"),
                        });
                    }
                    format!("HTTP {status}")
                }
                Err(e) => e.to_string(),
            };
            if attempt > self.retry.retries {
                return Err(BackendError::Unavailable {
                    attempts: attempt,
                    message: retriable_msg,
                });
            }
            tracing::debug!(endpoint = %self.endpoint, attempt, error = %retriable_msg, "retrying");
            thread::sleep(self.retry.delay(attempt - 1));
        }
    }
}

/// Looks up `pointer` (RFC 6901, e.g. `/choices/0/message/content`) and
/// requires a string there.
pub fn extract_string(value: &Value, pointer: &str) -> Result<String, BackendError> {
    value
        .pointer(pointer)
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| BackendError::BadResponse(format!("no string at {pointer}")))
}
