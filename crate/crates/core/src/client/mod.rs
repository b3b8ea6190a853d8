//! Outbound interface to multimodal model backends.

mod http;
mod limit;
mod mock;

pub use http::{scrub, HttpBackend, Vendor};
pub use limit::{RateLimited, TokenBucket};
pub use mock::{MockBackend, MockBehavior};

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Attachment, PromptBundle, PNG_MIME};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("request timed out after {0} ms")]
    Timeout(u64),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("attachment rejected: {0}")]
    AttachmentRejected(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {status}: {message}")]
    Http { status: u16, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend not configured: {0}")]
    NotConfigured(String),
}

impl ClientError {
    /// Worth retrying: timeouts, transport drops, rate limiting and 5xx.
    pub fn is_transient(&self) -> bool {
        match self {
            ClientError::Timeout(_) | ClientError::Transport(_) => true,
            ClientError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ClientError::Timeout(_) => "timeout",
            ClientError::Auth(_) => "auth",
            ClientError::Malformed(_) => "malformed_reply",
            ClientError::AttachmentRejected(_) => "attachment_rejected",
            ClientError::Transport(_) => "transport",
            ClientError::Http { .. } => "http",
            ClientError::InvalidRequest(_) => "invalid_request",
            ClientError::NotConfigured(_) => "not_configured",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub model_id: String,
    pub prompt: String,
    pub attachments: Vec<Attachment>,
    /// Generation settings passed through to the backend and recorded as-is.
    #[serde(default)]
    pub settings: BTreeMap<String, serde_json::Value>,
}

impl ModelRequest {
    pub fn new(
        model_id: impl Into<String>,
        prompt: impl Into<String>,
        attachments: Vec<Attachment>,
    ) -> Result<Self, ClientError> {
        let req = Self {
            model_id: model_id.into(),
            prompt: prompt.into(),
            attachments,
            settings: BTreeMap::new(),
        };
        req.validate()?;
        Ok(req)
    }

    pub fn from_bundle(model_id: &str, bundle: &PromptBundle) -> Result<Self, ClientError> {
        Self::new(model_id, bundle.text.clone(), bundle.attachments.clone())
    }

    pub fn with_settings(mut self, settings: BTreeMap<String, serde_json::Value>) -> Self {
        self.settings = settings;
        self
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.prompt.trim().is_empty() {
            return Err(ClientError::InvalidRequest("prompt is empty".into()));
        }
        for a in &self.attachments {
            if a.mime != PNG_MIME || !a.data.starts_with(PNG_SIGNATURE) {
                return Err(ClientError::AttachmentRejected(format!(
                    "{} is not a PNG image",
                    a.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    ContentFilter,
    Error,
    Other,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub latency_ms: u64,
}

/// A model backend. Implementations must be callable from many threads.
pub trait ModelClient: Send + Sync {
    fn model_id(&self) -> &str;
    fn send(&self, req: &ModelRequest) -> Result<ModelResponse, ClientError>;
}

impl<C: ModelClient + ?Sized> ModelClient for Box<C> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn send(&self, req: &ModelRequest) -> Result<ModelResponse, ClientError> {
        (**self).send(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub backoff_multiplier: f64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            initial_backoff_ms: 500,
            backoff_multiplier: 2.0,
            max_backoff_ms: 10_000,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_retries: u32) -> Self {
        Self {
            max_retries,
            initial_backoff_ms: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.initial_backoff_ms as f64 * self.backoff_multiplier.powi(retry as i32 - 1);
        Duration::from_millis(ms.min(self.max_backoff_ms as f64) as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryOutcome {
    pub result: Result<ModelResponse, ClientError>,
    pub attempts: u32,
}

/// Sends `req`, retrying transient errors with exponential backoff.
pub fn send_with_retry(client: &dyn ModelClient, req: &ModelRequest, policy: &RetryPolicy) -> RetryOutcome {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match client.send(req) {
            Err(e) if e.is_transient() && attempts <= policy.max_retries => {
                log::warn!(
                    "{}: attempt {attempts} failed ({}), retrying",
                    client.model_id(),
                    e.code()
                );
                let wait = policy.backoff(attempts);
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
            }
            result => return RetryOutcome { result, attempts },
        }
    }
}
