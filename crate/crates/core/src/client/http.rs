//! HTTPS adapters for hosted model APIs. Request building and reply parsing
//! are pure functions so they can be tested without a network.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ClientError, FinishReason, ModelClient, ModelRequest, ModelResponse, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vendor {
    Openai,
    Anthropic,
    Gemini,
}

impl Vendor {
    pub fn default_key_env(&self) -> &'static str {
        match self {
            Vendor::Openai => "OPENAI_API_KEY",
            Vendor::Anthropic => "ANTHROPIC_API_KEY",
            Vendor::Gemini => "GEMINI_API_KEY",
        }
    }

    pub fn default_endpoint(&self, model_id: &str) -> String {
        match self {
            Vendor::Openai => "https://api.openai.com/v1/chat/completions".into(),
            Vendor::Anthropic => "https://api.anthropic.com/v1/messages".into(),
            Vendor::Gemini => format!(
                "https://generativelanguage.googleapis.com/v1beta/models/{model_id}:generateContent"
            ),
        }
    }

    pub fn headers(&self, api_key: &str) -> Vec<(&'static str, String)> {
        let mut h = vec![("content-type", "application/json".to_string())];
        match self {
            Vendor::Openai => h.push(("authorization", format!("Bearer {api_key}"))),
            Vendor::Anthropic => {
                h.push(("x-api-key", api_key.to_string()));
                h.push(("anthropic-version", "2023-06-01".to_string()));
            }
            Vendor::Gemini => h.push(("x-goog-api-key", api_key.to_string())),
        }
        h
    }

    /// Request body in the vendor's wire format. Settings are merged in as
    /// top-level fields (Gemini: under `generationConfig`).
    pub fn request_body(&self, req: &ModelRequest) -> Value {
        let b64 = |d: &[u8]| base64::engine::general_purpose::STANDARD.encode(d);
        let mut body = match self {
            Vendor::Openai => {
                let mut content = vec![json!({"type": "text", "text": req.prompt})];
                for a in &req.attachments {
                    content.push(json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:{};base64,{}", a.mime, b64(&a.data))}
                    }));
                }
                json!({"model": req.model_id, "messages": [{"role": "user", "content": content}]})
            }
            Vendor::Anthropic => {
                let mut content: Vec<Value> = req
                    .attachments
                    .iter()
                    .map(|a| {
                        json!({
                            "type": "image",
                            "source": {"type": "base64", "media_type": a.mime, "data": b64(&a.data)}
                        })
                    })
                    .collect();
                content.push(json!({"type": "text", "text": req.prompt}));
                json!({
                    "model": req.model_id,
                    "max_tokens": 4096,
                    "messages": [{"role": "user", "content": content}]
                })
            }
            Vendor::Gemini => {
                let mut parts = vec![json!({"text": req.prompt})];
                for a in &req.attachments {
                    parts.push(json!({"inline_data": {"mime_type": a.mime, "data": b64(&a.data)}}));
                }
                json!({"contents": [{"role": "user", "parts": parts}]})
            }
        };
        if !req.settings.is_empty() {
            let target = match self {
                Vendor::Gemini => {
                    body["generationConfig"] = json!({});
                    &mut body["generationConfig"]
                }
                _ => &mut body,
            };
            for (k, v) in &req.settings {
                target[k] = v.clone();
            }
        }
        body
    }

    pub fn parse_reply(&self, body: &str) -> Result<ModelResponse, ClientError> {
        let v: Value = serde_json::from_str(body).map_err(|e| ClientError::Malformed(e.to_string()))?;
        let missing = |what: &str| ClientError::Malformed(format!("reply has no {what}"));
        let count = |v: &Value| v.as_u64().unwrap_or(0);
        let (text, finish, usage) = match self {
            Vendor::Openai => {
                let choice = v["choices"].get(0).ok_or_else(|| missing("choices[0]"))?;
                let text = choice["message"]["content"]
                    .as_str()
                    .ok_or_else(|| missing("message content"))?;
                let finish = match choice["finish_reason"].as_str() {
                    Some("stop") => FinishReason::Stop,
                    Some("length") => FinishReason::Length,
                    Some("content_filter") => FinishReason::ContentFilter,
                    _ => FinishReason::Other,
                };
                let u = &v["usage"];
                (text.to_string(), finish, Usage {
                    input_tokens: count(&u["prompt_tokens"]),
                    output_tokens: count(&u["completion_tokens"]),
                })
            }
            Vendor::Anthropic => {
                let blocks = v["content"].as_array().ok_or_else(|| missing("content"))?;
                let text: String = blocks
                    .iter()
                    .filter(|b| b["type"] == "text")
                    .filter_map(|b| b["text"].as_str())
                    .collect();
                let finish = match v["stop_reason"].as_str() {
                    Some("end_turn") | Some("stop_sequence") => FinishReason::Stop,
                    Some("max_tokens") => FinishReason::Length,
                    Some("refusal") => FinishReason::ContentFilter,
                    _ => FinishReason::Other,
                };
                let u = &v["usage"];
                (text, finish, Usage {
                    input_tokens: count(&u["input_tokens"]),
                    output_tokens: count(&u["output_tokens"]),
                })
            }
            Vendor::Gemini => {
                let cand = v["candidates"].get(0).ok_or_else(|| missing("candidates[0]"))?;
                let parts = cand["content"]["parts"]
                    .as_array()
                    .ok_or_else(|| missing("content parts"))?;
                let text: String = parts.iter().filter_map(|p| p["text"].as_str()).collect();
                let finish = match cand["finishReason"].as_str() {
                    Some("STOP") => FinishReason::Stop,
                    Some("MAX_TOKENS") => FinishReason::Length,
                    Some("SAFETY") | Some("PROHIBITED_CONTENT") => FinishReason::ContentFilter,
                    _ => FinishReason::Other,
                };
                let u = &v["usageMetadata"];
                (text, finish, Usage {
                    input_tokens: count(&u["promptTokenCount"]),
                    output_tokens: count(&u["candidatesTokenCount"]),
                })
            }
        };
        Ok(ModelResponse {
            text,
            finish_reason: finish,
            usage,
            latency_ms: 0,
        })
    }

    /// Maps a non-2xx reply to an error. Bodies are truncated and scrubbed.
    pub fn status_error(&self, status: u16, body: &str, had_attachments: bool, api_key: &str) -> ClientError {
        let snippet: String = scrub(body, api_key).chars().take(300).collect();
        let lower = snippet.to_lowercase();
        match status {
            401 | 403 => ClientError::Auth(snippet),
            408 | 504 => ClientError::Http {
                status,
                message: snippet,
            },
            400 | 413 | 415 | 422
                if had_attachments && (lower.contains("image") || lower.contains("media")) =>
            {
                ClientError::AttachmentRejected(snippet)
            }
            _ => ClientError::Http {
                status,
                message: snippet,
            },
        }
    }
}

impl fmt::Display for Vendor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Vendor::Openai => "openai",
            Vendor::Anthropic => "anthropic",
            Vendor::Gemini => "gemini",
        })
    }
}

impl FromStr for Vendor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "openai" => Ok(Vendor::Openai),
            "anthropic" => Ok(Vendor::Anthropic),
            "gemini" => Ok(Vendor::Gemini),
            other => Err(format!("unknown vendor {other:?}")),
        }
    }
}

/// Replaces every occurrence of `secret` in `text`.
pub fn scrub(text: &str, secret: &str) -> String {
    if secret.is_empty() {
        text.to_string()
    } else {
        text.replace(secret, "[REDACTED]")
    }
}

pub struct HttpBackend {
    vendor: Vendor,
    model_id: String,
    endpoint: String,
    api_key: String,
    timeout: Duration,
    agent: ureq::Agent,
}

impl fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpBackend")
            .field("vendor", &self.vendor)
            .field("model_id", &self.model_id)
            .field("endpoint", &self.endpoint)
            .field("api_key", &"[REDACTED]")
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl HttpBackend {
    pub fn new(vendor: Vendor, model_id: impl Into<String>, api_key: String, endpoint: Option<String>, timeout: Duration) -> Self {
        let model_id = model_id.into();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.unwrap_or_else(|| vendor.default_endpoint(&model_id)),
            vendor,
            model_id,
            api_key,
            timeout,
            agent,
        }
    }

    /// Reads the credential from `key_env` (or the vendor's default variable).
    pub fn from_env(
        vendor: Vendor,
        model_id: impl Into<String>,
        key_env: Option<&str>,
        endpoint: Option<String>,
        timeout: Duration,
    ) -> Result<Self, ClientError> {
        let var = key_env.unwrap_or(vendor.default_key_env());
        let key = std::env::var(var)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| ClientError::NotConfigured(format!("environment variable {var} is not set")))?;
        Ok(Self::new(vendor, model_id, key, endpoint, timeout))
    }
}

impl ModelClient for HttpBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn send(&self, req: &ModelRequest) -> Result<ModelResponse, ClientError> {
        req.validate()?;
        let body = self.vendor.request_body(req).to_string();
        let mut call = self.agent.post(&self.endpoint);
        for (k, v) in self.vendor.headers(&self.api_key) {
            call = call.header(k, &v);
        }
        let start = Instant::now();
        let mut resp = call.send(body.as_bytes()).map_err(|e| match e {
            ureq::Error::Timeout(_) => ClientError::Timeout(self.timeout.as_millis() as u64),
            other => ClientError::Transport(scrub(&other.to_string(), &self.api_key)),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(scrub(&e.to_string(), &self.api_key)))?;
        if !(200..300).contains(&status) {
            return Err(self
                .vendor
                .status_error(status, &text, !req.attachments.is_empty(), &self.api_key));
        }
        let mut out = self.vendor.parse_reply(&text)?;
        out.latency_ms = start.elapsed().as_millis() as u64;
        Ok(out)
    }
}
