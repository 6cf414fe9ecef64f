//! HTTP backend speaking the common role-tagged chat-completions JSON shape,
//! with images attached inline as base64 data URLs.

use std::env;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatBackend, ChatMessage, GatewayError, GenerationParams, DEFAULT_MAX_IN_FLIGHT};
use crate::trajectory::BlobStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL; requests go to `<base_url>/chat/completions`.
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token. Empty
    /// means the endpoint takes no authentication.
    #[serde(default)]
    pub auth_token_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            auth_token_env: String::new(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            initial_backoff_ms: default_backoff_ms(),
            max_in_flight: default_in_flight(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(format!("timeout_secs must be > 0, got {}", self.timeout_secs));
        }
        reqwest::Url::parse(&self.base_url).map_err(|e| format!("base_url {:?}: {e}", self.base_url))?;
        if self.model_name.is_empty() {
            return Err("model_name must be non-empty".into());
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be positive".into());
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            initial_backoff: Duration::from_millis(self.initial_backoff_ms),
            max_backoff: Duration::from_secs(30),
        }
    }
}

/// Exponential backoff: waits `initial * 2^k` (capped) before retry `k+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl RetryPolicy {
    pub fn delay_before_retry(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.saturating_sub(1));
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }

    /// Runs `op` (given the 0-based attempt number) until it succeeds, fails
    /// with a non-retryable error, or `max_retries + 1` attempts are spent.
    pub fn run<T>(&self, mut op: impl FnMut(u32) -> Result<T, GatewayError>) -> Result<T, GatewayError> {
        let mut attempt = 0;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    attempt += 1;
                    std::thread::sleep(self.delay_before_retry(attempt));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

pub struct HttpBackend {
    config: EndpointConfig,
    client: reqwest::blocking::Client,
    blobs: Option<BlobStore>,
    attempts: AtomicUsize,
}

impl HttpBackend {
    pub fn new(config: EndpointConfig) -> Result<Self, GatewayError> {
        config.validate().map_err(GatewayError::InvalidConfig)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            client,
            blobs: None,
            attempts: AtomicUsize::new(0),
        })
    }

    /// Where to read screenshot bytes for image attachments.
    pub fn with_blob_store(mut self, blobs: BlobStore) -> Self {
        self.blobs = Some(blobs);
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Total network attempts made so far, retries included.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }

    fn token(&self) -> Result<Option<String>, GatewayError> {
        if self.config.auth_token_env.is_empty() {
            return Ok(None);
        }
        env::var(&self.config.auth_token_env).map(Some).map_err(|_| {
            GatewayError::AuthFailure(format!(
                "environment variable {} is not set",
                self.config.auth_token_env
            ))
        })
    }

    fn encode_message(&self, m: &ChatMessage) -> Result<Value, GatewayError> {
        if m.image_refs.is_empty() {
            return Ok(json!({ "role": m.role.as_str(), "content": m.text }));
        }
        let blobs = self.blobs.as_ref();
        let mut parts = Vec::with_capacity(m.image_refs.len() + 1);
        for image in &m.image_refs {
            let bytes = blobs
                .ok_or_else(|| GatewayError::Image {
                    image: image.clone(),
                    reason: "no blob store configured".into(),
                })?
                .get(image)
                .map_err(|e| GatewayError::Image {
                    image: image.clone(),
                    reason: e.to_string(),
                })?;
            let data = base64::engine::general_purpose::STANDARD.encode(bytes);
            parts.push(json!({
                "type": "image_url",
                "image_url": { "url": format!("data:image/png;base64,{data}") }
            }));
        }
        if !m.text.is_empty() {
            parts.push(json!({ "type": "text", "text": m.text }));
        }
        Ok(json!({ "role": m.role.as_str(), "content": parts }))
    }

    fn request_body(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<Value, GatewayError> {
        let messages = messages
            .iter()
            .map(|m| self.encode_message(m))
            .collect::<Result<Vec<_>, _>>()?;
        let mut body = json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if let Some(k) = params.top_k {
            body["top_k"] = json!(k);
        }
        Ok(body)
    }

    fn attempt(&self, body: &Value, token: Option<&str>) -> Result<String, GatewayError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = self.client.post(url).json(body);
        if let Some(token) = token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(classify_transport)?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(classify_transport)?;
        match status {
            200..=299 => extract_content(&text),
            401 | 403 => Err(GatewayError::AuthFailure(format!("HTTP {status}"))),
            _ => Err(GatewayError::Http {
                status,
                body: truncate(&text, 512),
            }),
        }
    }
}

fn classify_transport(e: reqwest::Error) -> GatewayError {
    if e.is_timeout() {
        GatewayError::Timeout
    } else {
        GatewayError::Transport(e.to_string())
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((idx, _)) => format!("{}...", &s[..idx]),
        None => s.to_string(),
    }
}

fn extract_content(body: &str) -> Result<String, GatewayError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse(format!("invalid JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| GatewayError::MalformedResponse("missing choices[0].message.content".into()))
}

impl ChatBackend for HttpBackend {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn send(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<String, GatewayError> {
        let token = self.token()?;
        let body = self.request_body(messages, params)?;
        self.config
            .retry_policy()
            .run(|_| self.attempt(&body, token.as_deref()))
    }
}
