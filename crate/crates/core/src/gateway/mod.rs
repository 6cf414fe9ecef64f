//! Uniform client layer over chat-completion models.
//!
//! A [`Gateway`] wraps one [`ChatBackend`] (an HTTP endpoint or a
//! [`ScriptedBackend`]) and adds response caching keyed by content digest,
//! an append-only request log and a per-endpoint in-flight limit.

mod cache;
mod digest;
mod http;
mod log;
mod scripted;

use std::io;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::trajectory::ScreenshotRef;

pub use cache::ResponseCache;
pub use digest::{cache_key, request_digest, Digest};
pub use http::{EndpointConfig, HttpBackend, RetryPolicy};
pub use log::{LogEntry, Outcome, RequestLog};
pub use scripted::{ScriptedBackend, ScriptedEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    #[serde(default)]
    pub image_refs: Vec<ScreenshotRef>,
}

impl ChatMessage {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            image_refs: Vec::new(),
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::new(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::new(Role::User, text)
    }

    pub fn with_images(mut self, images: Vec<ScreenshotRef>) -> Self {
        self.image_refs = images;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty() && self.image_refs.is_empty()
    }
}

/// Sampling parameters. The default is greedy decoding (temperature 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_k: Option<u32>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 1024,
            top_k: None,
        }
    }
}

impl GenerationParams {
    /// High-temperature sampling for collecting diverse actor rollouts.
    pub fn data_collection() -> Self {
        Self {
            temperature: 1.5,
            top_k: Some(100),
            ..Self::default()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("request has no messages")]
    EmptyRequest,
    #[error("invalid endpoint configuration: {0}")]
    InvalidConfig(String),
    #[error("message {index} has neither text nor images")]
    EmptyMessage { index: usize },
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no scripted response for request {0}")]
    UnknownScriptedRequest(Digest),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("image {image} unavailable: {reason}")]
    Image { image: ScreenshotRef, reason: String },
    #[error("cache I/O: {0}")]
    Cache(#[from] io::Error),
}

impl GatewayError {
    /// Transient failures worth another network attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Timeout | GatewayError::Transport(_) => true,
            GatewayError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    fn outcome_label(&self) -> &'static str {
        match self {
            GatewayError::EmptyRequest | GatewayError::EmptyMessage { .. } => "invalid_request",
            GatewayError::InvalidConfig(_) => "invalid_config",
            GatewayError::Timeout => "timeout",
            GatewayError::AuthFailure(_) => "auth_failure",
            GatewayError::MalformedResponse(_) => "malformed_response",
            GatewayError::UnknownScriptedRequest(_) => "unknown_scripted_request",
            GatewayError::Http { .. } => "http_error",
            GatewayError::Transport(_) => "transport_error",
            GatewayError::Image { .. } => "image_error",
            GatewayError::Cache(_) => "cache_error",
        }
    }
}

/// Something that turns a chat request into model text.
pub trait ChatBackend: Send + Sync {
    fn model_name(&self) -> &str;
    fn send(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<String, GatewayError>;
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

struct Limiter {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut slots = self.available.lock().expect("limiter lock");
        while *slots == 0 {
            slots = self.freed.wait(slots).expect("limiter lock");
        }
        *slots -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("limiter lock") += 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    cache: Option<ResponseCache>,
    log: RequestLog,
    limiter: Limiter,
}

impl Gateway {
    pub fn new(backend: impl ChatBackend + 'static) -> Self {
        Self::from_arc(Arc::new(backend))
    }

    pub fn from_arc(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            cache: None,
            log: RequestLog::in_memory(),
            limiter: Limiter::new(DEFAULT_MAX_IN_FLIGHT),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_log_file(mut self, path: &Path) -> io::Result<Self> {
        self.log = RequestLog::append_to(path)?;
        Ok(self)
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limiter = Limiter::new(n);
        self
    }

    pub fn model_name(&self) -> &str {
        self.backend.model_name()
    }

    /// Sends a request, serving it from the cache when an identical request
    /// to the same model was answered before.
    pub fn complete(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<String, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::EmptyRequest);
        }
        if let Some(index) = messages.iter().position(ChatMessage::is_empty) {
            return Err(GatewayError::EmptyMessage { index });
        }
        let digest = request_digest(messages, params);
        let model = self.backend.model_name().to_string();
        let key = cache_key(&model, &digest);

        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                self.log.record(LogEntry {
                    digest,
                    model_name: model,
                    latency_ms: 0,
                    outcome: Outcome::CacheHit,
                })?;
                return Ok(hit);
            }
        }

        let result = {
            let _permit = self.limiter.acquire();
            let start = Instant::now();
            let result = self.backend.send(messages, params);
            let latency = start.elapsed();
            self.log.record(LogEntry {
                digest,
                model_name: model,
                latency_ms: millis(latency),
                outcome: match &result {
                    Ok(_) => Outcome::Ok,
                    Err(e) => Outcome::Error(e.outcome_label().to_string()),
                },
            })?;
            result
        };

        let text = result?;
        if let Some(cache) = &self.cache {
            cache.put(&key, &text)?;
        }
        Ok(text)
    }

    pub fn log_entries(&self) -> Vec<LogEntry> {
        self.log.entries()
    }

    /// Requests that reached the backend (cache hits excluded).
    pub fn backend_calls(&self) -> usize {
        self.log
            .entries()
            .iter()
            .filter(|e| e.outcome != Outcome::CacheHit)
            .count()
    }

    pub fn cache_hits(&self) -> usize {
        self.log
            .entries()
            .iter()
            .filter(|e| e.outcome == Outcome::CacheHit)
            .count()
    }
}

fn millis(d: Duration) -> u64 {
    d.as_millis().try_into().unwrap_or(u64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn request() -> Vec<ChatMessage> {
        vec![ChatMessage::user("judge this")]
    }

    #[test]
    fn scripted_lookup_and_miss() {
        let params = GenerationParams::default();
        let mut backend = ScriptedBackend::new();
        backend.insert(&request(), &params, "Status: \"success\"");
        let gw = Gateway::new(backend);
        assert_eq!(gw.complete(&request(), &params).unwrap(), "Status: \"success\"");
        let other = vec![ChatMessage::user("something else")];
        assert!(matches!(
            gw.complete(&other, &params),
            Err(GatewayError::UnknownScriptedRequest(_))
        ));
    }

    #[test]
    fn cache_serves_second_identical_request() {
        let params = GenerationParams::default();
        let backend = ScriptedBackend::new().with_default("answer");
        let gw = Gateway::new(backend).with_cache(ResponseCache::in_memory());
        let a = gw.complete(&request(), &params).unwrap();
        let b = gw.complete(&request(), &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(gw.backend_calls(), 1);
        assert_eq!(gw.cache_hits(), 1);
    }

    #[test]
    fn empty_requests_rejected() {
        let gw = Gateway::new(ScriptedBackend::new().with_default("x"));
        let p = GenerationParams::default();
        assert!(matches!(gw.complete(&[], &p), Err(GatewayError::EmptyRequest)));
        let bad = vec![ChatMessage::system("s"), ChatMessage::user("")];
        assert!(matches!(
            gw.complete(&bad, &p),
            Err(GatewayError::EmptyMessage { index: 1 })
        ));
    }

    struct Slow {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl ChatBackend for Slow {
        fn model_name(&self) -> &str {
            "slow"
        }

        fn send(&self, _: &[ChatMessage], _: &GenerationParams) -> Result<String, GatewayError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(15));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok("ok".into())
        }
    }

    #[test]
    fn in_flight_limit_is_respected() {
        let backend = Arc::new(Slow {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let gw = Gateway::from_arc(backend.clone()).with_max_in_flight(2);
        std::thread::scope(|s| {
            for i in 0..8 {
                let gw = &gw;
                s.spawn(move || {
                    let msgs = vec![ChatMessage::user(format!("req {i}"))];
                    gw.complete(&msgs, &GenerationParams::default()).unwrap();
                });
            }
        });
        assert!(backend.peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(gw.backend_calls(), 8);
    }
}
