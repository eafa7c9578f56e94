//! Uniform completion interface over a live OpenAI-compatible API, a
//! deterministic scripted backend for tests, and a record/replay cache for
//! offline, reproducible evaluation.

mod http;
mod replay;
mod scripted;

pub use http::{HttpBackend, HttpConfig, RateLimits};
pub use replay::{verify_cache_file, CacheMode, CacheStats, ReplayCache};
pub use scripted::ScriptedBackend;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Completion-style vs chat-style request packaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionMode {
    Text,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// A backend-neutral completion request. Exactly one of `prompt_text` /
/// `messages` is populated, matching `mode`; use the constructors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub mode: CompletionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub messages: Option<Vec<ChatMessage>>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub sample_count: u32,
    pub stop_sequences: Vec<String>,
}

impl CompletionRequest {
    pub fn text(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        CompletionRequest {
            model_id: model_id.into(),
            mode: CompletionMode::Text,
            prompt_text: Some(prompt.into()),
            messages: None,
            temperature: 0.0,
            max_output_tokens: 1024,
            sample_count: 1,
            stop_sequences: Vec::new(),
        }
    }

    /// The few-shot prompt travels as a single user message; chat providers
    /// see no system message.
    pub fn chat(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        CompletionRequest {
            model_id: model_id.into(),
            mode: CompletionMode::Chat,
            prompt_text: None,
            messages: Some(vec![ChatMessage {
                role: "user".into(),
                content: prompt.into(),
            }]),
            temperature: 0.0,
            max_output_tokens: 1024,
            sample_count: 1,
            stop_sequences: Vec::new(),
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_samples(mut self, n: u32) -> Self {
        self.sample_count = n;
        self
    }

    pub fn with_stop_sequences(mut self, stops: Vec<String>) -> Self {
        self.stop_sequences = stops;
        self
    }

    pub fn with_max_output_tokens(mut self, n: u32) -> Self {
        self.max_output_tokens = n;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let ok_shape = match self.mode {
            CompletionMode::Text => self.prompt_text.is_some() && self.messages.is_none(),
            CompletionMode::Chat => self.messages.is_some() && self.prompt_text.is_none(),
        };
        if !ok_shape {
            return Err(GatewayError::InvalidRequest(
                "prompt/messages must match the request mode".into(),
            ));
        }
        if self.sample_count < 1 {
            return Err(GatewayError::InvalidRequest("sample_count must be >= 1".into()));
        }
        if self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        Ok(())
    }

    /// The prompt content regardless of packaging, for digests and logs.
    pub fn prompt_content(&self) -> String {
        match self.mode {
            CompletionMode::Text => self.prompt_text.clone().unwrap_or_default(),
            CompletionMode::Chat => self
                .messages
                .as_deref()
                .unwrap_or_default()
                .iter()
                .map(|m| format!("{}:{}", m.role, m.content))
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u32,
    pub output: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub finish_reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
}

impl Completion {
    pub fn of(text: impl Into<String>) -> Self {
        Completion {
            text: text.into(),
            finish_reason: "stop".into(),
            token_usage: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("rate limited by provider: {0}")]
    RateLimited(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("provider error (status {status}): {message}")]
    Provider { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("scripted backend exhausted: needed {needed} more completion(s)")]
    ScriptExhausted { needed: u32 },
    #[error("replay miss in strict mode for digest {digest}")]
    ReplayMiss { digest: String },
    #[error("cache corruption in {path}: {message}")]
    CacheCorruption { path: String, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl GatewayError {
    /// Transient failures worth retrying; auth failures are surfaced at once.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::RateLimited(_) | GatewayError::Timeout(_) | GatewayError::Transport(_) => {
                true
            }
            GatewayError::Provider { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

/// A completion provider: live HTTP, scripted, or replayed. Implementations
/// must tolerate concurrent calls.
pub trait CompletionBackend: Send + Sync {
    /// Returns exactly `request.sample_count` completions.
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<Completion>, GatewayError>;

    fn kind(&self) -> &'static str;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<Completion>, GatewayError> {
        (**self).complete(request)
    }

    fn kind(&self) -> &'static str {
        (**self).kind()
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<Completion>, GatewayError> {
        (**self).complete(request)
    }

    fn kind(&self) -> &'static str {
        (**self).kind()
    }
}

/// Exponential backoff with full jitter. Defaults: 1s base, factor 2, 60s
/// cap, 6 attempts.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    pub max: Duration,
    pub attempts: u32,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base: Duration::from_secs(1),
            factor: 2.0,
            max: Duration::from_secs(60),
            attempts: 6,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    pub fn no_wait(attempts: u32) -> Self {
        RetryPolicy {
            base: Duration::ZERO,
            factor: 1.0,
            max: Duration::ZERO,
            attempts,
            jitter: false,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base.as_secs_f64() * self.factor.powi(attempt as i32);
        let capped = exp.min(self.max.as_secs_f64());
        let secs = if self.jitter {
            rand::Rng::gen_range(&mut rand::thread_rng(), 0.0..=capped.max(f64::EPSILON))
        } else {
            capped
        };
        Duration::from_secs_f64(secs)
    }
}

/// Wraps a backend with the retry budget. Retries sit *below* any cache
/// layer, so a retried request still records at most once.
pub struct Retrying<B> {
    inner: B,
    policy: RetryPolicy,
}

impl<B: CompletionBackend> Retrying<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        Retrying { inner, policy }
    }
}

impl<B: CompletionBackend> CompletionBackend for Retrying<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<Completion>, GatewayError> {
        let mut attempt = 0;
        loop {
            match self.inner.complete(request) {
                Ok(out) => return Ok(out),
                Err(e) if e.is_retryable() && attempt + 1 < self.policy.attempts => {
                    let wait = self.policy.delay(attempt);
                    log::warn!("retryable gateway error (attempt {attempt}): {e}; backing off {wait:?}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn kind(&self) -> &'static str {
        self.inner.kind()
    }
}

/// Canonical content digest for one sampled completion of a request.
/// Identical inputs produce identical digests across runs and platforms; the
/// canonical form is built from a fixed field order, so serialization
/// ordering cannot perturb it.
pub fn cache_key(request: &CompletionRequest, sample_index: u32) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        model_id: &'a str,
        mode: CompletionMode,
        prompt: String,
        // shortest-roundtrip float formatting keeps the digest stable
        temperature: String,
        sample_index: u32,
        stop_sequences: &'a [String],
    }
    let canon = Canonical {
        model_id: &request.model_id,
        mode: request.mode,
        prompt: request.prompt_content(),
        temperature: format!("{}", request.temperature),
        sample_index,
        stop_sequences: &request.stop_sequences,
    };
    let bytes = serde_json::to_vec(&canon).expect("canonical form serializes");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hex::encode(hasher.finalize())
}

/// Digest of a prompt string, used in persisted transcripts.
pub fn prompt_digest(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct AlwaysLimited;

    impl CompletionBackend for AlwaysLimited {
        fn complete(&self, _req: &CompletionRequest) -> Result<Vec<Completion>, GatewayError> {
            Err(GatewayError::RateLimited("slow down".into()))
        }

        fn kind(&self) -> &'static str {
            "always-limited"
        }
    }

    struct FailThenOk {
        remaining_failures: AtomicU32,
    }

    impl CompletionBackend for FailThenOk {
        fn complete(&self, _req: &CompletionRequest) -> Result<Vec<Completion>, GatewayError> {
            let prev = self
                .remaining_failures
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |f| f.checked_sub(1));
            if prev.is_ok() {
                Err(GatewayError::Timeout("later".into()))
            } else {
                Ok(vec![Completion::of("done")])
            }
        }

        fn kind(&self) -> &'static str {
            "fail-then-ok"
        }
    }

    #[test]
    fn request_shape_is_validated() {
        let mut req = CompletionRequest::text("m", "p");
        assert!(req.validate().is_ok());
        req.messages = Some(vec![]);
        assert!(req.validate().is_err());
        let req = CompletionRequest::chat("m", "p").with_samples(0);
        assert!(req.validate().is_err());
    }

    #[test]
    fn retry_recovers_from_transient_failures() {
        let backend = Retrying::new(
            FailThenOk {
                remaining_failures: AtomicU32::new(2),
            },
            RetryPolicy::no_wait(6),
        );
        let out = backend.complete(&CompletionRequest::text("m", "p")).unwrap();
        assert_eq!(out[0].text, "done");
    }

    #[test]
    fn retry_budget_is_finite() {
        let backend = Retrying::new(AlwaysLimited, RetryPolicy::no_wait(3));
        let err = backend.complete(&CompletionRequest::text("m", "p")).unwrap_err();
        assert!(matches!(err, GatewayError::RateLimited(_)));
    }

    #[test]
    fn auth_failure_is_not_retried() {
        struct AlwaysAuthFail(std::sync::Arc<AtomicU32>);
        impl CompletionBackend for AlwaysAuthFail {
            fn complete(&self, _r: &CompletionRequest) -> Result<Vec<Completion>, GatewayError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Err(GatewayError::AuthFailure("bad key".into()))
            }
            fn kind(&self) -> &'static str {
                "auth-fail"
            }
        }
        let calls = std::sync::Arc::new(AtomicU32::new(0));
        let backend = Retrying::new(AlwaysAuthFail(calls.clone()), RetryPolicy::no_wait(6));
        let err = backend.complete(&CompletionRequest::text("m", "p")).unwrap_err();
        assert!(matches!(err, GatewayError::AuthFailure(_)));
        // exactly one call despite the retry budget
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn cache_key_is_stable_and_sample_indexed() {
        let req = CompletionRequest::text("m", "prompt").with_temperature(0.7);
        let a = cache_key(&req, 0);
        let b = cache_key(&req.clone(), 0);
        assert_eq!(a, b);
        assert_ne!(a, cache_key(&req, 1));
        let other = CompletionRequest::text("m", "other prompt").with_temperature(0.7);
        assert_ne!(a, cache_key(&other, 0));
        // mode participates in the digest
        let chat = CompletionRequest::chat("m", "prompt").with_temperature(0.7);
        assert_ne!(a, cache_key(&chat, 0));
    }
}
