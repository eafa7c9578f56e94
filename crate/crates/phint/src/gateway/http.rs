//! OpenAI-compatible HTTP backend: `/completions` for text mode and
//! `/chat/completions` for chat mode, with an admission rate limiter shared
//! across evaluation workers.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{
    ChatMessage, Completion, CompletionBackend, CompletionMode, CompletionRequest, GatewayError,
    TokenUsage,
};

/// Requests/minute and tokens/minute admission caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateLimits {
    pub requests_per_minute: u32,
    pub tokens_per_minute: u32,
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key; the key itself
    /// never appears in config files.
    pub api_key_env: String,
    pub timeout: Duration,
    pub rate_limits: Option<RateLimits>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout: Duration::from_secs(120),
            rate_limits: None,
        }
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
    limiter: Option<AdmissionLimiter>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            GatewayError::AuthFailure(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            client,
            base_url: config.base_url.trim_end_matches('/').to_string(),
            api_key,
            limiter: config.rate_limits.map(AdmissionLimiter::new),
        })
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<Completion>, GatewayError> {
        request.validate()?;
        if let Some(limiter) = &self.limiter {
            limiter.admit(estimate_tokens(request));
        }
        let url = match request.mode {
            CompletionMode::Text => format!("{}/completions", self.base_url),
            CompletionMode::Chat => format!("{}/chat/completions", self.base_url),
        };
        let response = self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(&build_body(request))
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    GatewayError::Timeout(e.to_string())
                } else {
                    GatewayError::Transport(e.to_string())
                }
            })?;
        let status = response.status().as_u16();
        let body: Value = response
            .json()
            .map_err(|e| GatewayError::Transport(format!("bad response body: {e}")))?;
        if status != 200 {
            let message = body["error"]["message"]
                .as_str()
                .unwrap_or("unknown provider error")
                .to_string();
            return Err(match status {
                401 | 403 => GatewayError::AuthFailure(message),
                429 => GatewayError::RateLimited(message),
                408 | 504 => GatewayError::Timeout(message),
                _ => GatewayError::Provider { status, message },
            });
        }
        parse_response(request, &body)
    }

    fn kind(&self) -> &'static str {
        "http"
    }
}

/// Request JSON for the OpenAI-compatible wire format.
pub(crate) fn build_body(request: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": request.model_id,
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
        "n": request.sample_count,
    });
    if !request.stop_sequences.is_empty() {
        body["stop"] = json!(request.stop_sequences);
    }
    match request.mode {
        CompletionMode::Text => {
            body["prompt"] = json!(request.prompt_text.as_deref().unwrap_or(""));
        }
        CompletionMode::Chat => {
            let msgs: Vec<&ChatMessage> = request.messages.as_deref().unwrap_or(&[]).iter().collect();
            body["messages"] = json!(msgs
                .iter()
                .map(|m| json!({"role": m.role, "content": m.content}))
                .collect::<Vec<_>>());
        }
    }
    body
}

/// Completions out of a provider response. A refusal is still a completion;
/// the parsing layer upstream decides what to make of its text.
pub(crate) fn parse_response(
    request: &CompletionRequest,
    body: &Value,
) -> Result<Vec<Completion>, GatewayError> {
    let choices = body["choices"]
        .as_array()
        .ok_or_else(|| GatewayError::Transport("response has no choices".into()))?;
    if choices.len() != request.sample_count as usize {
        return Err(GatewayError::Transport(format!(
            "expected {} choices, got {}",
            request.sample_count,
            choices.len()
        )));
    }
    let usage = body.get("usage").and_then(|u| {
        Some(TokenUsage {
            prompt: u["prompt_tokens"].as_u64()? as u32,
            output: u["completion_tokens"].as_u64()? as u32,
        })
    });
    let per_sample_usage = usage.map(|u| TokenUsage {
        prompt: u.prompt,
        output: u.output / request.sample_count.max(1),
    });
    choices
        .iter()
        .map(|choice| {
            let text = match request.mode {
                CompletionMode::Text => choice["text"].as_str(),
                CompletionMode::Chat => choice["message"]["content"].as_str(),
            }
            .ok_or_else(|| GatewayError::Transport("choice has no text".into()))?
            .to_string();
            Ok(Completion {
                text,
                finish_reason: choice["finish_reason"].as_str().unwrap_or("").to_string(),
                token_usage: per_sample_usage,
            })
        })
        .collect()
}

fn estimate_tokens(request: &CompletionRequest) -> u64 {
    let prompt_chars = request.prompt_content().len() as u64;
    prompt_chars / 4 + u64::from(request.max_output_tokens) * u64::from(request.sample_count)
}

/// Sliding one-minute window over (request, token) consumption. `admit`
/// blocks the caller until the request fits; in-flight requests themselves
/// run concurrently.
struct AdmissionLimiter {
    limits: RateLimits,
    window: Mutex<VecDeque<(Instant, u64)>>,
}

impl AdmissionLimiter {
    fn new(limits: RateLimits) -> Self {
        AdmissionLimiter {
            limits,
            window: Mutex::new(VecDeque::new()),
        }
    }

    fn admit(&self, tokens: u64) {
        loop {
            let wait = {
                let mut window = self.window.lock().unwrap();
                let cutoff = Instant::now() - Duration::from_secs(60);
                while window.front().is_some_and(|(t, _)| *t < cutoff) {
                    window.pop_front();
                }
                let used_requests = window.len() as u32;
                let used_tokens: u64 = window.iter().map(|(_, n)| n).sum();
                if used_requests < self.limits.requests_per_minute
                    && used_tokens + tokens <= u64::from(self.limits.tokens_per_minute)
                {
                    window.push_back((Instant::now(), tokens));
                    None
                } else {
                    window.front().map(|(t, _)| {
                        (*t + Duration::from_secs(60)).saturating_duration_since(Instant::now())
                    })
                }
            };
            match wait {
                None => return,
                Some(d) => std::thread::sleep(d.max(Duration::from_millis(10))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_body_uses_prompt_field() {
        let req = CompletionRequest::text("text-davinci-003", "Q: 2+2?\nA:")
            .with_temperature(0.0)
            .with_samples(1)
            .with_stop_sequences(vec!["\nQ:".into()]);
        let body = build_body(&req);
        assert_eq!(body["model"], "text-davinci-003");
        assert_eq!(body["prompt"], "Q: 2+2?\nA:");
        assert_eq!(body["n"], 1);
        assert_eq!(body["stop"][0], "\nQ:");
        assert!(body.get("messages").is_none());
    }

    #[test]
    fn chat_body_wraps_prompt_as_single_user_message() {
        let req = CompletionRequest::chat("gpt-4", "the whole few-shot prompt");
        let body = build_body(&req);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "the whole few-shot prompt");
        assert!(body.get("prompt").is_none());
    }

    #[test]
    fn parses_text_and_chat_responses() {
        let req = CompletionRequest::text("m", "p").with_samples(2);
        let body = serde_json::json!({
            "choices": [
                {"text": "The answer is 6.", "finish_reason": "stop"},
                {"text": "The answer is 7.", "finish_reason": "length"},
            ],
            "usage": {"prompt_tokens": 100, "completion_tokens": 20}
        });
        let out = parse_response(&req, &body).unwrap();
        assert_eq!(out[0].text, "The answer is 6.");
        assert_eq!(out[1].finish_reason, "length");
        assert_eq!(out[0].token_usage.unwrap().output, 10);

        let req = CompletionRequest::chat("m", "p");
        let body = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": "hi"}, "finish_reason": "stop"}]
        });
        assert_eq!(parse_response(&req, &body).unwrap()[0].text, "hi");
    }

    #[test]
    fn sample_count_mismatch_is_an_error() {
        let req = CompletionRequest::text("m", "p").with_samples(3);
        let body = serde_json::json!({"choices": [{"text": "only one", "finish_reason": "stop"}]});
        assert!(parse_response(&req, &body).is_err());
    }

    #[test]
    fn limiter_admits_up_to_the_request_cap() {
        let limiter = AdmissionLimiter::new(RateLimits {
            requests_per_minute: 100,
            tokens_per_minute: 1_000_000,
        });
        let start = Instant::now();
        for _ in 0..50 {
            limiter.admit(10);
        }
        assert!(start.elapsed() < Duration::from_secs(1));
        assert_eq!(limiter.window.lock().unwrap().len(), 50);
    }
}
