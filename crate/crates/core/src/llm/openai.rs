use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{validate_messages, CallContext, ChatClient, ChatMessage, ChatParams, ChatResponse, LlmError, Part};

/// Shared request limiter: `capacity` burst, refilled at `per_second`.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(capacity: f64, per_second: f64) -> TokenBucket {
        TokenBucket { capacity, per_second, state: Mutex::new((capacity, Instant::now())) }
    }

    /// Blocks until one token is available, then consumes it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let now = Instant::now();
                let refill = now.duration_since(state.1).as_secs_f64() * self.per_second;
                state.0 = (state.0 + refill).min(self.capacity);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                (1.0 - state.0) / self.per_second
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Debug, Clone)]
pub struct OpenAiConfig {
    /// Base URL (`https://host`, `https://host/v1`) or the full completions URL.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub backoff: Duration,
    pub rate_limit: Option<Arc<TokenBucket>>,
}

impl OpenAiConfig {
    /// Reads the credential from `LLM_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>) -> OpenAiConfig {
        OpenAiConfig {
            endpoint: endpoint.into(),
            api_key: std::env::var("LLM_API_KEY").ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            rate_limit: None,
        }
    }

    pub fn completions_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

/// Client for OpenAI-compatible `POST /v1/chat/completions` endpoints.
pub struct OpenAiClient {
    config: OpenAiConfig,
    http: reqwest::blocking::Client,
}

enum Attempt {
    Done(ChatResponse),
    Retry(LlmError),
    Fatal(LlmError),
}

impl OpenAiClient {
    pub fn new(config: OpenAiConfig) -> Result<OpenAiClient, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::TransportError(e.to_string()))?;
        Ok(OpenAiClient { config, http })
    }

    fn attempt(&self, body: &Value, started: Instant) -> Attempt {
        if let Some(bucket) = &self.config.rate_limit {
            bucket.acquire();
        }
        let mut req = self.http.post(self.config.completions_url()).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(LlmError::TransportError(e.to_string())),
        };
        let status = resp.status();
        let text = resp.text().unwrap_or_default();
        match status.as_u16() {
            200..=299 => match parse_response(&text, started) {
                Ok(r) => Attempt::Done(r),
                Err(e) => Attempt::Fatal(e),
            },
            401 | 403 => Attempt::Fatal(LlmError::AuthError(format!("HTTP {status}: {}", snippet(&text)))),
            429 => Attempt::Retry(LlmError::RateLimited { attempts: 0 }),
            500..=599 => Attempt::Retry(LlmError::TransportError(format!("HTTP {status}: {}", snippet(&text)))),
            _ => Attempt::Fatal(LlmError::InvalidRequest(format!("HTTP {status}: {}", snippet(&text)))),
        }
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

pub(super) fn request_body(messages: &[ChatMessage], params: &ChatParams) -> Value {
    let messages: Vec<Value> = messages
        .iter()
        .map(|m| {
            let content = match m.parts.as_slice() {
                [Part::Text { text }] => json!(text),
                parts => Value::Array(
                    parts
                        .iter()
                        .map(|p| match p {
                            Part::Text { text } => json!({"type": "text", "text": text}),
                            Part::Image { media_type, data_base64 } => json!({
                                "type": "image_url",
                                "image_url": {"url": format!("data:{media_type};base64,{data_base64}")}
                            }),
                        })
                        .collect(),
                ),
            };
            json!({"role": m.role, "content": content})
        })
        .collect();
    json!({
        "model": params.model,
        "messages": messages,
        "temperature": params.temperature,
        "top_p": params.top_p,
    })
}

fn parse_response(text: &str, started: Instant) -> Result<ChatResponse, LlmError> {
    let v: Value = serde_json::from_str(text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::MalformedResponse(format!("no choices[0].message.content in {}", snippet(text))))?;
    let usage = |field: &str| v.get("usage").and_then(|u| u.get(field)).and_then(Value::as_u64);
    Ok(ChatResponse {
        text: content.to_string(),
        prompt_tokens: usage("prompt_tokens"),
        completion_tokens: usage("completion_tokens"),
        model: v.get("model").and_then(Value::as_str).unwrap_or_default().to_string(),
        latency_ms: started.elapsed().as_millis() as u64,
        retries: 0,
    })
}

impl ChatClient for OpenAiClient {
    fn chat(&self, messages: &[ChatMessage], params: &ChatParams, ctx: CallContext) -> Result<ChatResponse, LlmError> {
        validate_messages(messages)?;
        let body = request_body(messages, params);
        let started = Instant::now();
        let mut delay = self.config.backoff;
        let mut last = LlmError::TransportError("no attempt made".into());
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&body, started) {
                Attempt::Done(mut r) => {
                    r.retries = attempt;
                    log::info!("{} call to {} succeeded after {} retries", ctx.template, params.model, attempt);
                    return Ok(r);
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => {
                    log::warn!("{} call attempt {} failed: {e}", ctx.template, attempt + 1);
                    last = e;
                }
            }
        }
        let attempts = self.config.max_retries + 1;
        Err(match last {
            LlmError::RateLimited { .. } => LlmError::RateLimited { attempts },
            other => other,
        })
    }
}
