//! Chat-completion HTTP backend with bounded retries, exponential backoff,
//! and a concurrent-request cap.
//!
//! Wire format: `POST {base_url}/chat/completions` with body
//! `{"model": ..., "messages": [{"role", "content"}...], "temperature": ...}`.
//! The answer is read from `choices[0].message.content`; token usage from
//! `usage.prompt_tokens` / `usage.completion_tokens` when reported, otherwise
//! estimated from whitespace runs. Authentication uses
//! `Authorization: Bearer <key>` with the key taken from the `MAD_API_KEY`
//! environment variable unless the backend binding carries one.

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use crate::context::MessageList;

use super::{estimate_tokens, to_chat_messages, Backend, BackendError, BackendSpec, Completion};

/// Delay inserted before retry `k` (1-based): `base * 2^(k-1)`.
pub fn backoff_delay_ms(base_ms: u64, retry: u32) -> u64 {
    base_ms.saturating_mul(1u64 << (retry.saturating_sub(1)).min(32))
}

type SleepFn = Arc<dyn Fn(u64) + Send + Sync>;

struct Gate {
    permits: Mutex<u32>,
    cv: Condvar,
}

impl Gate {
    fn new(cap: u32) -> Self {
        Self {
            permits: Mutex::new(cap),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().expect("gate lock");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("gate wait");
        }
        *permits -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    base_url: String,
    model_name: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff_base_ms: u64,
    min_interval_ms: Option<u64>,
    client: reqwest::blocking::Client,
    gate: Option<Gate>,
    last_request: Mutex<Option<Instant>>,
    sleep: SleepFn,
}

impl HttpBackend {
    pub fn from_spec(spec: &BackendSpec) -> Result<Self, BackendError> {
        let BackendSpec::Http {
            base_url,
            model_name,
            api_key,
            timeout_ms,
            max_retries,
            backoff_base_ms,
            max_concurrent,
            min_interval_ms,
        } = spec
        else {
            return Err(BackendError::InvalidSpec("expected an http spec".to_string()));
        };
        spec.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(*timeout_ms))
            .build()
            .map_err(|e| BackendError::InvalidSpec(format!("client build failed: {e}")))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model_name: model_name.clone(),
            api_key: api_key
                .clone()
                .or_else(|| std::env::var("MAD_API_KEY").ok().filter(|k| !k.is_empty())),
            max_retries: *max_retries,
            backoff_base_ms: *backoff_base_ms,
            min_interval_ms: *min_interval_ms,
            client,
            gate: max_concurrent.map(Gate::new),
            last_request: Mutex::new(None),
            sleep: Arc::new(|ms| std::thread::sleep(Duration::from_millis(ms))),
        })
    }

    /// Shared pacing: callers sharing this instance space their requests at
    /// least `min_interval_ms` apart. The lock is held across the wait so the
    /// spacing applies globally, not per caller.
    fn pace(&self) {
        let Some(interval) = self.min_interval_ms else { return };
        let interval = Duration::from_millis(interval);
        let mut last = self.last_request.lock().expect("pacer lock");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < interval {
                (self.sleep)((interval - elapsed).as_millis() as u64);
            }
        }
        *last = Some(Instant::now());
    }

    /// Replaces the delay function; lets tests record the backoff schedule
    /// instead of actually sleeping.
    pub fn with_sleep_fn(mut self, sleep: impl Fn(u64) + Send + Sync + 'static) -> Self {
        self.sleep = Arc::new(sleep);
        self
    }

    /// The request body sent for a message list; exposed so wire-format tests
    /// can compare against goldens without a server.
    pub fn request_body(&self, messages: &MessageList, temperature: f64) -> serde_json::Value {
        let chat: Vec<serde_json::Value> = to_chat_messages(messages)
            .into_iter()
            .map(|(role, content)| json!({"role": role, "content": content}))
            .collect();
        json!({
            "model": self.model_name,
            "messages": chat,
            "temperature": temperature,
        })
    }

    fn post_once(&self, body: &serde_json::Value) -> Result<Completion, AttemptError> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut request = self.client.post(&url).json(body);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let response = request
            .send()
            .map_err(|e| AttemptError::Retryable(format!("request failed: {e}")))?;
        let status = response.status();
        if status.as_u16() == 429 {
            return Err(AttemptError::RateLimited);
        }
        if status.is_server_error() {
            return Err(AttemptError::Retryable(format!("server error: {status}")));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(format!("http status {status}")));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| AttemptError::Fatal(format!("bad response body: {e}")))?;
        let content = parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .unwrap_or_default();
        if content.is_empty() {
            return Err(AttemptError::Empty);
        }
        let usage = parsed.usage.unwrap_or_default();
        let prompt_tokens = usage.prompt_tokens.unwrap_or_else(|| {
            body["messages"]
                .as_array()
                .map(|msgs| {
                    msgs.iter()
                        .filter_map(|m| m["content"].as_str())
                        .map(estimate_tokens)
                        .sum()
                })
                .unwrap_or(0)
        });
        let completion_tokens = usage
            .completion_tokens
            .unwrap_or_else(|| estimate_tokens(&content));
        Ok(Completion {
            text: content,
            prompt_tokens,
            completion_tokens,
            backend_id: self.model_name.clone(),
            wall_time_ms: 0,
        })
    }
}

enum AttemptError {
    Retryable(String),
    RateLimited,
    Fatal(String),
    Empty,
}

impl Backend for HttpBackend {
    fn generate(
        &self,
        messages: &MessageList,
        temperature: f64,
    ) -> Result<Completion, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::InvalidRequest("empty message list".to_string()));
        }
        let _permit = self.gate.as_ref().map(|gate| gate.acquire());
        self.generate_gated(messages, temperature)
    }
}

impl HttpBackend {
    fn generate_gated(
        &self,
        messages: &MessageList,
        temperature: f64,
    ) -> Result<Completion, BackendError> {
        let body = self.request_body(messages, temperature);
        let started = Instant::now();
        let mut last_rate_limited = false;
        let mut last_message = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                (self.sleep)(backoff_delay_ms(self.backoff_base_ms, attempt));
            }
            self.pace();
            match self.post_once(&body) {
                Ok(mut completion) => {
                    completion.wall_time_ms = started.elapsed().as_millis() as u64;
                    return Ok(completion);
                }
                Err(AttemptError::Retryable(message)) => {
                    last_rate_limited = false;
                    last_message = message;
                }
                Err(AttemptError::RateLimited) => {
                    last_rate_limited = true;
                }
                Err(AttemptError::Fatal(message)) => {
                    return Err(BackendError::Transport {
                        attempts: attempt + 1,
                        message,
                    })
                }
                Err(AttemptError::Empty) => return Err(BackendError::EmptyResponse),
            }
        }
        if last_rate_limited {
            Err(BackendError::RateLimited {
                attempts: self.max_retries + 1,
            })
        } else {
            Err(BackendError::Transport {
                attempts: self.max_retries + 1,
                message: last_message,
            })
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: String,
}

#[derive(Debug, Deserialize, Default)]
struct Usage {
    prompt_tokens: Option<u32>,
    completion_tokens: Option<u32>,
}
