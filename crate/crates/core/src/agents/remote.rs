//! Adapter for chat-style multimodal model endpoints.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::parse::parse_action;
use super::{Agent, AgentError, AgentRequest};
use crate::geometry::Action;
use crate::render::Sidecar;

/// Sent after a reply that contains no action token.
pub const FORMAT_REMINDER: &str =
    "Your previous reply did not contain a valid action. Reply with exactly one of: +X, -X, +Y, -Y, +Z, -Z.";

/// Connection settings. Sampling temperature is not a field: every request
/// is sent with temperature 0, and unknown keys are rejected so a config
/// cannot sneak one in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Replies allowed per step, including the first.
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    #[serde(default)]
    pub rate_limit_per_minute: Option<f64>,
    /// Fail the episode instead of recording a no-op when the budget runs out.
    #[serde(default)]
    pub abort_on_malformed: bool,
}

fn default_retry_budget() -> u32 {
    3
}

/// Moves one JSON request to the endpoint and returns the JSON response.
pub trait Transport: Send + Sync {
    fn post(
        &self,
        endpoint: &str,
        api_key: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, AgentError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post(
        &self,
        endpoint: &str,
        api_key: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, AgentError> {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        let agent = ureq::Agent::new_with_config(config);
        let mut req = agent.post(endpoint);
        if let Some(key) = api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => AgentError::Timeout {
                step: 0,
                budget: timeout,
            },
            e => AgentError::Transport(e.to_string()),
        };
        let resp = req.send_json(body).map_err(map_err)?;
        resp.into_body().read_json::<Value>().map_err(map_err)
    }
}

/// Test transport that returns canned responses in order and records every
/// request body.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    responses: Mutex<VecDeque<Result<Value, AgentError>>>,
    sent: Mutex<Vec<Value>>,
}

impl ScriptedTransport {
    pub fn new(responses: impl IntoIterator<Item = Result<Value, AgentError>>) -> Self {
        Self {
            responses: Mutex::new(responses.into_iter().collect()),
            sent: Mutex::new(Vec::new()),
        }
    }

    /// Convenience: each string becomes a chat-completion reply.
    pub fn replies<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        Self::new(
            texts.into_iter().map(|t| {
                Ok(json!({"choices": [{"message": {"role": "assistant", "content": t}}]}))
            }),
        )
    }

    pub fn sent(&self) -> Vec<Value> {
        self.sent.lock().unwrap().clone()
    }
}

impl Transport for ScriptedTransport {
    fn post(
        &self,
        _endpoint: &str,
        _api_key: Option<&str>,
        body: &Value,
        _timeout: Duration,
    ) -> Result<Value, AgentError> {
        self.sent.lock().unwrap().push(body.clone());
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(AgentError::Transport("script exhausted".into())))
    }
}

/// Token bucket holding at most one token, refilled at the configured rate.
/// Shared by every episode that uses the same remote agent.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_free: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_minute(rate: f64) -> Self {
        let interval = if rate > 0.0 {
            Duration::from_secs_f64(60.0 / rate)
        } else {
            Duration::ZERO
        };
        Self {
            interval,
            next_free: Mutex::new(Instant::now()),
        }
    }

    /// Reserves the next slot and returns how long the caller must wait for it.
    pub fn reserve(&self) -> Duration {
        let now = Instant::now();
        let mut next = self.next_free.lock().unwrap();
        let slot = (*next).max(now);
        *next = slot + self.interval;
        slot - now
    }

    pub fn acquire(&self) {
        let wait = self.reserve();
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

fn png_base64(frame: &crate::render::Frame) -> String {
    base64::engine::general_purpose::STANDARD.encode(frame.encode_png())
}

/// Request body for the first reply of a step. Contains the prompt, the
/// step text and the frames; never any ground truth.
pub fn wire_body(model: &str, req: &AgentRequest<'_>) -> Value {
    let mut messages = vec![json!({"role": "system", "text": req.prompt.system_text})];
    let (earlier, current) = match req.frames.split_last() {
        Some((cur, earlier)) => (earlier, Some(cur)),
        None => (&[][..], None),
    };
    for (i, f) in earlier.iter().enumerate() {
        messages.push(json!({
            "role": "user",
            "text": format!("Observation at step {i}."),
            "image": png_base64(f),
        }));
    }
    let mut last = json!({"role": "user", "text": req.user_text()});
    if let Some(f) = current {
        last["image"] = Value::String(png_base64(f));
    }
    messages.push(last);
    json!({"model": model, "temperature": 0, "messages": messages})
}

fn content_text(c: &Value) -> Option<String> {
    match c {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let texts: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            (!texts.is_empty()).then(|| texts.join("\n"))
        }
        _ => None,
    }
}

/// Reply text from the common response shapes.
fn reply_text(v: &Value) -> String {
    v.pointer("/choices/0/message/content")
        .or_else(|| v.get("text"))
        .or_else(|| v.get("content"))
        .and_then(content_text)
        .unwrap_or_default()
}

pub struct RemoteAgent {
    id: String,
    cfg: RemoteConfig,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    limiter: Option<Arc<RateLimiter>>,
}

impl std::fmt::Debug for RemoteAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteAgent")
            .field("id", &self.id)
            .field("model", &self.cfg.model)
            .finish_non_exhaustive()
    }
}

impl RemoteAgent {
    pub fn new(
        id: impl Into<String>,
        cfg: RemoteConfig,
        transport: Arc<dyn Transport>,
        limiter: Option<Arc<RateLimiter>>,
    ) -> Result<Self, AgentError> {
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                AgentError::Setup(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        Ok(Self {
            id: id.into(),
            cfg,
            api_key,
            transport,
            limiter,
        })
    }
}

impl Agent for RemoteAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(
        &mut self,
        req: &AgentRequest<'_>,
        _sidecar: Option<&Sidecar>,
    ) -> Result<Option<Action>, AgentError> {
        let started = Instant::now();
        let mut body = wire_body(&self.cfg.model, req);
        let attempts = self.cfg.retry_budget.max(1);
        for attempt in 1..=attempts {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            let remaining =
                req.timeout
                    .checked_sub(started.elapsed())
                    .ok_or(AgentError::Timeout {
                        step: req.step_index,
                        budget: req.timeout,
                    })?;
            let resp = self
                .transport
                .post(
                    &self.cfg.endpoint,
                    self.api_key.as_deref(),
                    &body,
                    remaining,
                )
                .map_err(|e| match e {
                    AgentError::Timeout { .. } => AgentError::Timeout {
                        step: req.step_index,
                        budget: req.timeout,
                    },
                    e => e,
                })?;
            let text = reply_text(&resp);
            if let Some(a) = parse_action(&text) {
                return Ok(Some(a));
            }
            tracing::debug!(agent = %self.id, step = req.step_index, attempt, "malformed reply");
            let messages = body["messages"].as_array_mut().expect("messages array");
            messages.push(json!({"role": "assistant", "text": text}));
            messages.push(json!({"role": "user", "text": FORMAT_REMINDER}));
        }
        if self.cfg.abort_on_malformed {
            Err(AgentError::ProtocolFailure { attempts })
        } else {
            Ok(None)
        }
    }
}
