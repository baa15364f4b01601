//! Chat-completions LM backend: renders requests with the shipped prompts,
//! attaches downscaled screenshots, retries with exponential backoff and caps
//! in-flight calls.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use actflow_core::annotator::{
    parse::parse_reply, prompts::render, Annotator, AnnotatorError, AnnotatorRequest,
    AnnotatorResponse,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::frames::png_data_url;

pub const DEFAULT_CREDENTIAL_ENV: &str = "ACTFLOW_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub credential_env: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
    /// Longer-edge cap, in pixels, for attached screenshots.
    pub max_image_edge: u32,
    pub max_in_flight: usize,
    pub timeout_seconds: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            credential_env: DEFAULT_CREDENTIAL_ENV.into(),
            max_retries: 3,
            backoff_ms: 500,
            max_image_edge: 1024,
            max_in_flight: 4,
            timeout_seconds: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    pub retryable: bool,
    pub message: String,
}

/// Sends one JSON POST and returns the response body.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(&str, String)],
        body: &str,
    ) -> Result<String, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        UreqTransport {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(&str, String)],
        body: &str,
    ) -> Result<String, TransportError> {
        let mut req = self.agent.post(url);
        for (k, v) in headers {
            req = req.header(*k, v.as_str());
        }
        let mut resp = req.send(body).map_err(|e| TransportError {
            retryable: true,
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError {
                retryable: true,
                message: e.to_string(),
            })?;
        if (200..300).contains(&status) {
            Ok(text)
        } else {
            Err(TransportError {
                retryable: status == 429 || status >= 500,
                message: format!(
                    "HTTP {status}: {}",
                    text.chars().take(300).collect::<String>()
                ),
            })
        }
    }
}

/// Counting semaphore bounding concurrent backend calls.
struct Gate {
    cap: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(cap: usize) -> Self {
        Gate {
            cap: cap.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut n = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        drop(n);
        let out = f();
        *self.active.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.freed.notify_one();
        out
    }
}

/// Shared connection state: config, transport, credential and call counters.
pub struct LlmBackend {
    config: LlmConfig,
    transport: Arc<dyn Transport>,
    credential: Option<String>,
    gate: Gate,
    requests: AtomicUsize,
}

impl LlmBackend {
    /// Reads the credential from the configured environment variable. A
    /// missing credential only fails calls that reach the network.
    pub fn from_env(config: LlmConfig) -> Self {
        let credential = std::env::var(&config.credential_env)
            .ok()
            .filter(|k| !k.is_empty());
        let transport = Arc::new(UreqTransport::new(Duration::from_secs(
            config.timeout_seconds,
        )));
        Self::new(config, transport, credential)
    }

    pub fn new(
        config: LlmConfig,
        transport: Arc<dyn Transport>,
        credential: Option<String>,
    ) -> Self {
        let gate = Gate::new(config.max_in_flight);
        LlmBackend {
            config,
            transport,
            credential,
            gate,
            requests: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// HTTP requests attempted so far, retries included.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn id(&self) -> String {
        format!("llm(model={})", self.config.model)
    }

    fn body(&self, req: &AnnotatorRequest, frames_root: &std::path::Path) -> Value {
        let r = render(req);
        let mut content = vec![json!({"type": "text", "text": r.user})];
        for img in &r.images {
            if let Ok(url) = png_data_url(&frames_root.join(&img.path), self.config.max_image_edge)
            {
                content.push(json!({"type": "image_url", "image_url": {"url": url}}));
            }
        }
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": r.system},
                {"role": "user", "content": content},
            ],
        })
    }

    fn send(&self, body: &str) -> Result<String, AnnotatorError> {
        let key = self
            .credential
            .as_ref()
            .ok_or_else(|| AnnotatorError::MissingCredential {
                var: self.config.credential_env.clone(),
            })?;
        let headers = [
            ("Authorization", format!("Bearer {key}")),
            ("Content-Type", "application/json".to_string()),
        ];
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(
                    self.config
                        .backoff_ms
                        .saturating_mul(1 << (attempt - 1).min(16)),
                ));
            }
            self.requests.fetch_add(1, Ordering::Relaxed);
            match self.gate.run(|| {
                self.transport
                    .post_json(&self.config.endpoint, &headers, body)
            }) {
                Ok(text) => return Ok(text),
                Err(e) if e.retryable => last = e.message,
                Err(e) => return Err(AnnotatorError::Backend(e.message)),
            }
        }
        Err(AnnotatorError::Exhausted { attempts, last })
    }
}

/// Pulls the assistant text out of a chat-completions response body.
pub fn reply_text(body: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(format!(
            "no message content in response: {}",
            body.chars().take(200).collect::<String>()
        )),
    }
}

/// The backend bound to one trajectory's screenshot directory.
#[derive(Clone)]
pub struct LlmAnnotator {
    backend: Arc<LlmBackend>,
    frames_root: PathBuf,
}

impl LlmAnnotator {
    pub fn new(backend: Arc<LlmBackend>, frames_root: impl Into<PathBuf>) -> Self {
        LlmAnnotator {
            backend,
            frames_root: frames_root.into(),
        }
    }
}

impl Annotator for LlmAnnotator {
    fn id(&self) -> String {
        self.backend.id()
    }

    fn call(&self, req: &AnnotatorRequest) -> Result<AnnotatorResponse, AnnotatorError> {
        req.check()?;
        let body = self.backend.body(req, &self.frames_root).to_string();
        let raw = self.backend.send(&body)?;
        let text = reply_text(&raw).map_err(AnnotatorError::Backend)?;
        parse_reply(req.kind(), &text)
    }
}
