//! Blocking client for OpenAI-compatible `/chat/completions` endpoints.

use std::io::Cursor;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use log::debug;
use serde_json::{json, Value};
use ureq::Agent;

use super::{build_prompt, parse_verdict, Judge, JudgeError, JudgeInputs, JudgeKind, JudgeVerdict};
use crate::frame_store::FrameSequence;

/// Environment variable holding the bearer token for the endpoint.
pub const API_KEY_ENV: &str = "ROVA_JUDGE_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeEndpoint {
    /// Base URL without the `/chat/completions` suffix.
    pub base_url: String,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// Delay before the first retry; doubled on each further attempt.
    pub backoff: Duration,
    /// Number of masked frames attached to difficulty requests.
    pub frame_samples: usize,
}

impl Default for JudgeEndpoint {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".to_owned(),
            model: "gpt-4o".to_owned(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            max_in_flight: 8,
            backoff: Duration::from_millis(500),
            frame_samples: 8,
        }
    }
}

impl JudgeEndpoint {
    pub fn validate(&self) -> Result<(), JudgeError> {
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(JudgeError::Endpoint(format!(
                "base_url must start with http:// or https://, got {:?}",
                self.base_url
            )));
        }
        if self.timeout.is_zero() {
            return Err(JudgeError::Endpoint("timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(JudgeError::Endpoint("max_in_flight must be at least 1".into()));
        }
        if self.frame_samples == 0 {
            return Err(JudgeError::Endpoint("frame_samples must be at least 1".into()));
        }
        Ok(())
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    ready: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            ready: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.ready.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.ready.notify_one();
    }
}

pub struct RemoteJudge {
    endpoint: JudgeEndpoint,
    agent: Agent,
    api_key: Option<String>,
    slots: Slots,
}

impl std::fmt::Debug for RemoteJudge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteJudge")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

enum Attempt {
    Retry(String),
    Fatal(JudgeError),
}

impl RemoteJudge {
    /// Builds a client, reading the API key from [`API_KEY_ENV`] if set.
    pub fn new(endpoint: JudgeEndpoint) -> Result<Self, JudgeError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(endpoint, key)
    }

    pub fn with_api_key(endpoint: JudgeEndpoint, api_key: Option<String>) -> Result<Self, JudgeError> {
        endpoint.validate()?;
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(endpoint.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            slots: Slots::new(endpoint.max_in_flight),
            endpoint,
            agent,
            api_key,
        })
    }

    pub fn endpoint(&self) -> &JudgeEndpoint {
        &self.endpoint
    }

    fn request_body(&self, kind: JudgeKind, inputs: &JudgeInputs) -> Result<Value, JudgeError> {
        let prompt = build_prompt(kind, inputs)?;
        let content = match (kind, &inputs.masked_video) {
            (JudgeKind::Difficulty, Some(video)) => {
                let mut parts = vec![json!({"type": "text", "text": prompt})];
                for png in subsample_png(video, self.endpoint.frame_samples)? {
                    parts.push(json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:image/png;base64,{}", STANDARD.encode(png))}
                    }));
                }
                Value::Array(parts)
            }
            _ => Value::String(prompt),
        };
        Ok(json!({
            "model": self.endpoint.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        }))
    }

    fn attempt(&self, body: &Value) -> Result<String, Attempt> {
        let _slot = self.slots.acquire();
        let mut request = self.agent.post(self.endpoint.url());
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        debug!("judge response status {status}: {}", truncate(&text, 2000));
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(JudgeError::Http {
                status,
                body: truncate(&text, 500),
            }));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(JudgeError::Protocol(format!("{e}: {}", truncate(&text, 500)))))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| Attempt::Fatal(JudgeError::Protocol("missing choices[0].message.content".into())))
    }
}

impl Judge for RemoteJudge {
    fn judge(&self, kind: JudgeKind, inputs: &JudgeInputs) -> Result<JudgeVerdict, JudgeError> {
        let body = self.request_body(kind, inputs)?;
        debug!("judge request ({kind}): {}", redact(&body));
        let mut delay = self.endpoint.backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(content) => return parse_verdict(kind, &content),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    if attempts > self.endpoint.max_retries {
                        return Err(JudgeError::Transport { attempts, message });
                    }
                    debug!("judge attempt {attempts} failed ({message}); retrying in {delay:?}");
                    thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
    }
}

/// Uniform-stride frame indices: `k * T / n` for `k < min(n, T)`.
pub(crate) fn subsample_indices(t: usize, n: usize) -> Vec<usize> {
    let n = n.min(t);
    (0..n).map(|k| k * t / n).collect()
}

fn subsample_png(video: &FrameSequence, n: usize) -> Result<Vec<Vec<u8>>, JudgeError> {
    subsample_indices(video.len(), n)
        .into_iter()
        .map(|t| {
            let mut out = Cursor::new(Vec::new());
            PngEncoder::new(&mut out)
                .write_image(
                    video.frame(t),
                    video.width() as u32,
                    video.height() as u32,
                    ExtendedColorType::Rgb8,
                )
                .map_err(|e| JudgeError::Encode(e.to_string()))?;
            Ok(out.into_inner())
        })
        .collect()
}

fn truncate(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &text[..i]),
        None => text.to_owned(),
    }
}

/// Request body with inline image payloads replaced by a placeholder.
fn redact(body: &Value) -> String {
    let mut body = body.clone();
    if let Some(parts) = body
        .pointer_mut("/messages/0/content")
        .and_then(Value::as_array_mut)
    {
        for part in parts {
            if let Some(url) = part.pointer_mut("/image_url/url") {
                *url = Value::String("<image omitted>".into());
            }
        }
    }
    body.to_string()
}
