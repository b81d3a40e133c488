//! Chat-completion transport with retries, fixture replay and a redacted trace.
//!
//! Wire format (OpenAI-compatible): `POST {base_url}/chat/completions` with
//! `{"model", "messages": [{"role", "content"}], "temperature"}`; the reply
//! text is `choices[0].message.content`.
//!
//! Status handling: 2xx succeeds, 429 waits for `Retry-After` (or the backoff
//! delay) and retries, other 4xx fail immediately, 5xx and transport errors
//! retry with exponential backoff up to `max_attempts` requests.
//!
//! Fixtures are stored one file per request, named by the SHA-256 of the
//! canonical request JSON.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{FixtureMode, LlmSpec, RetryPolicy};
use crate::error::LlmError;

/// Longest honoured `Retry-After`.
const MAX_RETRY_AFTER: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("request encodes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

/// One request attempt as recorded in the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub request_hash: String,
    pub url: String,
    pub attempt: u32,
    pub request: ChatRequest,
    /// `Authorization` header as sent, with the secret replaced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authorization: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub from_fixture: bool,
}

/// Trace shared by every client of a run; the engine drains it per episode.
pub type TraceBuffer = Arc<Mutex<Vec<TraceEntry>>>;

pub fn new_trace() -> TraceBuffer {
    Arc::new(Mutex::new(Vec::new()))
}

#[derive(Debug, Serialize, Deserialize)]
struct Fixture {
    request: ChatRequest,
    response: String,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// Extracts `choices[0].message.content`.
pub fn decode_completion(body: &str) -> Result<String, LlmError> {
    let r: CompletionResponse =
        serde_json::from_str(body).map_err(|e| LlmError::Decode(e.to_string()))?;
    r.choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| LlmError::Decode("no choices[0].message.content".into()))
}

#[derive(Clone)]
pub struct LlmClient {
    url: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
    fixture_mode: FixtureMode,
    fixture_dir: Option<PathBuf>,
    retry: RetryPolicy,
    agent: ureq::Agent,
    trace: TraceBuffer,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("fixture_mode", &self.fixture_mode)
            .finish_non_exhaustive()
    }
}

impl LlmClient {
    /// Resolves presets and reads the credential. Fails naming the variable
    /// when the configured key variable is unset (replay mode needs no key).
    pub fn new(spec: &LlmSpec, retry: RetryPolicy, trace: TraceBuffer) -> Result<Self, LlmError> {
        let spec = spec.resolved().map_err(|why| LlmError::Client {
            status: 0,
            body: why,
        })?;
        let api_key = match (&spec.api_key_env, spec.fixture_mode) {
            (_, FixtureMode::Replay) | (None, _) => None,
            (Some(var), _) => Some(
                std::env::var(var)
                    .ok()
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| LlmError::MissingCredential(var.clone()))?,
            ),
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(retry.timeout_s)))
            .build()
            .into();
        let base = spec.base_url.clone().unwrap_or_default();
        Ok(LlmClient {
            url: format!("{}/chat/completions", base.trim_end_matches('/')),
            model: spec.model.clone().unwrap_or_default(),
            temperature: spec.temperature,
            api_key,
            fixture_mode: spec.fixture_mode,
            fixture_dir: spec.fixture_dir.clone(),
            retry,
            agent,
            trace,
        })
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn trace(&self) -> &TraceBuffer {
        &self.trace
    }

    pub fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
        }
    }

    /// One chat completion.
    pub fn chat(&self, messages: Vec<ChatMessage>) -> Result<String, LlmError> {
        let req = self.request(messages);
        let hash = req.hash();
        if self.fixture_mode == FixtureMode::Replay {
            let text = self.read_fixture(&hash)?;
            self.record(TraceEntry {
                request_hash: hash,
                url: self.url.clone(),
                attempt: 1,
                request: req,
                authorization: None,
                status: None,
                response: Some(text.clone()),
                error: None,
                from_fixture: true,
            });
            return Ok(text);
        }
        let text = self.send_with_retry(&req, &hash)?;
        if self.fixture_mode == FixtureMode::Record {
            self.write_fixture(&hash, &req, &text)?;
        }
        Ok(text)
    }

    fn fixture_path(&self, hash: &str) -> Result<PathBuf, LlmError> {
        let dir = self
            .fixture_dir
            .as_deref()
            .ok_or_else(|| LlmError::Io("fixture_dir not configured".into()))?;
        Ok(fixture_file(dir, hash))
    }

    fn read_fixture(&self, hash: &str) -> Result<String, LlmError> {
        let path = self.fixture_path(hash)?;
        let text = std::fs::read_to_string(&path)
            .map_err(|_| LlmError::FixtureMissing(hash.to_string()))?;
        let f: Fixture = serde_json::from_str(&text)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(f.response)
    }

    fn write_fixture(&self, hash: &str, req: &ChatRequest, response: &str) -> Result<(), LlmError> {
        let path = self.fixture_path(hash)?;
        write_fixture_file(&path, req, response)
    }

    fn redact(&self, s: &str) -> String {
        match &self.api_key {
            Some(k) if !k.is_empty() => s.replace(k.as_str(), "[REDACTED]"),
            _ => s.to_string(),
        }
    }

    fn record(&self, entry: TraceEntry) {
        self.trace.lock().expect("trace lock").push(entry);
    }

    fn send_with_retry(&self, req: &ChatRequest, hash: &str) -> Result<String, LlmError> {
        let body = req.canonical_json();
        let max = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=max {
            let mut entry = TraceEntry {
                request_hash: hash.to_string(),
                url: self.url.clone(),
                attempt,
                request: req.clone(),
                authorization: self.api_key.as_ref().map(|_| "Bearer [REDACTED]".into()),
                status: None,
                response: None,
                error: None,
                from_fixture: false,
            };
            let wait = match self.send_once(&body) {
                Ok((status, text, retry_after)) => {
                    let text = self.redact(&text);
                    entry.status = Some(status);
                    entry.response = Some(text.clone());
                    self.record(entry);
                    match status {
                        200..=299 => return decode_completion(&text),
                        429 => {
                            last = format!("HTTP 429: {text}");
                            retry_after.map(|d| d.min(MAX_RETRY_AFTER))
                        }
                        400..=499 => return Err(LlmError::Client { status, body: text }),
                        _ => {
                            last = format!("HTTP {status}: {text}");
                            None
                        }
                    }
                }
                Err(e) => {
                    last = self.redact(&e);
                    entry.error = Some(last.clone());
                    self.record(entry);
                    None
                }
            };
            if attempt < max {
                let d = wait.unwrap_or_else(|| self.retry.delay(attempt));
                log::debug!("retrying {} in {:?} after: {last}", self.url, d);
                std::thread::sleep(d);
            }
        }
        Err(LlmError::Exhausted {
            attempts: max,
            last,
        })
    }

    fn send_once(&self, body: &str) -> Result<(u16, String, Option<Duration>), String> {
        let mut r = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            r = r.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = r.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok((status, text, retry_after))
    }
}

pub fn fixture_file(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("{hash}.json"))
}

/// Stores a fixture in the replay format.
pub fn write_fixture_file(path: &Path, req: &ChatRequest, response: &str) -> Result<(), LlmError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| LlmError::Io(e.to_string()))?;
    }
    let f = Fixture {
        request: req.clone(),
        response: response.to_string(),
    };
    let text = serde_json::to_string_pretty(&f).map_err(|e| LlmError::Io(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| LlmError::Io(e.to_string()))
}

/// Single request against an endpoint; convenience over [`LlmClient`].
pub fn llm_chat(
    spec: &LlmSpec,
    retry: RetryPolicy,
    messages: Vec<ChatMessage>,
) -> Result<(String, Vec<TraceEntry>), LlmError> {
    let trace = new_trace();
    let client = LlmClient::new(spec, retry, trace.clone())?;
    let text = client.chat(messages)?;
    let entries = std::mem::take(&mut *trace.lock().expect("trace lock"));
    Ok((text, entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_first_choice() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#;
        assert_eq!(decode_completion(body).unwrap(), "hi");
        assert!(decode_completion(r#"{"choices":[]}"#).is_err());
    }

    #[test]
    fn request_hash_is_stable() {
        let r = ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::user("x")],
            temperature: 0.7,
        };
        assert_eq!(r.hash(), r.clone().hash());
        assert_eq!(
            r.canonical_json(),
            r#"{"model":"m","messages":[{"role":"user","content":"x"}],"temperature":0.7}"#
        );
    }

    #[test]
    fn missing_credential_names_variable() {
        let spec = LlmSpec {
            base_url: Some("http://127.0.0.1:9".into()),
            model: Some("m".into()),
            api_key_env: Some("STEREOSIM_TEST_SURELY_UNSET_KEY".into()),
            ..Default::default()
        };
        let err = LlmClient::new(&spec, RetryPolicy::default(), new_trace()).unwrap_err();
        assert!(err.to_string().contains("STEREOSIM_TEST_SURELY_UNSET_KEY"));
    }
}
