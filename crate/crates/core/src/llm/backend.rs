use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{LlmError, LlmParams, Prompt};

/// Environment variable holding the bearer token for the HTTP backend.
pub const API_KEY_ENV: &str = "STRUCTSYNTH_API_KEY";

/// A completion source. Implementations must tolerate concurrent callers.
pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError>;

    /// Number of `complete` calls served so far.
    fn calls(&self) -> usize;

    /// How many requests callers may usefully have in flight at once.
    fn parallelism(&self) -> usize {
        1
    }
}

/// Replays canned responses keyed by `kind:subject`, or by the bare `kind`
/// when no exact key was scripted. Access is serialized so replay order is
/// well-defined.
#[derive(Debug, Default)]
pub struct MockBackend {
    script: Mutex<BTreeMap<String, VecDeque<String>>>,
    log: Mutex<Vec<String>>,
}

impl MockBackend {
    pub fn new(script: BTreeMap<String, Vec<String>>) -> Self {
        Self {
            script: Mutex::new(
                script
                    .into_iter()
                    .map(|(k, v)| (k, v.into_iter().collect()))
                    .collect(),
            ),
            log: Mutex::default(),
        }
    }

    pub fn from_pairs<I, K, V, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(
            pairs
                .into_iter()
                .map(|(k, v)| (k.into(), v.into_iter().map(Into::into).collect()))
                .collect(),
        )
    }

    /// Parses the script file format: a JSON object mapping `kind:subject`
    /// to a list of response strings.
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let script: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| LlmError::Config(format!("mock script: {e}")))?;
        Ok(Self::new(script))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("cannot read mock script {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Script keys of the calls served so far, in order.
    pub fn call_log(&self) -> Vec<String> {
        self.log.lock().expect("mock log poisoned").clone()
    }

    pub fn remaining(&self, key: &str) -> usize {
        self.script
            .lock()
            .expect("mock script poisoned")
            .get(key)
            .map_or(0, VecDeque::len)
    }
}

impl Backend for MockBackend {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let key = prompt.script_key();
        let mut script = self.script.lock().expect("mock script poisoned");
        let slot = if script.contains_key(&key) {
            key.clone()
        } else {
            prompt.kind.as_str().to_string()
        };
        let response = script
            .get_mut(&slot)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| LlmError::ScriptExhausted(key.clone()))?;
        self.log.lock().expect("mock log poisoned").push(key);
        Ok(response)
    }

    fn calls(&self) -> usize {
        self.log.lock().expect("mock log poisoned").len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub params: LlmParams,
    pub max_in_flight: usize,
    pub attempts: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            params: LlmParams::default(),
            max_in_flight: 4,
            attempts: 3,
            backoff_ms: 500,
            timeout_secs: 300,
        }
    }
}

/// Chat-completions client: one user message per call, bearer auth from
/// [`API_KEY_ENV`], bounded concurrency, retries with exponential backoff.
pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
    calls: AtomicUsize,
}

enum Attempt {
    Done(String),
    Retry(LlmError),
    Fail(LlmError),
}

impl HttpBackend {
    /// Reads the API key from the environment; a missing key is allowed for
    /// unauthenticated local endpoints.
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(config, key)
    }

    pub fn with_key(config: HttpConfig, api_key: Option<String>) -> Result<Self, LlmError> {
        config.params.validate()?;
        if config.endpoint.is_empty() {
            return Err(LlmError::Config("endpoint is empty".into()));
        }
        if config.max_in_flight == 0 || config.attempts == 0 {
            return Err(LlmError::Config("max_in_flight and attempts must be positive".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            agent,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
            calls: AtomicUsize::new(0),
        })
    }

    fn request_body(&self, prompt: &Prompt) -> String {
        let p = &self.config.params;
        json!({
            "model": p.model,
            "messages": [{ "role": "user", "content": prompt.text }],
            "temperature": p.temperature,
            "top_p": p.top_p,
            "max_tokens": p.max_tokens,
            "frequency_penalty": p.frequency_penalty,
            "presence_penalty": p.presence_penalty,
        })
        .to_string()
    }

    fn attempt(&self, body: &str) -> Attempt {
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(LlmError::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(LlmError::Transport(e.to_string())),
        };
        match status {
            200..=299 => match extract_completion(&text) {
                Ok(content) => Attempt::Done(content),
                Err(e) => Attempt::Fail(e),
            },
            429 => Attempt::Retry(LlmError::RateLimited { attempts: 0 }),
            500..=599 => Attempt::Retry(LlmError::Transport(format!("HTTP {status}: {text}"))),
            _ => Attempt::Fail(LlmError::Transport(format!("HTTP {status}: {text}"))),
        }
    }

    fn acquire(&self) {
        let mut n = self.in_flight.lock().expect("in-flight lock poisoned");
        while *n >= self.config.max_in_flight {
            n = self.slot_freed.wait(n).expect("in-flight lock poisoned");
        }
        *n += 1;
    }

    fn release(&self) {
        *self.in_flight.lock().expect("in-flight lock poisoned") -= 1;
        self.slot_freed.notify_one();
    }
}

impl Backend for HttpBackend {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let body = self.request_body(prompt);
        self.acquire();
        let mut last = LlmError::Transport("no attempt made".into());
        let mut result = None;
        for attempt in 0..self.config.attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1)));
            }
            match self.attempt(&body) {
                Attempt::Done(text) => {
                    result = Some(Ok(text));
                    break;
                }
                Attempt::Fail(e) => {
                    result = Some(Err(e));
                    break;
                }
                Attempt::Retry(e) => {
                    log::warn!("attempt {} for {} failed: {e}", attempt + 1, prompt.script_key());
                    last = e;
                }
            }
        }
        self.release();
        result.unwrap_or_else(|| {
            Err(match last {
                LlmError::RateLimited { .. } => LlmError::RateLimited {
                    attempts: self.config.attempts,
                },
                other => other,
            })
        })
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn parallelism(&self) -> usize {
        self.config.max_in_flight
    }
}

fn extract_completion(body: &str) -> Result<String, LlmError> {
    let v: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| LlmError::Transport(format!("response is not JSON: {e}")))?;
    let choice = v["choices"]
        .get(0)
        .ok_or_else(|| LlmError::Transport("response has no choices".into()))?;
    if choice["finish_reason"].as_str() == Some("length") {
        return Err(LlmError::Truncated);
    }
    choice["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| LlmError::Transport("response has no message content".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::PromptKind;

    fn prompt(kind: PromptKind, subject: Option<&str>) -> Prompt {
        Prompt {
            kind,
            subject: subject.map(str::to_string),
            text: "hello".into(),
        }
    }

    #[test]
    fn mock_replays_then_exhausts() {
        let mock = MockBackend::from_json(r#"{"source:": ["[\"Age\",\"Sex\"]"], "generate:Age": ["[]"]}"#).unwrap();
        assert_eq!(mock.complete(&prompt(PromptKind::Source, None)).unwrap(), r#"["Age","Sex"]"#);
        assert_eq!(
            mock.complete(&prompt(PromptKind::Source, None)),
            Err(LlmError::ScriptExhausted("source:".into()))
        );
        assert_eq!(mock.complete(&prompt(PromptKind::Generate, Some("Age"))).unwrap(), "[]");
        assert!(matches!(
            mock.complete(&prompt(PromptKind::Generate, Some("Sex"))),
            Err(LlmError::ScriptExhausted(_))
        ));
        assert_eq!(mock.calls(), 2);
    }

    #[test]
    fn mock_falls_back_to_kind_key() {
        let mock = MockBackend::from_pairs([("resolve", vec!["a", "b"]), ("resolve:X->Y", vec!["exact"])]);
        assert_eq!(mock.complete(&prompt(PromptKind::Resolve, Some("X->Y"))).unwrap(), "exact");
        // an exhausted exact key does not borrow from the wildcard
        assert!(mock.complete(&prompt(PromptKind::Resolve, Some("X->Y"))).is_err());
        assert_eq!(mock.complete(&prompt(PromptKind::Resolve, Some("P->Q"))).unwrap(), "a");
        assert_eq!(mock.complete(&prompt(PromptKind::Resolve, Some("R->S"))).unwrap(), "b");
        assert_eq!(mock.call_log(), vec!["resolve:X->Y", "resolve:P->Q", "resolve:R->S"]);
    }

    #[test]
    fn completion_extraction() {
        let ok = r#"{"choices":[{"message":{"content":"hi"},"finish_reason":"stop"}]}"#;
        assert_eq!(extract_completion(ok).unwrap(), "hi");
        let cut = r#"{"choices":[{"message":{"content":"partial"},"finish_reason":"length"}]}"#;
        assert_eq!(extract_completion(cut), Err(LlmError::Truncated));
        assert!(extract_completion("{}").is_err());
    }

    #[test]
    fn request_body_carries_params() {
        let backend = HttpBackend::with_key(HttpConfig::default(), None).unwrap();
        let body: serde_json::Value = serde_json::from_str(&backend.request_body(&prompt(PromptKind::Source, None))).unwrap();
        assert_eq!(body["temperature"], 0.9);
        assert_eq!(body["top_p"], 0.95);
        assert_eq!(body["max_tokens"], 8000);
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert_eq!(body["messages"][0]["role"], "user");
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = HttpConfig {
            max_in_flight: 0,
            ..HttpConfig::default()
        };
        assert!(HttpBackend::with_key(cfg, None).is_err());
    }
}
