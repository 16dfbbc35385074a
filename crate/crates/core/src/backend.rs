//! Completion backends: live HTTP, replay from a recording store, and a
//! scripted queue for tests.
//!
//! Recordings are JSON lines `{hash, prompt, completion, backend_id, ts}`
//! keyed by the SHA-256 of the prompt bytes. On replay the last record for a
//! hash wins.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::prompt::TaskKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt_text: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
}

impl CompletionRequest {
    /// Greedy decoding with the task's default stop sequences.
    pub fn for_task(task: TaskKind, prompt_text: impl Into<String>) -> Self {
        Self {
            prompt_text: prompt_text.into(),
            max_output_tokens: task.default_max_output_tokens(),
            temperature: 0.0,
            stop_sequences: task.stop_sequences(),
        }
    }

    fn validate(&self) -> Result<(), BackendError> {
        if self.prompt_text.is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!("temperature {} outside [0, 1]", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("rate limited by backend")]
    RateLimited,
    #[error("no recording for prompt {hash}")]
    ReplayMiss { hash: String },
    #[error("credentials missing: set ${var}")]
    AuthMissing { var: String },
    #[error("scripted backend has no responses left")]
    ScriptExhausted,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("recording store not writable: {0}")]
    StoreUnwritable(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(request)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(request)
    }
}

/// Hex SHA-256 of the UTF-8 prompt.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Returns queued responses in order, one per call.
pub struct ScriptedBackend {
    id: String,
    queue: Mutex<VecDeque<String>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { id: "scripted".into(), queue: Mutex::new(responses.into_iter().map(Into::into).collect()) }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("script lock poisoned").len()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        let text = self.queue.lock().expect("script lock poisoned").pop_front().ok_or(BackendError::ScriptExhausted)?;
        Ok(CompletionResult { text, backend_id: self.id.clone(), latency_ms: 0 })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recording {
    pub hash: String,
    pub prompt: String,
    pub completion: String,
    pub backend_id: String,
    pub ts: String,
}

/// Append-only JSON-lines recording file.
pub struct RecordingStore {
    path: PathBuf,
    append: Mutex<()>,
}

impl RecordingStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), append: Mutex::new(()) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&self, request: &CompletionRequest, result: &CompletionResult) -> Result<Recording, BackendError> {
        let rec = Recording {
            hash: prompt_hash(&request.prompt_text),
            prompt: request.prompt_text.clone(),
            completion: result.text.clone(),
            backend_id: result.backend_id.clone(),
            ts: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let line = serde_json::to_string(&rec).map_err(|e| BackendError::StoreUnwritable(e.to_string()))?;
        let _guard = self.append.lock().expect("store lock poisoned");
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| BackendError::StoreUnwritable(format!("{}: {e}", self.path.display())))?;
        writeln!(file, "{line}").map_err(|e| BackendError::StoreUnwritable(e.to_string()))?;
        Ok(rec)
    }

    /// All records in file order; a missing file is an empty store.
    pub fn load(&self) -> Result<Vec<Recording>, BackendError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(BackendError::Config(format!("{}: {e}", self.path.display()))),
        };
        let mut out = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| BackendError::Config(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Recording = serde_json::from_str(&line)
                .map_err(|e| BackendError::Config(format!("{}:{}: {e}", self.path.display(), n + 1)))?;
            out.push(rec);
        }
        Ok(out)
    }
}

/// Serves recorded completions keyed by prompt hash.
pub struct ReplayBackend {
    id: String,
    recordings: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn from_recordings(recordings: impl IntoIterator<Item = Recording>) -> Self {
        let recordings = recordings.into_iter().map(|r| (r.hash, r.completion)).collect();
        Self { id: "replay".into(), recordings }
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self, BackendError> {
        Ok(Self::from_recordings(RecordingStore::new(path).load()?))
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }
}

impl CompletionBackend for ReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        let hash = prompt_hash(&request.prompt_text);
        match self.recordings.get(&hash) {
            Some(text) => Ok(CompletionResult { text: text.clone(), backend_id: self.id.clone(), latency_ms: 0 }),
            None => Err(BackendError::ReplayMiss { hash }),
        }
    }
}

/// Wraps a backend and appends every successful completion to a store.
pub struct RecordingBackend<B> {
    inner: B,
    store: RecordingStore,
}

impl<B: CompletionBackend> RecordingBackend<B> {
    pub fn new(inner: B, store: RecordingStore) -> Self {
        Self { inner, store }
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let result = self.inner.complete(request)?;
        self.store.record(request, &result)?;
        Ok(result)
    }
}

/// Backend selection as it appears in the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Replay { store: PathBuf },
    Scripted { responses: Vec<String> },
    #[cfg(feature = "live")]
    Live(live::LiveConfig),
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn CompletionBackend>, BackendError> {
        Ok(match self {
            BackendConfig::Replay { store } => Box::new(ReplayBackend::open(store.clone())?),
            BackendConfig::Scripted { responses } => Box::new(ScriptedBackend::new(responses.clone())),
            #[cfg(feature = "live")]
            BackendConfig::Live(cfg) => Box::new(live::LiveBackend::new(cfg.clone())?),
        })
    }
}

#[cfg(feature = "live")]
pub mod live {
    //! Endpoint-configurable HTTP completion backend.
    //!
    //! The request body is a JSON template; string values equal to
    //! `{prompt}`, `{max_tokens}`, `{temperature}`, `{stop}` or `{model}`
    //! are replaced by typed values, and `{prompt}`/`{model}` inside longer
    //! strings are substituted textually. The completion is read from the
    //! response with a JSON pointer.

    use std::sync::{Condvar, Mutex};
    use std::time::{Duration, Instant};

    use serde::{Deserialize, Serialize};
    use serde_json::{json, Value};

    use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResult};

    fn elapsed_ms(start: Instant) -> u64 {
        start.elapsed().as_millis().try_into().unwrap_or(u64::MAX)
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    #[serde(default)]
    pub struct LiveConfig {
        pub backend_id: String,
        pub url: String,
        pub model: Option<String>,
        pub request_template: Value,
        pub response_path: String,
        /// Name of the environment variable holding the API key.
        pub auth_env: Option<String>,
        pub auth_header: String,
        pub auth_prefix: String,
        pub max_retries: u32,
        pub initial_backoff_ms: u64,
        pub timeout_ms: u64,
        pub max_in_flight: usize,
    }

    impl Default for LiveConfig {
        fn default() -> Self {
            Self {
                backend_id: "live".into(),
                url: "http://127.0.0.1:8000/v1/completions".into(),
                model: None,
                request_template: json!({
                    "model": "{model}",
                    "prompt": "{prompt}",
                    "max_tokens": "{max_tokens}",
                    "temperature": "{temperature}",
                    "stop": "{stop}"
                }),
                response_path: "/choices/0/text".into(),
                auth_env: None,
                auth_header: "Authorization".into(),
                auth_prefix: "Bearer ".into(),
                max_retries: 3,
                initial_backoff_ms: 500,
                timeout_ms: 60_000,
                max_in_flight: 4,
            }
        }
    }

    pub fn render_body(template: &Value, req: &CompletionRequest, model: Option<&str>) -> Value {
        match template {
            Value::String(s) => match s.as_str() {
                "{prompt}" => Value::from(req.prompt_text.clone()),
                "{max_tokens}" => Value::from(req.max_output_tokens),
                "{temperature}" => Value::from(req.temperature),
                "{stop}" => Value::from(req.stop_sequences.clone()),
                "{model}" => model.map_or(Value::Null, Value::from),
                other => Value::from(
                    other.replace("{prompt}", &req.prompt_text).replace("{model}", model.unwrap_or_default()),
                ),
            },
            Value::Array(items) => Value::Array(items.iter().map(|v| render_body(v, req, model)).collect()),
            Value::Object(map) => {
                Value::Object(map.iter().map(|(k, v)| (k.clone(), render_body(v, req, model))).collect())
            }
            other => other.clone(),
        }
    }

    pub fn extract_text(body: &Value, pointer: &str) -> Result<String, BackendError> {
        match body.pointer(pointer) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Null) => Ok(String::new()),
            Some(other) => Err(BackendError::BackendUnavailable(format!("{pointer} is not a string: {other}"))),
            None => Err(BackendError::BackendUnavailable(format!("response has no {pointer}"))),
        }
    }

    /// Counting semaphore bounding concurrent HTTP calls.
    struct Gate {
        free: Mutex<usize>,
        cv: Condvar,
    }

    struct Permit<'a>(&'a Gate);

    impl Gate {
        fn new(n: usize) -> Self {
            Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
        }

        fn acquire(&self) -> Permit<'_> {
            let mut free = self.free.lock().expect("gate poisoned");
            while *free == 0 {
                free = self.cv.wait(free).expect("gate poisoned");
            }
            *free -= 1;
            Permit(self)
        }
    }

    impl Drop for Permit<'_> {
        fn drop(&mut self) {
            *self.0.free.lock().expect("gate poisoned") += 1;
            self.0.cv.notify_one();
        }
    }

    pub struct LiveBackend {
        cfg: LiveConfig,
        client: reqwest::blocking::Client,
        gate: Gate,
    }

    impl LiveBackend {
        pub fn new(cfg: LiveConfig) -> Result<Self, BackendError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_millis(cfg.timeout_ms))
                .build()
                .map_err(|e| BackendError::Config(e.to_string()))?;
            let gate = Gate::new(cfg.max_in_flight);
            Ok(Self { cfg, client, gate })
        }

        fn credentials(&self) -> Result<Option<String>, BackendError> {
            match &self.cfg.auth_env {
                None => Ok(None),
                Some(var) => match std::env::var(var) {
                    Ok(v) if !v.is_empty() => Ok(Some(v)),
                    _ => Err(BackendError::AuthMissing { var: var.clone() }),
                },
            }
        }
    }

    enum Attempt {
        Done(String),
        Retry(BackendError),
        Fatal(BackendError),
    }

    impl LiveBackend {
        fn attempt(&self, body: &Value, key: Option<&str>) -> Attempt {
            let url = self.cfg.url.replace("{model}", self.cfg.model.as_deref().unwrap_or_default());
            let mut req = self.client.post(url).json(body);
            if let Some(key) = key {
                req = req.header(self.cfg.auth_header.as_str(), format!("{}{key}", self.cfg.auth_prefix));
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => return Attempt::Retry(BackendError::BackendUnavailable(e.to_string())),
            };
            let status = resp.status();
            if status.as_u16() == 429 {
                return Attempt::Retry(BackendError::RateLimited);
            }
            if status.is_server_error() {
                return Attempt::Retry(BackendError::BackendUnavailable(format!("HTTP {status}")));
            }
            if !status.is_success() {
                let text = resp.text().unwrap_or_default();
                return Attempt::Fatal(BackendError::BackendUnavailable(format!("HTTP {status}: {text}")));
            }
            match resp.json::<Value>() {
                Ok(json) => match extract_text(&json, &self.cfg.response_path) {
                    Ok(text) => Attempt::Done(text),
                    Err(e) => Attempt::Fatal(e),
                },
                Err(e) => Attempt::Fatal(BackendError::BackendUnavailable(format!("bad JSON response: {e}"))),
            }
        }
    }

    impl CompletionBackend for LiveBackend {
        fn id(&self) -> &str {
            &self.cfg.backend_id
        }

        fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
            request.validate()?;
            let key = self.credentials()?;
            let body = render_body(&self.cfg.request_template, request, self.cfg.model.as_deref());
            let _permit = self.gate.acquire();
            let start = Instant::now();
            let mut backoff = Duration::from_millis(self.cfg.initial_backoff_ms);
            let mut attempt = 0;
            loop {
                match self.attempt(&body, key.as_deref()) {
                    Attempt::Done(text) => {
                        return Ok(CompletionResult {
                            text,
                            backend_id: self.cfg.backend_id.clone(),
                            latency_ms: elapsed_ms(start),
                        })
                    }
                    Attempt::Fatal(e) => return Err(e),
                    Attempt::Retry(e) if attempt >= self.cfg.max_retries => return Err(e),
                    Attempt::Retry(_) => {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                        attempt += 1;
                    }
                }
            }
        }
    }
}
