//! Chat-completion client with a record/replay cache.
//!
//! Every request is keyed by a SHA-256 over its canonical encoding. In
//! `replay` mode responses come only from the cache and a miss is an error;
//! the transport is never touched. In `record` mode each live response is
//! appended to a JSONL file of [`ExchangeRecord`]s.

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Semaphore;

pub const DEFAULT_MODEL: &str = "gpt-4o-2024-05-13";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model_name: String,
    pub temperature: f64,
    pub prompt: String,
}

impl LlmRequest {
    /// Default model at temperature zero.
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            model_name: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            prompt: prompt.into(),
        }
    }

    pub fn with_model(mut self, model_name: impl Into<String>, temperature: f64) -> Self {
        self.model_name = model_name.into();
        self.temperature = temperature;
        self
    }
}

#[derive(Serialize)]
struct CanonicalRequest<'a> {
    model_name: &'a str,
    prompt: &'a str,
    temperature: f64,
}

/// Lowercase hex SHA-256 of `{"model_name":…,"prompt":…,"temperature":…}`.
pub fn request_hash(req: &LlmRequest) -> String {
    let canonical = serde_json::to_vec(&CanonicalRequest {
        model_name: &req.model_name,
        prompt: &req.prompt,
        temperature: req.temperature,
    })
    .expect("request always serializes");
    hex::encode(Sha256::digest(&canonical))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub request_hash: String,
    pub request: LlmRequest,
    pub response_text: String,
    pub recorded_at: DateTime<Utc>,
}

impl ExchangeRecord {
    pub fn new(request: LlmRequest, response_text: impl Into<String>, recorded_at: DateTime<Utc>) -> Self {
        Self {
            request_hash: request_hash(&request),
            request,
            response_text: response_text.into(),
            recorded_at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

impl GatewayMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GatewayMode::Live => "live",
            GatewayMode::Record => "record",
            GatewayMode::Replay => "replay",
        }
    }

    pub fn uses_network(self) -> bool {
        !matches!(self, GatewayMode::Replay)
    }
}

impl fmt::Display for GatewayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GatewayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(GatewayMode::Live),
            "record" => Ok(GatewayMode::Record),
            "replay" => Ok(GatewayMode::Replay),
            other => Err(format!("unknown gateway mode `{other}` (expected live, record or replay)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("API credential missing: set {0}")]
    MissingCredential(String),
    #[error("replay cache miss for request {request_hash}")]
    CacheMiss { request_hash: String },
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("replay cache file not found: {0}")]
    CacheNotFound(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no transport configured for {0} mode")]
    NoTransport(GatewayMode),
}

impl GatewayError {
    /// Short machine-readable kind, used in run documents.
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Http { .. } => "http",
            GatewayError::Network(_) => "network",
            GatewayError::MissingCredential(_) => "missing_credential",
            GatewayError::CacheMiss { .. } => "cache_miss",
            GatewayError::MalformedResponse(_) => "malformed_response",
            GatewayError::Cache(_) => "cache",
            GatewayError::CacheNotFound(_) => "cache_not_found",
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::NoTransport(_) => "no_transport",
        }
    }

    /// Problems with setup rather than with a single request.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            GatewayError::MissingCredential(_)
                | GatewayError::CacheNotFound(_)
                | GatewayError::NoTransport(_)
        )
    }
}

/// Something that can turn a request into response text.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn complete(&self, req: &LlmRequest) -> Result<String, GatewayError>;
}

/// Exchange records keyed by request hash. Reads are concurrent, appends
/// to the backing file are serialized.
#[derive(Debug, Default)]
pub struct ExchangeCache {
    entries: RwLock<HashMap<String, ExchangeRecord>>,
    sink: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl ExchangeCache {
    pub fn in_memory(records: impl IntoIterator<Item = ExchangeRecord>) -> Self {
        let entries = records
            .into_iter()
            .map(|r| (r.request_hash.clone(), r))
            .collect();
        Self {
            entries: RwLock::new(entries),
            sink: None,
            path: None,
        }
    }

    /// Parses JSONL; later records for the same hash replace earlier ones.
    pub fn parse_jsonl(text: &str) -> Result<Vec<ExchangeRecord>, GatewayError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str::<ExchangeRecord>(l)
                    .map_err(|e| GatewayError::Cache(format!("line {}: {e}", n + 1)))
            })
            .collect()
    }

    /// Loads an existing cache file read-only.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        if !path.is_file() {
            return Err(GatewayError::CacheNotFound(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Cache(e.to_string()))?;
        let mut cache = Self::in_memory(Self::parse_jsonl(&text)?);
        cache.path = Some(path.to_path_buf());
        Ok(cache)
    }

    /// Loads `path` if it exists and opens it for appending.
    pub fn open_append(path: &Path) -> Result<Self, GatewayError> {
        let mut cache = if path.is_file() {
            Self::load(path)?
        } else {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| GatewayError::Cache(e.to_string()))?;
            }
            Self::default()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::Cache(e.to_string()))?;
        cache.sink = Some(Mutex::new(BufWriter::new(file)));
        cache.path = Some(path.to_path_buf());
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, hash: &str) -> Option<ExchangeRecord> {
        self.entries.read().expect("cache lock").get(hash).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, record: ExchangeRecord) -> Result<(), GatewayError> {
        if let Some(sink) = &self.sink {
            let line = serde_json::to_string(&record).map_err(|e| GatewayError::Cache(e.to_string()))?;
            let mut w = sink.lock().expect("cache sink lock");
            writeln!(w, "{line}")
                .and_then(|_| w.flush())
                .map_err(|e| GatewayError::Cache(e.to_string()))?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(record.request_hash.clone(), record);
        Ok(())
    }

    /// All records sorted by hash.
    pub fn records(&self) -> Vec<ExchangeRecord> {
        let mut v: Vec<_> = self.entries.read().expect("cache lock").values().cloned().collect();
        v.sort_by(|a, b| a.request_hash.cmp(&b.request_hash));
        v
    }
}

/// OpenAI-compatible `/chat/completions` over HTTP.
pub struct HttpTransport {
    client: reqwest::Client,
    endpoint: String,
    api_key: String,
    max_retries: u32,
    initial_backoff: Duration,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: Option<String>,
}

impl HttpTransport {
    pub fn new(
        base_url: &str,
        api_key: impl Into<String>,
        timeout: Duration,
        max_retries: u32,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Network(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key: api_key.into(),
            max_retries,
            initial_backoff: Duration::from_millis(500),
        })
    }

    /// Reads the credential from [`API_KEY_ENV`].
    pub fn from_env(base_url: &str, timeout: Duration, max_retries: u32) -> Result<Self, GatewayError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| GatewayError::MissingCredential(API_KEY_ENV.to_string()))?;
        Self::new(base_url, key, timeout, max_retries)
    }

    pub fn with_initial_backoff(mut self, backoff: Duration) -> Self {
        self.initial_backoff = backoff;
        self
    }

    async fn attempt(&self, req: &LlmRequest) -> Result<String, GatewayError> {
        let body = ChatRequest {
            model: &req.model_name,
            temperature: req.temperature,
            messages: [ChatMessage {
                role: "user",
                content: &req.prompt,
            }],
        };
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| GatewayError::Network(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| GatewayError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Http {
                status: status.as_u16(),
                message: text.chars().take(500).collect(),
            });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::MalformedResponse("no choices[0].message.content".into()))
    }
}

fn retryable(err: &GatewayError) -> bool {
    match err {
        GatewayError::Http { status, .. } => *status == 429 || (500..600).contains(status),
        GatewayError::Network(_) => true,
        _ => false,
    }
}

#[async_trait]
impl Transport for HttpTransport {
    async fn complete(&self, req: &LlmRequest) -> Result<String, GatewayError> {
        let mut backoff = self.initial_backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(req).await {
                Err(e) if retryable(&e) && attempt < self.max_retries => {
                    tracing::warn!(attempt, error = %e, "retrying chat completion");
                    tokio::time::sleep(backoff).await;
                    backoff *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Settings shared by everything that talks to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub mode: GatewayMode,
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub permits: usize,
    pub cache_path: Option<PathBuf>,
    pub max_retries: u32,
    pub timeout_secs: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            mode: GatewayMode::Replay,
            base_url: DEFAULT_BASE_URL.to_string(),
            model_name: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            permits: 4,
            cache_path: None,
            max_retries: 3,
            timeout_secs: 120,
        }
    }
}

type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Routes requests according to [`GatewayMode`].
#[derive(Clone)]
pub struct Gateway {
    mode: GatewayMode,
    transport: Option<Arc<dyn Transport>>,
    cache: Arc<ExchangeCache>,
    permits: Arc<Semaphore>,
    permit_limit: usize,
    clock: Clock,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("has_transport", &self.transport.is_some())
            .field("cached", &self.cache.len())
            .finish()
    }
}

impl Gateway {
    pub fn new(
        mode: GatewayMode,
        transport: Option<Arc<dyn Transport>>,
        cache: Arc<ExchangeCache>,
        permits: usize,
    ) -> Self {
        Self {
            mode,
            transport,
            cache,
            permits: Arc::new(Semaphore::new(permits.max(1))),
            permit_limit: permits.max(1),
            clock: Arc::new(Utc::now),
        }
    }

    /// Replay-only gateway over an in-memory or loaded cache.
    pub fn replay(cache: ExchangeCache) -> Self {
        Self::new(GatewayMode::Replay, None, Arc::new(cache), 4)
    }

    /// Builds a gateway from configuration. Replay needs an existing cache
    /// file; live and record need the credential environment variable.
    pub fn from_config(cfg: &GatewayConfig) -> Result<Self, GatewayError> {
        let timeout = Duration::from_secs(cfg.timeout_secs);
        match cfg.mode {
            GatewayMode::Replay => {
                let path = cfg
                    .cache_path
                    .as_ref()
                    .ok_or_else(|| GatewayError::CacheNotFound("<no cache path configured>".into()))?;
                let cache = ExchangeCache::load(path)?;
                Ok(Self::new(GatewayMode::Replay, None, Arc::new(cache), cfg.permits))
            }
            GatewayMode::Live => {
                let t = HttpTransport::from_env(&cfg.base_url, timeout, cfg.max_retries)?;
                let cache = match &cfg.cache_path {
                    Some(p) if p.is_file() => ExchangeCache::load(p)?,
                    _ => ExchangeCache::default(),
                };
                Ok(Self::new(GatewayMode::Live, Some(Arc::new(t)), Arc::new(cache), cfg.permits))
            }
            GatewayMode::Record => {
                let path = cfg
                    .cache_path
                    .as_ref()
                    .ok_or_else(|| GatewayError::Cache("record mode needs a cache path".into()))?;
                let t = HttpTransport::from_env(&cfg.base_url, timeout, cfg.max_retries)?;
                let cache = ExchangeCache::open_append(path)?;
                Ok(Self::new(GatewayMode::Record, Some(Arc::new(t)), Arc::new(cache), cfg.permits))
            }
        }
    }

    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    /// Maximum number of requests in flight at once.
    pub fn permit_limit(&self) -> usize {
        self.permit_limit
    }

    pub fn cache(&self) -> &ExchangeCache {
        &self.cache
    }

    pub async fn complete(&self, req: &LlmRequest) -> Result<String, GatewayError> {
        if req.prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        match self.mode {
            GatewayMode::Replay => {
                let hash = request_hash(req);
                self.cache
                    .get(&hash)
                    .map(|r| r.response_text)
                    .ok_or(GatewayError::CacheMiss { request_hash: hash })
            }
            GatewayMode::Live => self.transport()?.complete(req).await,
            GatewayMode::Record => {
                let text = self.transport()?.complete(req).await?;
                self.cache
                    .insert(ExchangeRecord::new(req.clone(), text.clone(), (self.clock)()))?;
                Ok(text)
            }
        }
    }

    fn transport(&self) -> Result<&Arc<dyn Transport>, GatewayError> {
        self.transport.as_ref().ok_or(GatewayError::NoTransport(self.mode))
    }
}
