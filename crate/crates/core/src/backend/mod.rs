//! Text-model backends.
//!
//! Every model call in the pipeline goes through [`TextModelBackend::complete`]
//! with a [`BackendRequest`] tagged by [`Purpose`]. Responses carry a JSON
//! payload that callers decode into a typed schema with
//! [`BackendResponse::parse`]; payloads that do not fit are rejected.

mod http;
mod replay;
mod scripted;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, HttpBackendConfig};
pub use replay::{FixtureRecord, RecordingBackend, ReplayBackend};
pub use scripted::{Reply, ScriptedBackend};
pub use synthetic::SyntheticBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Select,
    Generate,
    Score,
    Relate,
    Adjudicate,
    Judge,
    Contest,
}

impl Purpose {
    pub const ALL: [Purpose; 7] = [
        Purpose::Select,
        Purpose::Generate,
        Purpose::Score,
        Purpose::Relate,
        Purpose::Adjudicate,
        Purpose::Judge,
        Purpose::Contest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::Select => "select",
            Purpose::Generate => "generate",
            Purpose::Score => "score",
            Purpose::Relate => "relate",
            Purpose::Adjudicate => "adjudicate",
            Purpose::Judge => "judge",
            Purpose::Contest => "contest",
        }
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub purpose: Purpose,
    /// Fully rendered prompt text.
    pub prompt: String,
    /// Description of the JSON object the response must contain.
    pub schema: String,
    /// Structured view of what the prompt was rendered from.
    #[serde(default)]
    pub input: Value,
}

impl BackendRequest {
    pub fn new(purpose: Purpose, prompt: String, schema: &str, input: Value) -> Self {
        BackendRequest {
            purpose,
            prompt,
            schema: schema.to_string(),
            input,
        }
    }

    /// Stable digest of (purpose, whitespace-normalized prompt). Used as the
    /// replay fixture key.
    pub fn digest(&self) -> String {
        let normalized: Vec<&str> = self.prompt.split_whitespace().collect();
        let mut hasher = Sha256::new();
        hasher.update(self.purpose.as_str().as_bytes());
        hasher.update([0u8]);
        hasher.update(normalized.join(" ").as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub purpose: Purpose,
    pub payload: Value,
    pub raw: String,
}

impl BackendResponse {
    pub fn json(purpose: Purpose, payload: Value) -> Self {
        let raw = payload.to_string();
        BackendResponse {
            purpose,
            payload,
            raw,
        }
    }

    /// Builds a response from raw model text. Text that is not JSON becomes a
    /// string payload, which every schema rejects.
    pub fn from_raw(purpose: Purpose, raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let payload = extract_json(&raw).unwrap_or_else(|| Value::String(raw.clone()));
        BackendResponse {
            purpose,
            payload,
            raw,
        }
    }

    pub fn parse<T: DeserializeOwned>(&self) -> Result<T, BackendError> {
        serde_json::from_value(self.payload.clone()).map_err(|e| BackendError::Schema {
            purpose: self.purpose,
            detail: e.to_string(),
        })
    }
}

/// Pulls a JSON object out of model text, tolerating code fences.
pub(crate) fn extract_json(raw: &str) -> Option<Value> {
    let trimmed = raw.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    let start = trimmed.find('{')?;
    let end = trimmed.rfind('}')?;
    if end <= start {
        return None;
    }
    serde_json::from_str(&trimmed[start..=end]).ok()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("{purpose} response rejected: {detail}")]
    Schema { purpose: Purpose, detail: String },
    #[error("no replay fixture for {purpose} request {digest}")]
    FixtureMissing { purpose: Purpose, digest: String },
    #[error("backend transport failure: {0}")]
    Transport(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("fixture io: {0}")]
    Io(String),
}

impl BackendError {
    /// Whether the failure means the backend cannot serve this run at all,
    /// as opposed to a single malformed answer.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, BackendError::Schema { .. })
    }
}

pub trait TextModelBackend: Send + Sync {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;

    fn name(&self) -> &str {
        "backend"
    }
}

impl<T: TextModelBackend + ?Sized> TextModelBackend for Arc<T> {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<T: TextModelBackend + ?Sized> TextModelBackend for &T {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Counts calls made through an inner backend, in total and per purpose.
pub struct CountingBackend<B> {
    inner: B,
    total: AtomicUsize,
    per_purpose: Mutex<BTreeMap<Purpose, usize>>,
}

impl<B: TextModelBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            total: AtomicUsize::new(0),
            per_purpose: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.total.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, purpose: Purpose) -> usize {
        self.per_purpose
            .lock()
            .unwrap()
            .get(&purpose)
            .copied()
            .unwrap_or(0)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: TextModelBackend> TextModelBackend for CountingBackend<B> {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        self.total.fetch_add(1, Ordering::SeqCst);
        *self
            .per_purpose
            .lock()
            .unwrap()
            .entry(request.purpose)
            .or_default() += 1;
        self.inner.complete(request)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

/// How to construct a backend; stored in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Http(HttpBackendConfig),
    Replay { fixtures: String },
    Synthetic { seed: u64 },
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Synthetic { seed: 0 }
    }
}

impl BackendSpec {
    pub fn build(&self) -> Result<Arc<dyn TextModelBackend>, BackendError> {
        Ok(match self {
            BackendSpec::Http(cfg) => Arc::new(HttpBackend::new(cfg.clone().with_env_overrides())?),
            BackendSpec::Replay { fixtures } => Arc::new(ReplayBackend::new(fixtures)),
            BackendSpec::Synthetic { seed } => Arc::new(SyntheticBackend::new(*seed)),
        })
    }
}

/// Backend choice per purpose, with a default for purposes not overridden.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendSelection {
    #[serde(default)]
    pub default: BackendSpec,
    #[serde(default)]
    pub overrides: BTreeMap<Purpose, BackendSpec>,
}

/// Resolved backends, one handle per purpose.
#[derive(Clone)]
pub struct Backends {
    by_purpose: BTreeMap<Purpose, Arc<dyn TextModelBackend>>,
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: BTreeMap<_, _> = self
            .by_purpose
            .iter()
            .map(|(p, b)| (*p, b.name().to_string()))
            .collect();
        f.debug_struct("Backends").field("by_purpose", &names).finish()
    }
}

impl Backends {
    /// The same backend for every purpose.
    pub fn uniform(backend: Arc<dyn TextModelBackend>) -> Self {
        Backends {
            by_purpose: Purpose::ALL.iter().map(|p| (*p, backend.clone())).collect(),
        }
    }

    pub fn with(mut self, purpose: Purpose, backend: Arc<dyn TextModelBackend>) -> Self {
        self.by_purpose.insert(purpose, backend);
        self
    }

    pub fn from_selection(selection: &BackendSelection) -> Result<Self, BackendError> {
        let default = selection.default.build()?;
        let mut backends = Backends::uniform(default);
        for (purpose, spec) in &selection.overrides {
            backends = backends.with(*purpose, spec.build()?);
        }
        Ok(backends)
    }

    pub fn get(&self, purpose: Purpose) -> &dyn TextModelBackend {
        self.by_purpose
            .get(&purpose)
            .map(|b| b.as_ref())
            .expect("every purpose has a backend")
    }

    /// Wraps every distinct backend so its calls are also recorded as fixtures.
    pub fn recording(&self, dir: impl Into<std::path::PathBuf>) -> Self {
        let dir = dir.into();
        Backends {
            by_purpose: self
                .by_purpose
                .iter()
                .map(|(p, b)| {
                    let rec: Arc<dyn TextModelBackend> =
                        Arc::new(RecordingBackend::new(b.clone(), dir.clone()));
                    (*p, rec)
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn digest_ignores_whitespace_layout() {
        let a = BackendRequest::new(Purpose::Score, "rate  this\nargument".into(), "{}", Value::Null);
        let b = BackendRequest::new(Purpose::Score, " rate this argument ".into(), "{}", json!(1));
        let c = BackendRequest::new(Purpose::Judge, "rate this argument".into(), "{}", Value::Null);
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn raw_text_is_decoded_through_fences() {
        let r = BackendResponse::from_raw(Purpose::Score, "```json\n{\"score\": 0.4}\n```");
        assert_eq!(r.payload, json!({"score": 0.4}));
        let bad = BackendResponse::from_raw(Purpose::Score, "strong");
        assert_eq!(bad.payload, json!("strong"));
    }

    #[test]
    fn schema_errors_are_not_fatal() {
        #[derive(Deserialize, Debug)]
        #[allow(dead_code)]
        struct Score {
            score: f64,
        }
        let r = BackendResponse::json(Purpose::Score, json!({"score": "high"}));
        let err = r.parse::<Score>().unwrap_err();
        assert!(!err.is_fatal());
        assert!(BackendError::Transport("down".into()).is_fatal());
    }

    #[test]
    fn counting_backend_tracks_purposes() {
        let b = CountingBackend::new(ScriptedBackend::new().on(Purpose::Score, json!({"score": 0.5})));
        let req = BackendRequest::new(Purpose::Score, "x".into(), "{}", Value::Null);
        b.complete(&req).unwrap();
        b.complete(&req).unwrap();
        assert_eq!(b.calls(), 2);
        assert_eq!(b.calls_for(Purpose::Score), 2);
        assert_eq!(b.calls_for(Purpose::Judge), 0);
    }
}
