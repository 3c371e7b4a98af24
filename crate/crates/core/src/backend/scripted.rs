use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::Value;

use super::{BackendError, BackendRequest, BackendResponse, Purpose, TextModelBackend};

type ReplyFn = dyn Fn(&BackendRequest) -> Result<BackendResponse, BackendError> + Send + Sync;

/// What a scripted rule answers with.
#[derive(Clone)]
pub enum Reply {
    Json(Value),
    /// Raw model text, decoded like a live response would be.
    Raw(String),
    Fail(BackendError),
    With(Arc<ReplyFn>),
}

impl fmt::Debug for Reply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reply::Json(v) => f.debug_tuple("Json").field(v).finish(),
            Reply::Raw(s) => f.debug_tuple("Raw").field(s).finish(),
            Reply::Fail(e) => f.debug_tuple("Fail").field(e).finish(),
            Reply::With(_) => f.write_str("With(..)"),
        }
    }
}

#[derive(Debug, Clone)]
struct Rule {
    purpose: Purpose,
    needle: Option<String>,
    reply: Reply,
}

/// Table-driven backend for tests. The first rule whose purpose matches and
/// whose needle (if any) occurs in the prompt answers the request.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    rules: Vec<Rule>,
    calls: AtomicUsize,
    requests: Mutex<Vec<BackendRequest>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on(self, purpose: Purpose, payload: Value) -> Self {
        self.rule(purpose, None, Reply::Json(payload))
    }

    pub fn on_match(self, purpose: Purpose, needle: &str, payload: Value) -> Self {
        self.rule(purpose, Some(needle.to_string()), Reply::Json(payload))
    }

    pub fn on_raw(self, purpose: Purpose, raw: &str) -> Self {
        self.rule(purpose, None, Reply::Raw(raw.to_string()))
    }

    pub fn on_fail(self, purpose: Purpose, error: BackendError) -> Self {
        self.rule(purpose, None, Reply::Fail(error))
    }

    pub fn on_fn<F>(self, purpose: Purpose, f: F) -> Self
    where
        F: Fn(&BackendRequest) -> Value + Send + Sync + 'static,
    {
        let reply = Reply::With(Arc::new(move |req: &BackendRequest| {
            Ok(BackendResponse::json(req.purpose, f(req)))
        }));
        self.rule(purpose, None, reply)
    }

    pub fn rule(mut self, purpose: Purpose, needle: Option<String>, reply: Reply) -> Self {
        self.rules.push(Rule {
            purpose,
            needle,
            reply,
        });
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Requests seen so far, in arrival order.
    pub fn requests(&self) -> Vec<BackendRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl TextModelBackend for ScriptedBackend {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.requests.lock().unwrap().push(request.clone());
        let rule = self
            .rules
            .iter()
            .find(|r| {
                r.purpose == request.purpose
                    && r.needle
                        .as_deref()
                        .is_none_or(|n| request.prompt.contains(n))
            })
            .ok_or_else(|| {
                BackendError::Unavailable(format!("no scripted reply for {}", request.purpose))
            })?;
        match &rule.reply {
            Reply::Json(v) => Ok(BackendResponse::json(request.purpose, v.clone())),
            Reply::Raw(raw) => Ok(BackendResponse::from_raw(request.purpose, raw.clone())),
            Reply::Fail(e) => Err(e.clone()),
            Reply::With(f) => f(request),
        }
    }

    fn name(&self) -> &str {
        "scripted"
    }
}
