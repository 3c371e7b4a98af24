//! Live adapter for OpenAI-compatible chat-completion endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::warn;

use super::{BackendError, BackendRequest, BackendResponse, TextModelBackend};

pub const ENV_ENDPOINT: &str = "ACAL_BACKEND_ENDPOINT";
pub const ENV_MODEL: &str = "ACAL_BACKEND_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_key_env() -> String {
    "ACAL_API_KEY".into()
}
fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    2
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpBackendConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
        }
    }

    /// Applies `ACAL_BACKEND_ENDPOINT` / `ACAL_BACKEND_MODEL` when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(v) = std::env::var(ENV_ENDPOINT) {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            self.model = v;
        }
        self
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        if config.endpoint.trim().is_empty() {
            return Err(BackendError::Unavailable("http backend has no endpoint".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        let api_key = std::env::var(&config.api_key_env).ok();
        Ok(HttpBackend {
            config,
            api_key,
            agent,
        })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn body(&self, request: &BackendRequest) -> Value {
        json!({
            "model": self.config.model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [
                {
                    "role": "system",
                    "content": format!(
                        "Answer with a single JSON object and nothing else. Required shape: {}",
                        request.schema
                    ),
                },
                {"role": "user", "content": request.prompt},
            ],
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, BackendError> {
        let mut call = self.agent.post(self.url());
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let reply: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Transport("reply has no choices[0].message.content".into()))
    }
}

impl TextModelBackend for HttpBackend {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let body = self.body(request);
        let mut last = None;
        for attempt in 0..=self.config.retries {
            match self.attempt(&body) {
                Ok(content) => return Ok(BackendResponse::from_raw(request.purpose, content)),
                Err(e) => {
                    warn!(attempt, purpose = %request.purpose, error = %e, "model call failed");
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn name(&self) -> &str {
        "http"
    }
}
