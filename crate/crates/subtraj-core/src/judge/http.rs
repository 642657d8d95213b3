//! Remote chat-completions backend over HTTP.
//!
//! Wire format: POST of `{model, messages, temperature, max_tokens}` to a
//! configurable endpoint; the reply text is `choices[0].message.content`.
//! The auth token comes from an environment variable named in the config,
//! never from the config file itself.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, JudgeBackend, JudgeTask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    /// Judging wants reproducibility: default 0.
    pub temperature: f64,
    pub max_tokens: u32,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            endpoint: String::new(),
            model: String::new(),
            temperature: 0.0,
            max_tokens: 1024,
            api_key_env: "SUBTRAJ_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    calls: AtomicU64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        if config.endpoint.is_empty() {
            return Err(BackendError::Malformed("endpoint URL is empty".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            config,
            client,
            calls: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }
}

impl JudgeBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn deterministic(&self) -> bool {
        self.config.temperature == 0.0
    }

    fn complete(&self, task: &JudgeTask<'_>) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": task.prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        });
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Ok(token) = std::env::var(&self.config.api_key_env) {
            if !token.is_empty() {
                request = request.bearer_auth(token);
            }
        }
        let response = request
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Http { status, body: text });
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::Malformed(format!("{e}; body: {text}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("response has no message content".into()))
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}
