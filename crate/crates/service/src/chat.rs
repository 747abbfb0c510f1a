use std::time::Duration;

use rulediff_core::testgen::{CompletionProvider, CompletionRequest, ProviderError};
use serde_json::{json, Value};
use ureq::Agent;

pub const ENV_API_KEY: &str = "PROVIDER_API_KEY";
pub const ENV_BASE_URL: &str = "PROVIDER_BASE_URL";
pub const ENV_MODEL: &str = "PROVIDER_MODEL";

/// Client for OpenAI-style `/chat/completions` endpoints.
#[derive(Debug, Clone)]
pub struct ChatProvider {
    agent: Agent,
    base_url: String,
    model: String,
    api_key: Option<String>,
    combined: bool,
}

impl ChatProvider {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>) -> Self {
        let agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        ChatProvider {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            combined: false,
        }
    }

    /// Send the prompt as one user message instead of system + user.
    pub fn combined(mut self, combined: bool) -> Self {
        self.combined = combined;
        self
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let base = var(ENV_BASE_URL).ok_or_else(|| ProviderError::Config(format!("{ENV_BASE_URL} is not set")))?;
        let model = var(ENV_MODEL).ok_or_else(|| ProviderError::Config(format!("{ENV_MODEL} is not set")))?;
        Ok(ChatProvider::new(&base, &model, var(ENV_API_KEY)))
    }

    fn body(&self, request: &CompletionRequest<'_>) -> Value {
        let messages = if self.combined {
            json!([{"role": "user", "content": request.prompt.text()}])
        } else {
            json!([
                {"role": "system", "content": request.prompt.system},
                {"role": "user", "content": request.prompt.user},
            ])
        };
        json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "seed": request.seed,
        })
    }
}

impl CompletionProvider for ChatProvider {
    fn name(&self) -> &str {
        &self.model
    }

    fn combined(&self) -> bool {
        self.combined
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ProviderError> {
        let mut call = self.agent.post(format!("{}/chat/completions", self.base_url));
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = call.send_json(self.body(request)).map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ProviderError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            408 | 429 | 500..=599 => return Err(ProviderError::Transport(format!("HTTP {status}"))),
            _ => return Err(ProviderError::Config(format!("HTTP {status}: {text}"))),
        }
        let reply: Value = serde_json::from_str(&text).map_err(|e| ProviderError::Transport(e.to_string()))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Transport("reply has no message content".into()))
    }
}
