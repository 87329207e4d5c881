use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CompletionProvider, ProviderError};

pub const ENV_ENDPOINT: &str = "FORGE_PROVIDER_ENDPOINT";
pub const ENV_MODEL: &str = "FORGE_PROVIDER_MODEL";
pub const ENV_API_KEY: &str = "FORGE_PROVIDER_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.example.com/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub temperature: f64,
}

fn default_timeout() -> u64 {
    120
}

impl HttpProviderConfig {
    /// Fills endpoint, model and key from the environment where set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(v) = std::env::var(ENV_ENDPOINT) {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            self.model = v;
        }
        if let Ok(v) = std::env::var(ENV_API_KEY) {
            self.api_key = Some(v);
        }
        self
    }
}

/// Chat-completions client. Requests are serialized through one lock so a
/// shared client never has more than one call in flight.
pub struct HttpProvider {
    config: HttpProviderConfig,
    agent: ureq::Agent,
    gate: Mutex<()>,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(config.timeout_secs)).build();
        HttpProvider { config, agent, gate: Mutex::new(()) }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }
}

pub(crate) fn post_json(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &Value,
) -> Result<Value, ProviderError> {
    let mut req = agent.post(url).set("Content-Type", "application/json");
    if let Some(key) = api_key {
        req = req.set("Authorization", &format!("Bearer {key}"));
    }
    match req.send_json(body.clone()) {
        Ok(resp) => resp.into_json::<Value>().map_err(|e| ProviderError::BadResponse(e.to_string())),
        Err(ureq::Error::Status(status, resp)) => {
            Err(ProviderError::Http { status, body: resp.into_string().unwrap_or_default() })
        }
        Err(e) => Err(ProviderError::Unavailable(e.to_string())),
    }
}

impl CompletionProvider for HttpProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let _guard = self.gate.lock().expect("http gate");
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let value = post_json(&self.agent, &self.url(), self.config.api_key.as_deref(), &body)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(String::from)
            .ok_or_else(|| ProviderError::BadResponse("missing choices[0].message.content".into()))
    }
}
