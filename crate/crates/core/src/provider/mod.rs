//! Text-completion providers and the structured-output retry loop.

pub(crate) mod http;
pub mod mock;

use std::fmt::Display;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpProvider, HttpProviderConfig};
pub use mock::{MockFaults, MockProvider, NetworkFault};

use crate::kb;

/// Appended to a prompt when the previous answer was rejected.
pub const FEEDBACK_HEADER: &str = "### Previous answer rejected";

pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("provider response could not be read: {0}")]
    BadResponse(String),
}

/// The single capability every backend offers.
pub trait CompletionProvider: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Arc<P> {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for &P {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Box<P> {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub template_name: String,
    pub rendered_prompt: String,
    pub expected_schema: Vec<String>,
    pub max_retries: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderResponse<T> {
    pub raw_text: String,
    pub parsed: Option<T>,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetryError<E> {
    #[error(transparent)]
    Provider(ProviderError),
    #[error("no acceptable answer after {attempts} attempts: {last_error}")]
    Exhausted { last_error: E, attempts: u32 },
}

/// Asks the provider until `accept` takes the answer, feeding each rejection
/// back into the next prompt. At most `max_retries + 1` calls are made.
pub fn complete_structured<T, E: Display>(
    provider: &dyn CompletionProvider,
    request: &ProviderRequest,
    mut accept: impl FnMut(&str) -> Result<T, E>,
) -> Result<ProviderResponse<T>, RetryError<E>> {
    let mut prompt = request.rendered_prompt.clone();
    let mut attempt = 0;
    loop {
        attempt += 1;
        let raw = provider.complete(&prompt).map_err(RetryError::Provider)?;
        match accept(&raw) {
            Ok(parsed) => return Ok(ProviderResponse { raw_text: raw, parsed: Some(parsed), attempt_count: attempt }),
            Err(e) => {
                if attempt > request.max_retries {
                    return Err(RetryError::Exhausted { last_error: e, attempts: attempt });
                }
                log::debug!("{}: attempt {attempt} rejected: {e}", request.template_name);
                prompt = format!(
                    "{}\n{FEEDBACK_HEADER}\n{e}\nReturn a corrected, complete answer.\n",
                    request.rendered_prompt
                );
            }
        }
    }
}

/// One prompt/answer pair, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub template: Option<String>,
    pub prompt: String,
    pub response: Result<String, String>,
}

/// Wraps a provider and records every exchange.
pub struct RecordingProvider<P> {
    inner: P,
    log: Mutex<Vec<Exchange>>,
}

impl<P: CompletionProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        RecordingProvider { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("log lock").clone()
    }
}

impl<P: CompletionProvider> CompletionProvider for RecordingProvider<P> {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let result = self.inner.complete(prompt);
        self.log.lock().expect("log lock").push(Exchange {
            template: kb::template_of(prompt).map(String::from),
            prompt: prompt.to_string(),
            response: result.clone().map_err(|e| e.to_string()),
        });
        result
    }
}

/// Extracts the outermost JSON object from a free-form answer.
pub fn extract_json(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (end > start).then(|| &raw[start..=end])
}
