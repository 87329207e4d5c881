//! Text embeddings and cosine similarity.

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::EvalError;
use crate::provider::http::{post_json, ENV_API_KEY};
use crate::provider::ProviderError;

pub const HASHING_DIMENSION: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub components: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Self {
        EmbeddingVector { components }
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, EvalError> {
    if u.dimension() != v.dimension() {
        return Err(EvalError::DimensionMismatch(u.dimension(), v.dimension()));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    let dot: f64 = u.components.iter().zip(&v.components).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EvalError>;
}

/// Offline bag-of-words embedder: lower-cased alphanumeric tokens hashed
/// into a fixed number of buckets, counts L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    pub dimension: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dimension: HASHING_DIMENSION }
    }
}

/// Tokens the hashing embedder counts.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EvalError> {
        let dim = self.dimension.max(1);
        let mut v = vec![0.0; dim];
        for t in tokens(text) {
            v[(crate::fnv1a(t.as_bytes()) % dim as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|c| *c /= norm);
        }
        Ok(EmbeddingVector::new(v))
    }
}

pub const ENV_EMBEDDING_ENDPOINT: &str = "FORGE_EMBEDDING_ENDPOINT";
pub const ENV_EMBEDDING_MODEL: &str = "FORGE_EMBEDDING_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    /// Base URL of an OpenAI-compatible API.
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

impl RemoteEmbedderConfig {
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(v) = std::env::var(ENV_EMBEDDING_ENDPOINT) {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var(ENV_EMBEDDING_MODEL) {
            self.model = v;
        }
        if let Ok(v) = std::env::var(ENV_API_KEY) {
            self.api_key = Some(v);
        }
        self
    }
}

/// Embeddings endpoint client; calls are serialized through one lock.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    agent: ureq::Agent,
    gate: Mutex<()>,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(config.timeout_secs)).build();
        RemoteEmbedder { config, agent, gate: Mutex::new(()) }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EvalError> {
        let _guard = self.gate.lock().expect("embedder gate");
        let url = format!("{}/embeddings", self.config.endpoint.trim_end_matches('/'));
        let body = json!({ "model": self.config.model, "input": text });
        let value = post_json(&self.agent, &url, self.config.api_key.as_deref(), &body)?;
        let raw = value["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| ProviderError::BadResponse("missing data[0].embedding".into()))?;
        let components = raw
            .iter()
            .map(|c| c.as_f64().filter(|f| f.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| ProviderError::BadResponse("embedding has non-numeric components".into()))?;
        Ok(EmbeddingVector::new(components))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::http::testserver;
    use proptest::prelude::*;

    fn v(c: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(c.to_vec())
    }

    #[test]
    fn known_values() {
        assert!((cosine_similarity(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let s = cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert!((s - 0.70710678).abs() < 1e-8);
    }

    #[test]
    fn errors() {
        assert_eq!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])), Err(EvalError::ZeroVector));
        assert_eq!(cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])), Err(EvalError::DimensionMismatch(1, 2)));
    }

    #[test]
    fn hashing_embedder_is_normalized() {
        let e = HashingEmbedder::default().embed("Two cars, two lanes").unwrap();
        assert_eq!(e.dimension(), HASHING_DIMENSION);
        assert!((e.norm() - 1.0).abs() < 1e-12);
        assert_eq!(HashingEmbedder::default().embed("").unwrap().norm(), 0.0);
    }

    #[test]
    fn remote_embedder_reads_first_embedding() {
        let (url, bodies) = testserver::serve(vec![(200, r#"{"data":[{"embedding":[0.5,0.25]}]}"#.into())]);
        let e = RemoteEmbedder::new(RemoteEmbedderConfig { endpoint: url, model: "m".into(), api_key: None, timeout_secs: 5 });
        assert_eq!(e.embed("hello").unwrap(), v(&[0.5, 0.25]));
        assert!(bodies.recv().unwrap().contains("\"input\":\"hello\""));
    }

    proptest! {
        #[test]
        fn symmetric_bounded_scale_invariant(
            u in prop::collection::vec(-10.0f64..10.0, 8),
            w in prop::collection::vec(-10.0f64..10.0, 8),
            alpha in 0.01f64..100.0,
        ) {
            let (a, b) = (v(&u), v(&w));
            prop_assume!(a.norm() > 1e-6 && b.norm() > 1e-6);
            let s = cosine_similarity(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
            prop_assert!((s - cosine_similarity(&b, &a).unwrap()).abs() < 1e-12);
            let scaled = v(&u.iter().map(|c| c * alpha).collect::<Vec<_>>());
            prop_assert!((s - cosine_similarity(&scaled, &b).unwrap()).abs() < 1e-9);
            prop_assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        }
    }
}
