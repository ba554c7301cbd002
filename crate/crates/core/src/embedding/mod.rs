//! Document, word and query embeddings plus exact similarity search.
//!
//! Embeddings come from an [`EmbeddingProvider`]: either a remote
//! OpenAI-compatible endpoint or the offline [`LocalHashEmbedder`]. The
//! [`Embedder`] front end batches requests, enforces a constant dimension for
//! the session, and caches vectors keyed by model name and content hash.

mod cache;
mod local;
mod matrix;
mod remote;
mod search;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::EmbeddingCache;
pub use local::LocalHashEmbedder;
pub use matrix::EmbeddingMatrix;
pub use remote::{RemoteEmbeddingProvider, RetryPolicy};
pub use search::{cosine_similarity, knn_search, mean_vector, Neighbor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("no candidates to search")]
    EmptyCandidates,
    #[error("no texts to embed")]
    EmptyInput,
    #[error("text {0} is empty")]
    EmptyText(usize),
    #[error("provider returned a non-finite value")]
    NonFinite,
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("invalid embedding configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding cache error: {0}")]
    Cache(String),
}

pub trait EmbeddingProvider: Send + Sync {
    fn model_name(&self) -> &str;

    /// Embeds one batch; must return exactly one vector per input, in order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProviderKind {
    Remote,
    LocalDeterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingProviderConfig {
    pub kind: EmbeddingProviderKind,
    pub endpoint_url: Option<String>,
    pub model_name: String,
    pub api_key_env_var: Option<String>,
    pub batch_size: usize,
    pub cache_path: Option<PathBuf>,
    /// Maximum number of batches in flight at once.
    pub max_in_flight: usize,
    /// Output dimension of the local embedder.
    pub local_dim: usize,
    pub retry_attempts: u32,
    pub retry_initial_backoff_ms: u64,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            kind: EmbeddingProviderKind::LocalDeterministic,
            endpoint_url: None,
            model_name: "local-hash-ngrams".to_string(),
            api_key_env_var: None,
            batch_size: 64,
            cache_path: None,
            max_in_flight: 4,
            local_dim: 512,
            retry_attempts: 3,
            retry_initial_backoff_ms: 1000,
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.batch_size == 0 {
            return Err(EmbeddingError::InvalidConfig(
                "batch_size must be >= 1".into(),
            ));
        }
        if self.max_in_flight == 0 {
            return Err(EmbeddingError::InvalidConfig(
                "max_in_flight must be >= 1".into(),
            ));
        }
        match self.kind {
            EmbeddingProviderKind::Remote => {
                if self.endpoint_url.as_deref().is_none_or(str::is_empty) {
                    return Err(EmbeddingError::InvalidConfig(
                        "remote provider requires endpoint_url".into(),
                    ));
                }
                if self.api_key_env_var.as_deref().is_none_or(str::is_empty) {
                    return Err(EmbeddingError::InvalidConfig(
                        "remote provider requires api_key_env_var".into(),
                    ));
                }
            }
            EmbeddingProviderKind::LocalDeterministic => {
                if self.local_dim == 0 {
                    return Err(EmbeddingError::InvalidConfig(
                        "local_dim must be >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn build_provider(&self) -> Result<Arc<dyn EmbeddingProvider>, EmbeddingError> {
        self.validate()?;
        Ok(match self.kind {
            EmbeddingProviderKind::LocalDeterministic => Arc::new(LocalHashEmbedder::new(
                self.model_name.clone(),
                self.local_dim,
            )),
            EmbeddingProviderKind::Remote => {
                let env = self.api_key_env_var.clone().unwrap_or_default();
                let key = std::env::var(&env).map_err(|_| {
                    EmbeddingError::InvalidConfig(format!("environment variable {env} is not set"))
                })?;
                Arc::new(RemoteEmbeddingProvider::new(
                    self.endpoint_url.clone().unwrap_or_default(),
                    self.model_name.clone(),
                    key,
                    RetryPolicy {
                        attempts: self.retry_attempts.max(1),
                        initial_backoff: Duration::from_millis(self.retry_initial_backoff_ms),
                    },
                ))
            }
        })
    }
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Batching, caching front end over a provider.
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    batch_size: usize,
    max_in_flight: usize,
    cache: EmbeddingCache,
    dim: Mutex<Option<usize>>,
    requests: AtomicUsize,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("model", &self.provider.model_name())
            .field("batch_size", &self.batch_size)
            .field("requests", &self.request_count())
            .finish()
    }
}

impl Embedder {
    pub fn new(
        provider: Arc<dyn EmbeddingProvider>,
        batch_size: usize,
        cache: EmbeddingCache,
    ) -> Self {
        Self {
            provider,
            batch_size: batch_size.max(1),
            max_in_flight: 1,
            cache,
            dim: Mutex::new(None),
            requests: AtomicUsize::new(0),
        }
    }

    pub fn from_config(cfg: &EmbeddingProviderConfig) -> Result<Self, EmbeddingError> {
        let provider = cfg.build_provider()?;
        let cache = match &cfg.cache_path {
            Some(path) => EmbeddingCache::open(path)?,
            None => EmbeddingCache::in_memory(),
        };
        Ok(Self::new(provider, cfg.batch_size, cache).with_max_in_flight(cfg.max_in_flight))
    }

    pub fn local(dim: usize) -> Self {
        Self::new(
            Arc::new(LocalHashEmbedder::new("local-hash-ngrams", dim)),
            64,
            EmbeddingCache::in_memory(),
        )
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn model_name(&self) -> &str {
        self.provider.model_name()
    }

    /// Number of batch requests sent to the provider so far.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Dimension fixed by the first successful provider response, if any.
    pub fn dimension(&self) -> Option<usize> {
        *self.dim.lock().expect("dimension lock poisoned")
    }

    pub fn embed_one(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let mut out = self.embed_texts(&[text])?;
        Ok(out.pop().expect("one vector per text"))
    }

    pub fn embed_texts<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        let model = self.provider.model_name().to_string();
        let mut hashes = Vec::with_capacity(texts.len());
        for (i, t) in texts.iter().enumerate() {
            let t = t.as_ref();
            if t.trim().is_empty() {
                return Err(EmbeddingError::EmptyText(i));
            }
            hashes.push(content_hash(t));
        }

        let mut missing: Vec<(String, String)> = Vec::new();
        let mut queued: HashMap<&str, ()> = HashMap::new();
        for (t, h) in texts.iter().zip(&hashes) {
            if self.cache.get(&model, h).is_none() && queued.insert(h.as_str(), ()).is_none() {
                missing.push((h.clone(), t.as_ref().to_string()));
            }
        }

        let batches: Vec<&[(String, String)]> = missing.chunks(self.batch_size).collect();
        for group in batches.chunks(self.max_in_flight) {
            let results: Vec<Result<Vec<Vec<f64>>, EmbeddingError>> = if group.len() == 1 {
                vec![self.request_batch(group[0])]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = group
                        .iter()
                        .map(|batch| s.spawn(move || self.request_batch(batch)))
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("embedding worker panicked"))
                        .collect()
                })
            };
            for (batch, result) in group.iter().zip(results) {
                let vectors = result?;
                for ((hash, _), v) in batch.iter().zip(vectors) {
                    self.cache.insert(&model, hash, v)?;
                }
            }
        }

        hashes
            .iter()
            .map(|h| {
                self.cache
                    .get(&model, h)
                    .map(|v| v.as_ref().clone())
                    .ok_or_else(|| EmbeddingError::Cache("vector missing after insert".into()))
            })
            .collect()
    }

    fn request_batch(&self, batch: &[(String, String)]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let texts: Vec<String> = batch.iter().map(|(_, t)| t.clone()).collect();
        self.requests.fetch_add(1, Ordering::SeqCst);
        let vectors = self.provider.embed_batch(&texts)?;
        if vectors.len() != texts.len() {
            return Err(EmbeddingError::MalformedResponse(format!(
                "expected {} vectors, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        for v in &vectors {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::NonFinite);
            }
            self.check_dimension(v.len())?;
        }
        Ok(vectors)
    }

    fn check_dimension(&self, actual: usize) -> Result<(), EmbeddingError> {
        let mut dim = self.dim.lock().expect("dimension lock poisoned");
        match *dim {
            Some(expected) if expected != actual => {
                Err(EmbeddingError::DimensionMismatch { expected, actual })
            }
            Some(_) => Ok(()),
            None => {
                *dim = Some(actual);
                Ok(())
            }
        }
    }
}
