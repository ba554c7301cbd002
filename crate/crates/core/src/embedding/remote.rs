//! OpenAI-compatible embeddings endpoint.
//!
//! Request: `{"model": "...", "input": ["...", ...]}`.
//! Response: `{"data": [{"index": 0, "embedding": [...]}, ...]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after every failure.
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

pub struct RemoteEmbeddingProvider {
    endpoint_url: String,
    model_name: String,
    api_key: String,
    retry: RetryPolicy,
    timeout: Duration,
}

impl std::fmt::Debug for RemoteEmbeddingProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEmbeddingProvider")
            .field("endpoint_url", &self.endpoint_url)
            .field("model_name", &self.model_name)
            .field("api_key", &"[REDACTED]")
            .finish()
    }
}

impl RemoteEmbeddingProvider {
    pub fn new(
        endpoint_url: String,
        model_name: String,
        api_key: String,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            endpoint_url,
            model_name,
            api_key,
            retry,
            timeout: Duration::from_secs(60),
        }
    }

    fn attempt(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, AttemptError> {
        // A fresh blocking client per call keeps this usable from worker
        // threads spawned under an async runtime.
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;
        let resp = client
            .post(&self.endpoint_url)
            .bearer_auth(&self.api_key)
            .json(&EmbeddingRequest {
                model: &self.model_name,
                input: texts,
            })
            .send()
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            let msg = format!(
                "HTTP {status}: {}",
                body.chars().take(200).collect::<String>()
            );
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                AttemptError::Retryable(msg)
            } else {
                AttemptError::Fatal(EmbeddingError::ProviderUnavailable(msg))
            });
        }
        let parsed: EmbeddingResponse = resp
            .json()
            .map_err(|e| AttemptError::Fatal(EmbeddingError::MalformedResponse(e.to_string())))?;
        order_by_index(parsed.data, texts.len()).map_err(AttemptError::Fatal)
    }
}

enum AttemptError {
    Retryable(String),
    Fatal(EmbeddingError),
}

fn order_by_index(
    data: Vec<EmbeddingDatum>,
    expected: usize,
) -> Result<Vec<Vec<f64>>, EmbeddingError> {
    if data.len() != expected {
        return Err(EmbeddingError::MalformedResponse(format!(
            "expected {expected} embeddings, got {}",
            data.len()
        )));
    }
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; expected];
    for (pos, datum) in data.into_iter().enumerate() {
        let idx = datum.index.unwrap_or(pos);
        match slots.get_mut(idx) {
            Some(slot @ None) => *slot = Some(datum.embedding),
            _ => {
                return Err(EmbeddingError::MalformedResponse(format!(
                    "invalid or duplicate index {idx}"
                )))
            }
        }
    }
    Ok(slots
        .into_iter()
        .map(|s| s.expect("all slots filled"))
        .collect())
}

impl EmbeddingProvider for RemoteEmbeddingProvider {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let mut backoff = self.retry.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.retry.attempts.max(1) {
            match self.attempt(texts) {
                Ok(v) => return Ok(v),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable(msg)) => {
                    tracing::warn!(attempt, error = %msg, "embedding request failed");
                    last = msg;
                    if attempt < self.retry.attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(EmbeddingError::ProviderUnavailable(last))
    }
}
