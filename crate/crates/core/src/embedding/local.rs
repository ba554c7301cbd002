use std::collections::BTreeSet;

use super::{EmbeddingError, EmbeddingProvider};
use crate::corpus::tokenize;

const UNIGRAM_WEIGHT: f64 = 1.0;
const BIGRAM_WEIGHT: f64 = 0.5;

/// Offline embedder: lowercase word unigrams and bigrams are hashed into
/// `dim` buckets, accumulated with non-negative weights and L2-normalized.
/// Texts without any word characters fall back to character trigrams.
///
/// All weights are non-negative, so the output is never the zero vector and
/// texts with disjoint vocabularies are orthogonal up to hash collisions.
#[derive(Debug, Clone)]
pub struct LocalHashEmbedder {
    model_name: String,
    dim: usize,
}

impl LocalHashEmbedder {
    pub fn new(model_name: impl Into<String>, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            model_name: model_name.into(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let tokens = tokenize(text, 1, &BTreeSet::new());
        if tokens.is_empty() {
            let chars: Vec<char> = text.to_lowercase().chars().collect();
            if chars.len() < 3 {
                let s: String = chars.iter().collect();
                v[self.bucket("c", &s)] += UNIGRAM_WEIGHT;
            } else {
                for w in chars.windows(3) {
                    let s: String = w.iter().collect();
                    v[self.bucket("c", &s)] += UNIGRAM_WEIGHT;
                }
            }
        } else {
            for tok in &tokens {
                v[self.bucket("u", tok)] += UNIGRAM_WEIGHT;
            }
            for pair in tokens.windows(2) {
                let joined = format!("{} {}", pair[0], pair[1]);
                v[self.bucket("b", &joined)] += BIGRAM_WEIGHT;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }

    fn bucket(&self, kind: &str, feature: &str) -> usize {
        let h = fnv1a(kind.as_bytes(), feature.as_bytes());
        (h % self.dim as u64) as usize
    }
}

fn fnv1a(prefix: &[u8], bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    prefix
        .iter()
        .chain(std::iter::once(&0u8))
        .chain(bytes)
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

impl EmbeddingProvider for LocalHashEmbedder {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}
