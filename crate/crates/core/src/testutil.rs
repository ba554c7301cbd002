//! Shared fixtures for unit tests.

use std::sync::Arc;

use crate::clustering::ClusterAssignment;
use crate::corpus::{ingest_corpus, TokenizerConfig};
use crate::embedding::{Embedder, EmbeddingError, EmbeddingMatrix};
use crate::reduction::{fit_reduce, ReducerConfig};
use crate::synthetic::{grouped_corpus, SyntheticSpec};
use crate::topicstore::{TopicConfig, TopicLabel, TopicModelState, TopicServices};
use crate::topwords::TopwordList;

/// Local embedder; titles are "About <first top-word>".
pub struct LocalServices(pub Embedder);

impl LocalServices {
    pub fn new() -> Self {
        LocalServices(Embedder::local(64))
    }
}

impl TopicServices for LocalServices {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        self.0.embed_texts(texts)
    }

    fn label_topic(&self, index: usize, topwords: &TopwordList) -> TopicLabel {
        match topwords.words().next() {
            Some(w) => TopicLabel {
                title: format!("About {w}"),
                description: format!("Documents mentioning {w}."),
                placeholder: false,
            },
            None => TopicLabel::placeholder(index),
        }
    }
}

pub fn state_from_texts<S: AsRef<str>>(texts: &[S], labels: &[usize]) -> TopicModelState {
    let svc = LocalServices::new();
    let owned: Vec<String> = texts.iter().map(|t| t.as_ref().to_string()).collect();
    let corpus = ingest_corpus(&owned, TokenizerConfig::default()).unwrap();
    let emb = Arc::new(EmbeddingMatrix::from_rows(&svc.embed_texts(&owned).unwrap()).unwrap());
    let dim = 5.min(owned.len() - 1).max(1);
    let (points, model) = fit_reduce(&emb, &ReducerConfig::pca(dim)).unwrap();
    let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
    TopicModelState::build(
        Arc::new(corpus),
        emb,
        Arc::new(points),
        Arc::new(model),
        &ClusterAssignment {
            labels: labels.iter().map(|&l| l as i64).collect(),
            n_clusters,
        },
        TopicConfig::default(),
        &svc,
    )
    .unwrap()
}

pub fn synthetic_state(groups: usize, per_group: usize) -> (TopicModelState, Vec<usize>) {
    let (texts, labels) = grouped_corpus(&SyntheticSpec {
        groups,
        docs_per_group: per_group,
        vocab_per_group: 25,
        words_per_doc: 10,
        seed: 11,
    });
    (state_from_texts(&texts, &labels), labels)
}
