//! End-to-end fitting: ingest, embed, reduce, cluster, resolve noise,
//! optionally merge down to a requested topic count, then build and name the
//! topics.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    agglomerative_merge_to_k, default_min_cluster_size, hdbscan_cluster, resolve_noise,
    ClusteringError, HdbscanParams,
};
use crate::corpus::{ingest_corpus, CorpusError, CorpusWarning, TokenizerConfig};
use crate::embedding::{Embedder, EmbeddingError, EmbeddingMatrix};
use crate::llm::{name_and_describe, Llm};
use crate::reduction::{fit_reduce, ReducerConfig, ReductionError};
use crate::topicstore::{TopicConfig, TopicLabel, TopicModelState, TopicServices, TopicStoreError};
use crate::topwords::TopwordList;

/// The production [`TopicServices`]: an embedder plus model-written labels.
#[derive(Debug)]
pub struct ModelServices {
    pub embedder: Embedder,
    pub llm: Llm,
}

impl ModelServices {
    pub fn new(embedder: Embedder, llm: Llm) -> Self {
        Self { embedder, llm }
    }
}

impl TopicServices for ModelServices {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        self.embedder.embed_texts(texts)
    }

    fn label_topic(&self, index: usize, topwords: &TopwordList) -> TopicLabel {
        let n = name_and_describe(&self.llm, index, topwords, topwords.len());
        TopicLabel {
            title: n.title,
            description: n.description,
            placeholder: n.placeholder,
        }
    }

    fn max_concurrency(&self) -> usize {
        self.llm.max_concurrency()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub tokenizer: TokenizerConfig,
    pub reducer: ReducerConfig,
    /// Merge clusters down to this many topics when more are found.
    pub n_topics: Option<usize>,
    /// `None` uses `max(15, n / 500)`, capped at the corpus size.
    pub min_cluster_size: Option<usize>,
    pub topics: TopicConfig,
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.n_topics == Some(0) {
            return Err(FitError::InvalidConfig("n_topics must be >= 1".into()));
        }
        if self.min_cluster_size.is_some_and(|m| m < 2) {
            return Err(FitError::InvalidConfig(
                "min_cluster_size must be >= 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStage {
    Config,
    Corpus,
    Embedding,
    Reduction,
    Clustering,
    Topics,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("corpus stage: {0}")]
    Corpus(#[from] CorpusError),
    #[error("embedding stage: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("reduction stage: {0}")]
    Reduction(#[from] ReductionError),
    #[error("clustering stage: {0}")]
    Clustering(#[from] ClusteringError),
    #[error("topic stage: {0}")]
    Topics(#[from] TopicStoreError),
}

impl FitError {
    pub fn stage(&self) -> FitStage {
        match self {
            FitError::InvalidConfig(_) => FitStage::Config,
            FitError::Corpus(_) => FitStage::Corpus,
            FitError::Embedding(_) => FitStage::Embedding,
            FitError::Reduction(_) => FitStage::Reduction,
            FitError::Clustering(_) => FitStage::Clustering,
            FitError::Topics(_) => FitStage::Topics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitWarning {
    SmallCorpus {
        documents: usize,
        recommended: usize,
    },
    /// More topics were requested than clusters were found; all found
    /// clusters are kept.
    TopicsExceedClusters { requested: usize, available: usize },
}

impl std::fmt::Display for FitWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitWarning::SmallCorpus {
                documents,
                recommended,
            } => CorpusWarning::SmallCorpus {
                documents: *documents,
                recommended: *recommended,
            }
            .fmt(f),
            FitWarning::TopicsExceedClusters {
                requested,
                available,
            } => write!(
                f,
                "{requested} topics requested but only {available} clusters were found; keeping {available}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub documents: usize,
    pub min_cluster_size: usize,
    pub discovered_clusters: usize,
    pub noise_documents: usize,
    pub topics: usize,
    pub warnings: Vec<FitWarning>,
    pub elapsed_ms: u64,
}

/// Fits a topic model to `texts`.
pub fn fit<S: AsRef<str>>(
    texts: &[S],
    config: &FitConfig,
    services: &dyn TopicServices,
) -> Result<(TopicModelState, FitReport), FitError> {
    let start = Instant::now();
    config.validate()?;
    let corpus = Arc::new(ingest_corpus(texts, config.tokenizer.clone())?);
    let mut warnings: Vec<FitWarning> = corpus
        .warnings()
        .iter()
        .map(|w| match w {
            CorpusWarning::SmallCorpus {
                documents,
                recommended,
            } => FitWarning::SmallCorpus {
                documents: *documents,
                recommended: *recommended,
            },
        })
        .collect();
    let n = corpus.len();

    let owned: Vec<String> = corpus.texts().map(str::to_string).collect();
    let vectors = services.embed_texts(&owned)?;
    let embeddings = Arc::new(EmbeddingMatrix::from_rows(&vectors)?);
    tracing::info!(documents = n, dim = embeddings.dim(), "embedded corpus");

    let (points, mut reducer) = fit_reduce(&embeddings, &config.reducer)?;
    reducer.bind_training_inputs(embeddings.clone());

    let mcs = config
        .min_cluster_size
        .unwrap_or_else(|| default_min_cluster_size(n).min(n).max(2));
    let raw = hdbscan_cluster(&points, HdbscanParams::new(mcs))?;
    let noise_documents = raw.noise_count();
    let resolved = resolve_noise(&points, &raw).relabeled_by_size();
    let discovered = resolved.n_clusters;
    tracing::info!(
        clusters = discovered,
        noise = noise_documents,
        min_cluster_size = mcs,
        "clustered"
    );

    let assignment = match config.n_topics {
        Some(k) if k < discovered => agglomerative_merge_to_k(&points, &resolved, k)?,
        Some(k) if k > discovered => {
            let w = FitWarning::TopicsExceedClusters {
                requested: k,
                available: discovered,
            };
            tracing::warn!("{w}");
            warnings.push(w);
            resolved
        }
        _ => resolved,
    };

    let state = TopicModelState::build(
        corpus,
        embeddings,
        Arc::new(points),
        Arc::new(reducer),
        &assignment,
        config.topics.clone(),
        services,
    )?;
    let report = FitReport {
        documents: n,
        min_cluster_size: mcs,
        discovered_clusters: discovered,
        noise_documents,
        topics: state.len(),
        warnings,
        elapsed_ms: start.elapsed().as_millis() as u64,
    };
    tracing::info!(
        topics = report.topics,
        elapsed_ms = report.elapsed_ms,
        "fit complete"
    );
    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::adjusted_rand_index;
    use crate::embedding::EmbeddingProviderConfig;
    use crate::llm::{MockProvider, MockRule};
    use crate::synthetic::{grouped_corpus, SyntheticSpec};
    use crate::testutil::LocalServices;

    fn pca(d: usize) -> FitConfig {
        FitConfig {
            reducer: ReducerConfig::pca(d),
            ..FitConfig::default()
        }
    }

    #[test]
    fn recovers_synthetic_groups() {
        let (texts, labels) = grouped_corpus(&SyntheticSpec {
            docs_per_group: 60,
            ..SyntheticSpec::default()
        });
        let cfg = FitConfig {
            n_topics: Some(3),
            ..pca(5)
        };
        let svc = LocalServices(Embedder::local(
            EmbeddingProviderConfig::default().local_dim,
        ));
        let (state, report) = fit(&texts, &cfg, &svc).unwrap();
        assert_eq!(state.len(), 3);
        assert!(adjusted_rand_index(&state.doc_topics(), &labels) >= 0.95);
        assert!(report.discovered_clusters >= 3);
        assert!(matches!(
            report.warnings[0],
            FitWarning::SmallCorpus { documents: 180, .. }
        ));
        state.check_invariants().unwrap();
    }

    #[test]
    fn too_many_topics_requested_keeps_clusters() {
        let (texts, _) = grouped_corpus(&SyntheticSpec {
            docs_per_group: 40,
            ..SyntheticSpec::default()
        });
        let cfg = FitConfig {
            n_topics: Some(50),
            ..pca(5)
        };
        let (state, report) = fit(&texts, &cfg, &LocalServices::new()).unwrap();
        assert_eq!(state.len(), report.discovered_clusters);
        assert!(report.warnings.contains(&FitWarning::TopicsExceedClusters {
            requested: 50,
            available: report.discovered_clusters
        }));
        let (omitted, r2) = fit(&texts, &pca(5), &LocalServices::new()).unwrap();
        assert_eq!(omitted.len(), r2.discovered_clusters);
        assert_eq!(omitted.partition(), state.partition());
    }

    #[test]
    fn errors_name_their_stage() {
        let svc = LocalServices::new();
        let empty: [&str; 0] = [];
        assert_eq!(
            fit(&empty, &pca(5), &svc).unwrap_err().stage(),
            FitStage::Corpus
        );
        let texts = ["alpha beta", "gamma delta", "epsilon zeta"];
        assert_eq!(
            fit(&texts, &pca(5), &svc).unwrap_err().stage(),
            FitStage::Reduction
        );
        let cfg = FitConfig {
            min_cluster_size: Some(3),
            ..pca(2)
        };
        let two = ["alpha beta", "gamma delta"];
        assert_eq!(
            fit(&two, &cfg, &svc).unwrap_err().stage(),
            FitStage::Reduction
        );
        let cfg = FitConfig {
            min_cluster_size: Some(30),
            ..pca(2)
        };
        let few: Vec<String> = (0..10)
            .map(|i| format!("document number {i} words"))
            .collect();
        assert_eq!(
            fit(&few, &cfg, &svc).unwrap_err().stage(),
            FitStage::Clustering
        );
        let cfg = FitConfig {
            n_topics: Some(0),
            ..pca(5)
        };
        assert_eq!(fit(&few, &cfg, &svc).unwrap_err().stage(), FitStage::Config);
    }

    #[test]
    fn model_services_name_topics() {
        let (texts, _) = grouped_corpus(&SyntheticSpec {
            groups: 2,
            docs_per_group: 30,
            ..SyntheticSpec::default()
        });
        let llm = Llm::new(Arc::new(MockProvider::new(vec![MockRule::text(
            "*",
            "Title: Space Exploration\nDescription: Rockets and missions.",
        )])))
        .with_max_concurrency(2);
        let svc = ModelServices::new(Embedder::local(64), llm.clone());
        let cfg = FitConfig {
            n_topics: Some(2),
            ..pca(5)
        };
        let (state, _) = fit(&texts, &cfg, &svc).unwrap();
        assert!(state
            .topics()
            .iter()
            .all(|t| t.title == "Space Exploration" && !t.title_is_placeholder));
        assert_eq!(llm.requests_sent(), state.len() as u64);

        let down = ModelServices::new(
            Embedder::local(64),
            Llm::new(Arc::new(MockProvider::new(vec![]))),
        );
        let (state, _) = fit(&texts, &cfg, &down).unwrap();
        assert_eq!(state.topics()[1].title, "Topic 1");
    }
}
