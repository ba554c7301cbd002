//! The mutable topic model.
//!
//! [`TopicModelState`] owns the topics built from a cluster assignment and
//! applies every modification operator. Each modification computes the new
//! partition with the shared operators in [`ops`], rebuilds the affected
//! topics, and only then commits, so a failing operation leaves the state as
//! it was. Every call appends one [`ModificationRecord`] and bumps the
//! version by one, including no-ops.

pub mod ops;

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterAssignment, ClusteringError};
use crate::corpus::Corpus;
use crate::embedding::{EmbeddingError, EmbeddingMatrix};
use crate::points::Points;
use crate::reduction::ReducerModel;
use crate::topwords::{
    cosine_candidates, cosine_topwords, ctfidf_all, TopwordList, TopwordsError,
    DEFAULT_NAMING_WORDS,
};

pub use ops::{ModificationKind, ModificationParams, OpOutcome, Partition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopicStoreError {
    #[error("topic index {index} out of range for {topics} topics")]
    InvalidTopicIndex { index: usize, topics: usize },
    #[error("merging needs at least two distinct topics")]
    NeedAtLeastTwo,
    #[error("cannot delete the only remaining topic")]
    LastTopic,
    #[error("topic {topic} has {documents} documents but {required} are required")]
    TooFewDocuments {
        topic: usize,
        documents: usize,
        required: usize,
    },
    #[error("keyword is empty")]
    EmptyKeyword,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid cluster assignment: {0}")]
    InvalidAssignment(String),
    #[error("inconsistent state: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Topwords(#[from] TopwordsError),
}

/// Settings that shape topic contents. Stored with the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopicConfig {
    /// Length of the stored TF-IDF list; naming uses a prefix of it.
    pub stored_topwords: usize,
    /// Length of the cosine list, 0 to skip it.
    pub cosine_topwords: usize,
    /// Top-words handed to the naming prompt.
    pub naming_words: usize,
    pub split_seed: u64,
    pub kmeans_max_iter: usize,
}

impl Default for TopicConfig {
    fn default() -> Self {
        Self {
            stored_topwords: DEFAULT_NAMING_WORDS,
            cosine_topwords: 30,
            naming_words: DEFAULT_NAMING_WORDS,
            split_seed: 42,
            kmeans_max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicLabel {
    pub title: String,
    pub description: String,
    /// True when no model produced the label.
    pub placeholder: bool,
}

impl TopicLabel {
    pub fn placeholder(index: usize) -> Self {
        TopicLabel {
            title: placeholder_title(index),
            description: String::new(),
            placeholder: true,
        }
    }
}

pub fn placeholder_title(index: usize) -> String {
    format!("Topic {index}")
}

/// Providers the topic model needs while building or modifying topics.
pub trait TopicServices: Sync {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError>;

    fn embed_query(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let mut v = self.embed_texts(&[text.to_string()])?;
        v.pop().ok_or(EmbeddingError::EmptyInput)
    }

    /// Title and description for the topic at `index`. Must not fail; fall
    /// back to [`TopicLabel::placeholder`].
    fn label_topic(&self, index: usize, topwords: &TopwordList) -> TopicLabel;

    /// How many labels may be requested at once.
    fn max_concurrency(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub index: usize,
    pub title: String,
    pub description: String,
    #[serde(default)]
    pub title_is_placeholder: bool,
    /// Sorted ascending.
    pub doc_ids: Vec<usize>,
    pub centroid_full: Vec<f64>,
    pub centroid_reduced: Vec<f64>,
    pub topwords_tfidf: TopwordList,
    pub topwords_cosine: Option<TopwordList>,
}

impl Topic {
    pub fn size(&self) -> usize {
        self.doc_ids.len()
    }

    fn set_index(&mut self, index: usize) {
        self.index = index;
        if self.title_is_placeholder {
            self.title = placeholder_title(index);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModificationRecord {
    #[serde(flatten)]
    pub params: ModificationParams,
    pub affected_topic_indices_before: Vec<usize>,
    pub affected_topic_indices_after: Vec<usize>,
    pub noop: bool,
    pub version_after: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
}

impl ModificationRecord {
    pub fn kind(&self) -> ModificationKind {
        self.params.kind()
    }
}

/// What a modification did, for callers that report back to a user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModificationSummary {
    pub kind: ModificationKind,
    pub noop: bool,
    pub affected_topic_indices_before: Vec<usize>,
    pub affected_topic_indices_after: Vec<usize>,
    pub version: u64,
}

#[derive(Debug, Clone)]
pub struct TopicModelState {
    corpus: Arc<Corpus>,
    embeddings: Arc<EmbeddingMatrix>,
    reduced: Arc<Points>,
    reducer: Arc<ReducerModel>,
    config: TopicConfig,
    topics: Vec<Topic>,
    version: u64,
    history: Vec<ModificationRecord>,
    initial_partition: Partition,
}

/// Everything needed to restore a state besides the corpus and matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateParts {
    pub config: TopicConfig,
    pub topics: Vec<Topic>,
    pub version: u64,
    pub history: Vec<ModificationRecord>,
    pub initial_partition: Partition,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Calls `label_topic` for each job, at most `max_concurrency` at a time.
fn label_many(services: &dyn TopicServices, jobs: &[(usize, &TopwordList)]) -> Vec<TopicLabel> {
    let width = services.max_concurrency().max(1);
    if width == 1 || jobs.len() < 2 {
        return jobs
            .iter()
            .map(|(i, w)| services.label_topic(*i, w))
            .collect();
    }
    let mut out = Vec::with_capacity(jobs.len());
    for chunk in jobs.chunks(width) {
        let labels: Vec<TopicLabel> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(i, w)| s.spawn(move || services.label_topic(*i, w)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("labeling thread panicked"))
                .collect()
        });
        out.extend(labels);
    }
    out
}

impl TopicModelState {
    /// One topic per cluster of a noise-free, dense assignment.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        corpus: Arc<Corpus>,
        embeddings: Arc<EmbeddingMatrix>,
        reduced: Arc<Points>,
        reducer: Arc<ReducerModel>,
        assignment: &ClusterAssignment,
        config: TopicConfig,
        services: &dyn TopicServices,
    ) -> Result<Self, TopicStoreError> {
        let n = corpus.len();
        if embeddings.rows() != n || reduced.rows() != n {
            return Err(TopicStoreError::Inconsistent(format!(
                "{n} documents, {} embeddings, {} reduced rows",
                embeddings.rows(),
                reduced.rows()
            )));
        }
        if assignment.labels.len() != n {
            return Err(TopicStoreError::InvalidAssignment(format!(
                "{} labels for {n} documents",
                assignment.labels.len()
            )));
        }
        if assignment.has_noise() {
            return Err(TopicStoreError::InvalidAssignment(
                "assignment contains noise".into(),
            ));
        }
        let partition = assignment.members();
        if let Some(t) = partition.iter().position(Vec::is_empty) {
            return Err(TopicStoreError::InvalidAssignment(format!(
                "label {t} has no documents"
            )));
        }
        let mut state = TopicModelState {
            corpus,
            embeddings,
            reduced,
            reducer,
            config,
            topics: Vec::new(),
            version: 0,
            history: Vec::new(),
            initial_partition: partition.clone(),
        };
        let identity = OpOutcome {
            origin: vec![None; partition.len()],
            partition,
        };
        state.topics = state.rebuild(&identity, services)?;
        Ok(state)
    }

    /// Reassembles a state from stored parts, checking that the topics
    /// partition the corpus and that the history replays to them.
    pub fn from_parts(
        corpus: Arc<Corpus>,
        embeddings: Arc<EmbeddingMatrix>,
        reduced: Arc<Points>,
        reducer: Arc<ReducerModel>,
        parts: StateParts,
    ) -> Result<Self, TopicStoreError> {
        let state = TopicModelState {
            corpus,
            embeddings,
            reduced,
            reducer,
            config: parts.config,
            topics: parts.topics,
            version: parts.version,
            history: parts.history,
            initial_partition: parts.initial_partition,
        };
        state.check_invariants()?;
        if state.replay_partition()? != state.partition() {
            return Err(TopicStoreError::Inconsistent(
                "history does not replay to the stored topics".into(),
            ));
        }
        Ok(state)
    }

    pub fn to_parts(&self) -> StateParts {
        StateParts {
            config: self.config.clone(),
            topics: self.topics.clone(),
            version: self.version,
            history: self.history.clone(),
            initial_partition: self.initial_partition.clone(),
        }
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn embeddings(&self) -> &Arc<EmbeddingMatrix> {
        &self.embeddings
    }

    pub fn reduced(&self) -> &Arc<Points> {
        &self.reduced
    }

    pub fn reducer(&self) -> &Arc<ReducerModel> {
        &self.reducer
    }

    pub fn config(&self) -> &TopicConfig {
        &self.config
    }

    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn topic(&self, index: usize) -> Result<&Topic, TopicStoreError> {
        self.topics
            .get(index)
            .ok_or(TopicStoreError::InvalidTopicIndex {
                index,
                topics: self.topics.len(),
            })
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn history(&self) -> &[ModificationRecord] {
        &self.history
    }

    pub fn initial_partition(&self) -> &Partition {
        &self.initial_partition
    }

    pub fn partition(&self) -> Partition {
        self.topics.iter().map(|t| t.doc_ids.clone()).collect()
    }

    /// Topic index per document.
    pub fn doc_topics(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.corpus.len()];
        for t in &self.topics {
            for &d in &t.doc_ids {
                out[d] = t.index;
            }
        }
        out
    }

    pub fn replay_partition(&self) -> Result<Partition, TopicStoreError> {
        ops::replay(
            &self.initial_partition,
            self.history.iter().map(|r| &r.params),
            &self.embeddings,
            &self.reduced,
        )
    }

    /// Partition, index and centroid invariants.
    pub fn check_invariants(&self) -> Result<(), TopicStoreError> {
        let n = self.corpus.len();
        let mut seen = vec![false; n];
        for (i, t) in self.topics.iter().enumerate() {
            let bad = |m: String| Err(TopicStoreError::Inconsistent(format!("topic {i}: {m}")));
            if t.index != i {
                return bad(format!("stored index {}", t.index));
            }
            if t.doc_ids.is_empty() {
                return bad("no documents".into());
            }
            if t.title.trim().is_empty() {
                return bad("empty title".into());
            }
            if !t.doc_ids.windows(2).all(|w| w[0] < w[1]) {
                return bad("document ids not sorted".into());
            }
            for &d in &t.doc_ids {
                match seen.get_mut(d) {
                    Some(s) if !*s => *s = true,
                    _ => return bad(format!("document {d} duplicated or out of range")),
                }
            }
            let c = self.embeddings.mean_of(&t.doc_ids);
            let drift = c
                .iter()
                .zip(&t.centroid_full)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if c.len() != t.centroid_full.len() || drift > 1e-9 {
                return bad("stale centroid".into());
            }
        }
        if let Some(d) = seen.iter().position(|s| !s) {
            return Err(TopicStoreError::Inconsistent(format!(
                "document {d} is in no topic"
            )));
        }
        Ok(())
    }

    fn make_topic(
        &self,
        index: usize,
        docs: Vec<usize>,
        topwords_tfidf: TopwordList,
        services: &dyn TopicServices,
    ) -> Result<Topic, TopicStoreError> {
        let centroid_full = self.embeddings.mean_of(&docs);
        let topwords_cosine = if self.config.cosine_topwords == 0 {
            None
        } else {
            let candidates = cosine_candidates(&self.corpus, &docs);
            if candidates.is_empty() || centroid_full.iter().all(|&x| x == 0.0) {
                None
            } else {
                let words: Vec<String> = candidates.iter().cloned().collect();
                let vectors = services.embed_texts(&words)?;
                let table = words.into_iter().zip(vectors).collect();
                Some(cosine_topwords(
                    &table,
                    &centroid_full,
                    &candidates,
                    self.config.cosine_topwords,
                )?)
            }
        };
        Ok(Topic {
            index,
            title: String::new(),
            description: String::new(),
            title_is_placeholder: false,
            centroid_reduced: self.reduced.mean_of(&docs),
            doc_ids: docs,
            centroid_full,
            topwords_tfidf,
            topwords_cosine,
        })
    }

    /// Topics for `outcome`: unchanged document sets keep their labels and
    /// cosine lists, changed ones are rebuilt and relabeled. TF-IDF lists are
    /// recomputed for all topics since they depend on the topic count.
    fn rebuild(
        &self,
        outcome: &OpOutcome,
        services: &dyn TopicServices,
    ) -> Result<Vec<Topic>, TopicStoreError> {
        let mut tfidf = ctfidf_all(
            &self.corpus,
            &outcome.partition,
            self.config.stored_topwords,
        )?;
        let mut topics = Vec::with_capacity(outcome.partition.len());
        for (j, (docs, origin)) in outcome.partition.iter().zip(&outcome.origin).enumerate() {
            let words = std::mem::replace(
                &mut tfidf[j],
                TopwordList {
                    method: crate::topwords::TopwordMethod::Tfidf,
                    entries: Vec::new(),
                },
            );
            let topic = match origin {
                Some(o) => {
                    let mut t = self.topics[*o].clone();
                    t.set_index(j);
                    t.topwords_tfidf = words;
                    t
                }
                None => self.make_topic(j, docs.clone(), words, services)?,
            };
            topics.push(topic);
        }

        let fresh = outcome.affected_after();
        let naming: Vec<TopwordList> = fresh
            .iter()
            .map(|&j| topics[j].topwords_tfidf.prefix(self.config.naming_words))
            .collect();
        let jobs: Vec<(usize, &TopwordList)> = fresh.iter().copied().zip(naming.iter()).collect();
        let labels = label_many(services, &jobs);
        for (j, label) in fresh.into_iter().zip(labels) {
            let t = &mut topics[j];
            t.title_is_placeholder = label.placeholder || label.title.trim().is_empty();
            t.title = if t.title_is_placeholder {
                placeholder_title(j)
            } else {
                label.title
            };
            t.description = label.description;
        }
        Ok(topics)
    }

    /// Applies `params`, commits, and records the modification.
    pub fn apply(
        &mut self,
        params: ModificationParams,
        services: &dyn TopicServices,
    ) -> Result<ModificationSummary, TopicStoreError> {
        let partition = self.partition();
        let outcome = ops::apply(&partition, &params, &self.embeddings, &self.reduced)?;
        let noop = outcome.is_noop();
        let topics = if noop {
            self.topics.clone()
        } else {
            self.rebuild(&outcome, services)?
        };
        let before = outcome.affected_before(partition.len());
        let after = outcome.affected_after();
        let kind = params.kind();
        self.topics = topics;
        self.version += 1;
        self.history.push(ModificationRecord {
            params,
            affected_topic_indices_before: before.clone(),
            affected_topic_indices_after: after.clone(),
            noop,
            version_after: self.version,
            timestamp_ms: now_ms(),
        });
        tracing::info!(?kind, noop, version = self.version, "topic model modified");
        Ok(ModificationSummary {
            kind,
            noop,
            affected_topic_indices_before: before,
            affected_topic_indices_after: after,
            version: self.version,
        })
    }

    pub fn merge_topics(
        &mut self,
        indices: &[usize],
        services: &dyn TopicServices,
    ) -> Result<ModificationSummary, TopicStoreError> {
        let indices = ops::normalize_merge_indices(&self.partition(), indices)?;
        self.apply(ModificationParams::Merge { indices }, services)
    }

    pub fn delete_topic(
        &mut self,
        index: usize,
        services: &dyn TopicServices,
    ) -> Result<ModificationSummary, TopicStoreError> {
        self.apply(ModificationParams::Delete { index }, services)
    }

    pub fn split_topic_kmeans(
        &mut self,
        index: usize,
        n_clusters: usize,
        services: &dyn TopicServices,
    ) -> Result<ModificationSummary, TopicStoreError> {
        let params = ModificationParams::SplitKmeans {
            index,
            n_clusters,
            seed: self.config.split_seed,
            max_iter: self.config.kmeans_max_iter,
        };
        self.apply(params, services)
    }

    pub fn split_topic_hdbscan(
        &mut self,
        index: usize,
        min_cluster_size: usize,
        services: &dyn TopicServices,
    ) -> Result<ModificationSummary, TopicStoreError> {
        self.apply(
            ModificationParams::SplitHdbscan {
                index,
                min_cluster_size,
            },
            services,
        )
    }

    fn embed_keyword(
        &self,
        keyword: &str,
        services: &dyn TopicServices,
    ) -> Result<(String, Vec<f64>), TopicStoreError> {
        let keyword = keyword.trim();
        if keyword.is_empty() {
            return Err(TopicStoreError::EmptyKeyword);
        }
        Ok((keyword.to_string(), services.embed_query(keyword)?))
    }

    pub fn split_topic_keyword(
        &mut self,
        index: usize,
        keyword: &str,
        services: &dyn TopicServices,
    ) -> Result<ModificationSummary, TopicStoreError> {
        self.topic(index)?;
        let (keyword, query_vector) = self.embed_keyword(keyword, services)?;
        self.apply(
            ModificationParams::SplitKeyword {
                index,
                keyword,
                query_vector,
            },
            services,
        )
    }

    pub fn create_topic_keyword(
        &mut self,
        keyword: &str,
        services: &dyn TopicServices,
    ) -> Result<ModificationSummary, TopicStoreError> {
        let (keyword, query_vector) = self.embed_keyword(keyword, services)?;
        self.apply(
            ModificationParams::CreateKeyword {
                keyword,
                query_vector,
            },
            services,
        )
    }
}
