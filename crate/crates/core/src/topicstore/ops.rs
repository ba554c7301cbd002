//! Modification operators over a bare partition of document ids.
//!
//! These functions never look at titles, top-words or providers, so the live
//! state and history replay share exactly the same code path.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::TopicStoreError;
use crate::clustering::{hdbscan_cluster, kmeans_cluster, resolve_noise, HdbscanParams};
use crate::embedding::{cosine_similarity, EmbeddingMatrix};
use crate::points::Points;

pub type Partition = Vec<Vec<usize>>;

/// Parameters of one modification, as stored in the history. Keyword
/// operations carry the keyword's embedding so that replay needs no
/// provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModificationParams {
    Merge {
        indices: Vec<usize>,
    },
    Delete {
        index: usize,
    },
    SplitKmeans {
        index: usize,
        n_clusters: usize,
        seed: u64,
        max_iter: usize,
    },
    SplitHdbscan {
        index: usize,
        min_cluster_size: usize,
    },
    SplitKeyword {
        index: usize,
        keyword: String,
        query_vector: Vec<f64>,
    },
    CreateKeyword {
        keyword: String,
        query_vector: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModificationKind {
    Merge,
    Delete,
    SplitKmeans,
    SplitHdbscan,
    SplitKeyword,
    CreateKeyword,
}

impl ModificationParams {
    pub fn kind(&self) -> ModificationKind {
        match self {
            ModificationParams::Merge { .. } => ModificationKind::Merge,
            ModificationParams::Delete { .. } => ModificationKind::Delete,
            ModificationParams::SplitKmeans { .. } => ModificationKind::SplitKmeans,
            ModificationParams::SplitHdbscan { .. } => ModificationKind::SplitHdbscan,
            ModificationParams::SplitKeyword { .. } => ModificationKind::SplitKeyword,
            ModificationParams::CreateKeyword { .. } => ModificationKind::CreateKeyword,
        }
    }
}

/// Result of applying an operator. `origin[j]` is the old index of new topic
/// `j` when its document set is unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct OpOutcome {
    pub partition: Partition,
    pub origin: Vec<Option<usize>>,
}

impl OpOutcome {
    fn new(old: &[Vec<usize>], mut partition: Partition) -> Self {
        for docs in &mut partition {
            docs.sort_unstable();
        }
        let lookup: HashMap<&[usize], usize> = old
            .iter()
            .enumerate()
            .map(|(i, d)| (d.as_slice(), i))
            .collect();
        let origin = partition
            .iter()
            .map(|d| lookup.get(d.as_slice()).copied())
            .collect();
        OpOutcome { partition, origin }
    }

    fn unchanged(old: &[Vec<usize>]) -> Self {
        OpOutcome {
            partition: old.to_vec(),
            origin: (0..old.len()).map(Some).collect(),
        }
    }

    pub fn is_noop(&self) -> bool {
        self.origin.iter().enumerate().all(|(j, o)| *o == Some(j))
    }

    /// New indices whose document set changed or is new.
    pub fn affected_after(&self) -> Vec<usize> {
        (0..self.partition.len())
            .filter(|&j| self.origin[j].is_none())
            .collect()
    }

    /// Old indices that no longer exist with the same document set.
    pub fn affected_before(&self, old_len: usize) -> Vec<usize> {
        let kept: BTreeSet<usize> = self.origin.iter().flatten().copied().collect();
        (0..old_len).filter(|i| !kept.contains(i)).collect()
    }
}

fn check_index(partition: &[Vec<usize>], index: usize) -> Result<(), TopicStoreError> {
    if index < partition.len() {
        Ok(())
    } else {
        Err(TopicStoreError::InvalidTopicIndex {
            index,
            topics: partition.len(),
        })
    }
}

/// Cosine similarity in full space; a zero vector on either side counts as
/// similarity 0.
pub fn doc_similarity(embeddings: &EmbeddingMatrix, doc: usize, target: &[f64]) -> f64 {
    cosine_similarity(&embeddings.row_f64(doc), target).unwrap_or(0.0)
}

/// The strict keyword rule: `doc` moves iff it is closer to the keyword than
/// to its topic centroid.
pub fn prefers_keyword(
    embeddings: &EmbeddingMatrix,
    doc: usize,
    query: &[f64],
    centroid: &[f64],
) -> bool {
    let e = embeddings.row_f64(doc);
    cosine_similarity(&e, query).unwrap_or(0.0) > cosine_similarity(&e, centroid).unwrap_or(0.0)
}

fn check_query(embeddings: &EmbeddingMatrix, q: &[f64]) -> Result<(), TopicStoreError> {
    if q.len() != embeddings.dim() {
        return Err(TopicStoreError::InvalidParameter(format!(
            "keyword vector has dimension {} but documents have {}",
            q.len(),
            embeddings.dim()
        )));
    }
    if q.iter().all(|&x| x == 0.0) {
        return Err(TopicStoreError::InvalidParameter(
            "keyword embedding is a zero vector".into(),
        ));
    }
    Ok(())
}

/// Sorted, deduplicated merge set; fails unless it names two valid topics.
pub fn normalize_merge_indices(
    partition: &[Vec<usize>],
    indices: &[usize],
) -> Result<Vec<usize>, TopicStoreError> {
    let set: BTreeSet<usize> = indices.iter().copied().collect();
    for &i in &set {
        check_index(partition, i)?;
    }
    if set.len() < 2 {
        return Err(TopicStoreError::NeedAtLeastTwo);
    }
    Ok(set.into_iter().collect())
}

pub fn apply(
    partition: &[Vec<usize>],
    params: &ModificationParams,
    embeddings: &EmbeddingMatrix,
    reduced: &Points,
) -> Result<OpOutcome, TopicStoreError> {
    match params {
        ModificationParams::Merge { indices } => merge(partition, indices),
        ModificationParams::Delete { index } => delete(partition, *index, embeddings),
        ModificationParams::SplitKmeans {
            index,
            n_clusters,
            seed,
            max_iter,
        } => split_kmeans(partition, *index, *n_clusters, *seed, *max_iter, reduced),
        ModificationParams::SplitHdbscan {
            index,
            min_cluster_size,
        } => split_hdbscan(partition, *index, *min_cluster_size, reduced),
        ModificationParams::SplitKeyword {
            index,
            query_vector,
            ..
        } => split_keyword(partition, *index, query_vector, embeddings),
        ModificationParams::CreateKeyword { query_vector, .. } => {
            create_keyword(partition, query_vector, embeddings)
        }
    }
}

fn merge(partition: &[Vec<usize>], indices: &[usize]) -> Result<OpOutcome, TopicStoreError> {
    let set = normalize_merge_indices(partition, indices)?;
    let target = set[0];
    let mut out = Vec::with_capacity(partition.len() - set.len() + 1);
    for (i, docs) in partition.iter().enumerate() {
        if i == target {
            out.push(
                set.iter()
                    .flat_map(|&j| partition[j].iter().copied())
                    .collect(),
            );
        } else if !set.contains(&i) {
            out.push(docs.clone());
        }
    }
    Ok(OpOutcome::new(partition, out))
}

fn delete(
    partition: &[Vec<usize>],
    index: usize,
    embeddings: &EmbeddingMatrix,
) -> Result<OpOutcome, TopicStoreError> {
    check_index(partition, index)?;
    if partition.len() < 2 {
        return Err(TopicStoreError::LastTopic);
    }
    let centroids: Vec<(usize, Vec<f64>)> = partition
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != index)
        .map(|(i, docs)| (i, embeddings.mean_of(docs)))
        .collect();
    let mut out: Partition = partition.to_vec();
    for &doc in &partition[index] {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, c) in &centroids {
            let s = doc_similarity(embeddings, doc, c);
            if s > best.0 {
                best = (s, *i);
            }
        }
        out[best.1].push(doc);
    }
    out.remove(index);
    Ok(OpOutcome::new(partition, out))
}

/// Sub-topics in label order (largest first); the first keeps `index`, the
/// rest are appended.
fn replace_with_parts(partition: &[Vec<usize>], index: usize, parts: Partition) -> OpOutcome {
    let mut out = partition.to_vec();
    let mut parts = parts.into_iter();
    out[index] = parts.next().expect("at least one part");
    out.extend(parts);
    OpOutcome::new(partition, out)
}

fn parts_from_labels(docs: &[usize], labels: &[i64], n: usize) -> Partition {
    let mut parts = vec![Vec::new(); n];
    for (&doc, &l) in docs.iter().zip(labels) {
        parts[l as usize].push(doc);
    }
    parts
}

fn split_kmeans(
    partition: &[Vec<usize>],
    index: usize,
    n_clusters: usize,
    seed: u64,
    max_iter: usize,
    reduced: &Points,
) -> Result<OpOutcome, TopicStoreError> {
    check_index(partition, index)?;
    if n_clusters < 2 {
        return Err(TopicStoreError::InvalidParameter(
            "n_clusters must be at least 2".into(),
        ));
    }
    let docs = &partition[index];
    if docs.len() < n_clusters {
        return Err(TopicStoreError::TooFewDocuments {
            topic: index,
            documents: docs.len(),
            required: n_clusters,
        });
    }
    let a = kmeans_cluster(&reduced.select(docs), n_clusters, seed, max_iter)?;
    if a.n_clusters < 2 {
        return Ok(OpOutcome::unchanged(partition));
    }
    Ok(replace_with_parts(
        partition,
        index,
        parts_from_labels(docs, &a.labels, a.n_clusters),
    ))
}

fn split_hdbscan(
    partition: &[Vec<usize>],
    index: usize,
    min_cluster_size: usize,
    reduced: &Points,
) -> Result<OpOutcome, TopicStoreError> {
    check_index(partition, index)?;
    if min_cluster_size < 2 {
        return Err(TopicStoreError::InvalidParameter(
            "min_cluster_size must be at least 2".into(),
        ));
    }
    let docs = &partition[index];
    if docs.len() < 2 * min_cluster_size {
        return Err(TopicStoreError::TooFewDocuments {
            topic: index,
            documents: docs.len(),
            required: 2 * min_cluster_size,
        });
    }
    let points = reduced.select(docs);
    let raw = hdbscan_cluster(&points, HdbscanParams::new(min_cluster_size))?;
    let a = resolve_noise(&points, &raw);
    if a.n_clusters < 2 {
        return Ok(OpOutcome::unchanged(partition));
    }
    Ok(replace_with_parts(
        partition,
        index,
        parts_from_labels(docs, &a.labels, a.n_clusters),
    ))
}

fn split_keyword(
    partition: &[Vec<usize>],
    index: usize,
    query: &[f64],
    embeddings: &EmbeddingMatrix,
) -> Result<OpOutcome, TopicStoreError> {
    check_index(partition, index)?;
    check_query(embeddings, query)?;
    let docs = &partition[index];
    let centroid = embeddings.mean_of(docs);
    let (moved, kept): (Vec<usize>, Vec<usize>) = docs
        .iter()
        .partition(|&&d| prefers_keyword(embeddings, d, query, &centroid));
    if moved.is_empty() || kept.is_empty() {
        return Ok(OpOutcome::unchanged(partition));
    }
    Ok(replace_with_parts(partition, index, vec![kept, moved]))
}

fn create_keyword(
    partition: &[Vec<usize>],
    query: &[f64],
    embeddings: &EmbeddingMatrix,
) -> Result<OpOutcome, TopicStoreError> {
    check_query(embeddings, query)?;
    let centroids: Vec<Vec<f64>> = partition.iter().map(|d| embeddings.mean_of(d)).collect();
    let mut moved = Vec::new();
    let mut out: Partition = Vec::with_capacity(partition.len() + 1);
    for (docs, centroid) in partition.iter().zip(&centroids) {
        let (m, kept): (Vec<usize>, Vec<usize>) = docs
            .iter()
            .partition(|&&d| prefers_keyword(embeddings, d, query, centroid));
        moved.extend(m);
        if !kept.is_empty() {
            out.push(kept);
        }
    }
    if moved.is_empty() {
        return Ok(OpOutcome::unchanged(partition));
    }
    out.push(moved);
    Ok(OpOutcome::new(partition, out))
}

/// Applies `history` to `initial` in order.
pub fn replay<'a>(
    initial: &[Vec<usize>],
    history: impl IntoIterator<Item = &'a ModificationParams>,
    embeddings: &EmbeddingMatrix,
    reduced: &Points,
) -> Result<Partition, TopicStoreError> {
    let mut p = initial.to_vec();
    for params in history {
        p = apply(&p, params, embeddings, reduced)?.partition;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(rows: &[[f64; 2]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn pts(rows: &[[f64; 2]]) -> Points {
        Points::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn merge_places_union_at_lowest_index() {
        let p = vec![vec![0], vec![1, 2], vec![3], vec![4]];
        let o = merge(&p, &[3, 1]).unwrap();
        assert_eq!(o.partition, vec![vec![0], vec![1, 2, 4], vec![3]]);
        assert_eq!(o.origin, vec![Some(0), None, Some(2)]);
        assert_eq!(o.affected_before(4), vec![1, 3]);
        assert_eq!(merge(&p, &[1, 1]), Err(TopicStoreError::NeedAtLeastTwo));
        assert!(matches!(
            merge(&p, &[1, 9]),
            Err(TopicStoreError::InvalidTopicIndex { .. })
        ));
    }

    #[test]
    fn delete_moves_to_most_similar_centroid() {
        let e = emb(&[[1.0, 0.0], [0.0, 1.0], [0.9, 0.1], [0.1, 0.9]]);
        let p = vec![vec![0], vec![1], vec![2, 3]];
        let o = delete(&p, 2, &e).unwrap();
        assert_eq!(o.partition, vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(
            delete(&[vec![0, 1, 2, 3]], 0, &e),
            Err(TopicStoreError::LastTopic)
        );
    }

    #[test]
    fn delete_tie_goes_to_lowest_index() {
        let e = emb(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let o = delete(&[vec![0], vec![1], vec![2]], 2, &e).unwrap();
        assert_eq!(o.partition, vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn keyword_equal_to_centroid_is_noop() {
        let e = emb(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let p = vec![vec![0, 1, 2]];
        let c = e.mean_of(&p[0]);
        let o = split_keyword(&p, 0, &c, &e).unwrap();
        assert!(o.is_noop());
    }

    #[test]
    fn keyword_split_moves_strictly_closer_docs() {
        let e = emb(&[[1.0, 0.0], [0.9, 0.2], [0.0, 1.0], [0.2, 0.9]]);
        let p = vec![vec![0, 1, 2, 3]];
        let o = split_keyword(&p, 0, &[0.0, 1.0], &e).unwrap();
        assert_eq!(o.partition, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(o.affected_after(), vec![0, 1]);
    }

    #[test]
    fn create_keyword_drops_emptied_topics() {
        let e = emb(&[[1.0, 0.0], [0.0, 1.0], [0.1, 1.0]]);
        let p = vec![vec![0], vec![1, 2]];
        // topic 0 is a single doc equal to its centroid; topic 1's docs are
        // pulled toward an exact copy of doc 1.
        let o = create_keyword(&p, &[0.0, 1.0], &e).unwrap();
        assert_eq!(o.partition, vec![vec![0], vec![2], vec![1]]);
        let o = create_keyword(&[vec![1], vec![0, 2]], &[0.05, 1.0], &e).unwrap();
        assert_eq!(o.partition, vec![vec![1], vec![0], vec![2]]);
    }

    #[test]
    fn kmeans_split_recovers_blobs() {
        let r = pts(&[[0.0, 0.0], [10.0, 0.0], [0.1, 0.0], [10.1, 0.0], [0.0, 0.1]]);
        let p = vec![vec![0, 1, 2, 3, 4]];
        let o = split_kmeans(&p, 0, 2, 1, 100, &r).unwrap();
        assert_eq!(o.partition, vec![vec![0, 2, 4], vec![1, 3]]);
        assert!(matches!(
            split_kmeans(&p, 0, 6, 1, 100, &r),
            Err(TopicStoreError::TooFewDocuments { .. })
        ));
    }

    #[test]
    fn replay_matches_sequence() {
        let e = emb(&[[1.0, 0.0], [0.0, 1.0], [0.7, 0.7], [0.2, 0.9]]);
        let r = pts(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]);
        let init = vec![vec![0], vec![1], vec![2], vec![3]];
        let ops = vec![
            ModificationParams::Merge {
                indices: vec![1, 3],
            },
            ModificationParams::Delete { index: 0 },
        ];
        let mut p = init.clone();
        for op in &ops {
            p = apply(&p, op, &e, &r).unwrap().partition;
        }
        assert_eq!(replay(&init, &ops, &e, &r).unwrap(), p);
    }

    #[test]
    fn params_json_is_tagged() {
        let v = serde_json::to_value(ModificationParams::Delete { index: 2 }).unwrap();
        assert_eq!(v, serde_json::json!({"kind": "delete", "index": 2}));
    }
}
