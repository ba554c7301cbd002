//! Partitioning of reduced document vectors.
//!
//! HDBSCAN discovers clusters (and noise), [`resolve_noise`] folds the noise
//! into the nearest cluster, [`agglomerative_merge_to_k`] coarsens to a fixed
//! topic count with Ward's criterion, and [`kmeans_cluster`] splits a topic.
//!
//! Every function here is a pure function of its inputs. Final labels are
//! dense, ordered by descending cluster size with ties going to the cluster
//! holding the smallest row index.

mod hdbscan;
mod kmeans;
mod metrics;
mod ward;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::points::{squared_euclidean, Points};

pub use hdbscan::{default_min_cluster_size, hdbscan_cluster, HdbscanParams};
pub use kmeans::{kmeans_cluster, kmeans_detailed, KMeansResult};
pub use metrics::adjusted_rand_index;
pub use ward::agglomerative_merge_to_k;

pub const NOISE: i64 = -1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusteringError {
    #[error("too few points: {points} points for {required} required")]
    TooFewPoints { points: usize, required: usize },
    #[error("requested {k} clusters but only {available} exist")]
    KExceedsClusters { k: usize, available: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("assignment has {labels} labels for {points} points")]
    LengthMismatch { labels: usize, points: usize },
    #[error("assignment still contains noise labels")]
    NoiseNotResolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<i64>,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    pub fn has_noise(&self) -> bool {
        self.labels.contains(&NOISE)
    }

    /// Row indices per cluster, in label order; noise rows are omitted.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }

    /// Renumbers clusters by descending size, ties to the cluster containing
    /// the smallest row. Noise labels are kept as noise; empty labels vanish.
    pub fn relabeled_by_size(&self) -> ClusterAssignment {
        relabel_by_size(&self.labels)
    }
}

pub(crate) fn relabel_by_size(labels: &[i64]) -> ClusterAssignment {
    use std::collections::BTreeMap;
    // label -> (size, first row)
    let mut stats: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE {
            let e = stats.entry(l).or_insert((0, i));
            e.0 += 1;
        }
    }
    let mut order: Vec<(i64, usize, usize)> =
        stats.into_iter().map(|(l, (s, f))| (l, s, f)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let remap: BTreeMap<i64, i64> = order
        .iter()
        .enumerate()
        .map(|(new, &(old, _, _))| (old, new as i64))
        .collect();
    ClusterAssignment {
        labels: labels
            .iter()
            .map(|l| if *l == NOISE { NOISE } else { remap[l] })
            .collect(),
        n_clusters: order.len(),
    }
}

/// Assigns each noise row to the cluster with the nearest centroid
/// (Euclidean; ties to the lowest label). An all-noise input becomes a
/// single cluster 0. Non-noise labels are left untouched.
pub fn resolve_noise(points: &Points, assignment: &ClusterAssignment) -> ClusterAssignment {
    if !assignment.has_noise() {
        return assignment.clone();
    }
    let members = assignment.members();
    let centroids: Vec<(i64, Vec<f64>)> = members
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(l, m)| (l as i64, points.mean_of(m)))
        .collect();
    if centroids.is_empty() {
        return ClusterAssignment {
            labels: vec![0; assignment.labels.len()],
            n_clusters: 1,
        };
    }
    let labels = assignment
        .labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if l != NOISE {
                return l;
            }
            let mut best = (f64::INFINITY, NOISE);
            for (label, c) in &centroids {
                let d = squared_euclidean(points.row(i), c);
                if d < best.0 {
                    best = (d, *label);
                }
            }
            best.1
        })
        .collect();
    ClusterAssignment {
        labels,
        n_clusters: assignment.n_clusters,
    }
}
