//! Dimensionality reduction ahead of density clustering.
//!
//! Two reducers sit behind [`fit_reduce`]: a deterministic truncated-SVD
//! projection (`pca_like`, the default) and a compact UMAP-style neighbor
//! embedding (`umap`). Both produce a [`ReducerModel`] that can place new
//! vectors, such as keyword embeddings, into the reduced space.

mod pca;
mod umap;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingMatrix;
use crate::points::Points;

pub use pca::PcaModel;
pub use umap::UmapModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("rank deficient input: {available} non-trivial components, {requested} requested")]
    RankDeficient { available: usize, requested: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid reducer configuration: {0}")]
    InvalidConfig(String),
    #[error("umap transform needs the training inputs; none are attached")]
    MissingTrainingInputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducerKind {
    PcaLike,
    Umap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReducerConfig {
    pub kind: ReducerKind,
    pub target_dim: usize,
    pub random_seed: u64,
    pub umap_n_neighbors: usize,
    pub umap_min_dist: f64,
    pub umap_epochs: usize,
}

impl Default for ReducerConfig {
    fn default() -> Self {
        Self {
            kind: ReducerKind::PcaLike,
            target_dim: 5,
            random_seed: 42,
            umap_n_neighbors: 15,
            umap_min_dist: 0.0,
            umap_epochs: 200,
        }
    }
}

impl ReducerConfig {
    pub fn pca(target_dim: usize) -> Self {
        Self {
            kind: ReducerKind::PcaLike,
            target_dim,
            ..Self::default()
        }
    }

    pub fn validate(&self, rows: usize, dim: usize) -> Result<(), ReductionError> {
        let d = self.target_dim;
        if d < 2 {
            return Err(ReductionError::InvalidConfig(
                "target_dim must be >= 2".into(),
            ));
        }
        if d > dim {
            return Err(ReductionError::InvalidConfig(format!(
                "target_dim {d} exceeds embedding dimension {dim}"
            )));
        }
        if d > rows {
            return Err(ReductionError::InvalidConfig(format!(
                "target_dim {d} exceeds number of rows {rows}"
            )));
        }
        if self.kind == ReducerKind::Umap {
            if self.umap_n_neighbors == 0 {
                return Err(ReductionError::InvalidConfig(
                    "umap_n_neighbors must be >= 1".into(),
                ));
            }
            if !(self.umap_min_dist >= 0.0 && self.umap_min_dist.is_finite()) {
                return Err(ReductionError::InvalidConfig(
                    "umap_min_dist must be >= 0".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReducerModel {
    PcaLike(PcaModel),
    Umap(UmapModel),
}

impl ReducerModel {
    pub fn target_dim(&self) -> usize {
        match self {
            ReducerModel::PcaLike(m) => m.target_dim(),
            ReducerModel::Umap(m) => m.target_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ReducerModel::PcaLike(m) => m.input_dim(),
            ReducerModel::Umap(m) => m.input_dim(),
        }
    }

    pub fn transform(&self, vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ReductionError> {
        let expected = self.input_dim();
        if let Some(v) = vectors.iter().find(|v| v.len() != expected) {
            return Err(ReductionError::DimensionMismatch {
                expected,
                actual: v.len(),
            });
        }
        match self {
            ReducerModel::PcaLike(m) => Ok(vectors.iter().map(|v| m.project(v)).collect()),
            ReducerModel::Umap(m) => vectors.iter().map(|v| m.place(v)).collect(),
        }
    }

    /// Re-attaches the training matrix after deserialization; only the umap
    /// model needs it.
    pub fn bind_training_inputs(&mut self, inputs: Arc<EmbeddingMatrix>) {
        if let ReducerModel::Umap(m) = self {
            m.bind_inputs(inputs);
        }
    }
}

pub fn fit_reduce(
    matrix: &Arc<EmbeddingMatrix>,
    cfg: &ReducerConfig,
) -> Result<(Points, ReducerModel), ReductionError> {
    cfg.validate(matrix.rows(), matrix.dim())?;
    match cfg.kind {
        ReducerKind::PcaLike => {
            let (points, model) = pca::fit(matrix, cfg.target_dim)?;
            Ok((points, ReducerModel::PcaLike(model)))
        }
        ReducerKind::Umap => {
            let (points, model) = umap::fit(matrix, cfg)?;
            Ok((points, ReducerModel::Umap(model)))
        }
    }
}
