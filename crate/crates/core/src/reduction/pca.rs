use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::ReductionError;
use crate::embedding::EmbeddingMatrix;
use crate::points::Points;

/// Mean-centering followed by projection onto the leading right singular
/// vectors of the centered training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `target_dim` components of length `input_dim`, one per output axis.
    components: Vec<Vec<f64>>,
    explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn target_dim(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub(super) fn project(&self, v: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(v.iter().zip(&self.mean))
                    .map(|(ci, (x, m))| ci * (x - m))
                    .sum()
            })
            .collect()
    }
}

/// Relative eigenvalue floor below which a component counts as trivial.
const RANK_TOL: f64 = 1e-10;

pub(super) fn fit(
    matrix: &EmbeddingMatrix,
    d: usize,
) -> Result<(Points, PcaModel), ReductionError> {
    let (n, dim) = (matrix.rows(), matrix.dim());
    if n < 2 {
        return Err(ReductionError::RankDeficient {
            available: 0,
            requested: d,
        });
    }
    let mut mean = vec![0.0; dim];
    for i in 0..n {
        for (m, &x) in mean.iter_mut().zip(matrix.row(i)) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| matrix.row(i)[j] as f64 - mean[j]);

    // Eigen-decompose whichever Gram form is smaller.
    let (eigvals, right_vectors) = if dim <= n {
        let cov = centered.transpose() * &centered;
        let eig = SymmetricEigen::new(cov);
        let order = descending(eig.eigenvalues.as_slice());
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs: Vec<Vec<f64>> = order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect();
        (vals, vecs)
    } else {
        let gram = &centered * centered.transpose();
        let eig = SymmetricEigen::new(gram);
        let order = descending(eig.eigenvalues.as_slice());
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs: Vec<Vec<f64>> = order
            .iter()
            .take(d)
            .map(|&i| {
                let u = eig.eigenvectors.column(i);
                let v = centered.transpose() * u;
                let norm = v.norm();
                if norm > 0.0 {
                    (v / norm).iter().copied().collect()
                } else {
                    vec![0.0; dim]
                }
            })
            .collect();
        (vals, vecs)
    };

    let top = eigvals.first().copied().unwrap_or(0.0);
    let available = if top <= 0.0 {
        0
    } else {
        eigvals.iter().take_while(|&&l| l > top * RANK_TOL).count()
    };
    if available < d {
        return Err(ReductionError::RankDeficient {
            available,
            requested: d,
        });
    }

    let components: Vec<Vec<f64>> = right_vectors
        .into_iter()
        .take(d)
        .map(|mut v| {
            let mut pivot = 0;
            for (j, x) in v.iter().enumerate() {
                if x.abs() > v[pivot].abs() {
                    pivot = j;
                }
            }
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let explained_variance = eigvals.iter().take(d).map(|l| l / (n - 1) as f64).collect();

    let model = PcaModel {
        mean,
        components,
        explained_variance,
    };
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let row: Vec<f64> = matrix.row(i).iter().map(|&x| x as f64).collect();
        data.extend(model.project(&row));
    }
    Ok((Points::new(n, d, data), model))
}

fn descending(vals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    idx
}
