//! A compact UMAP-style neighbor embedding.
//!
//! Builds the fuzzy k-nearest-neighbor graph (exact neighbors), initializes
//! from the leading principal axes and optimizes the usual attractive /
//! negative-sampling cross-entropy objective with plain SGD. All randomness
//! comes from a seeded ChaCha stream, so a fixed seed yields identical output.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pca, ReducerConfig, ReductionError};
use crate::embedding::EmbeddingMatrix;
use crate::points::Points;

const NEGATIVE_SAMPLES: usize = 5;
const SPREAD: f64 = 1.0;
const INIT_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UmapModel {
    n_neighbors: usize,
    min_dist: f64,
    a: f64,
    b: f64,
    input_dim: usize,
    /// Fitted output coordinates of the training rows.
    embedding: Points,
    #[serde(skip)]
    inputs: Option<Arc<EmbeddingMatrix>>,
}

impl PartialEq for UmapModel {
    fn eq(&self, other: &Self) -> bool {
        self.n_neighbors == other.n_neighbors
            && self.min_dist == other.min_dist
            && self.a == other.a
            && self.b == other.b
            && self.input_dim == other.input_dim
            && self.embedding == other.embedding
    }
}

impl UmapModel {
    pub fn target_dim(&self) -> usize {
        self.embedding.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn curve_params(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub(super) fn bind_inputs(&mut self, inputs: Arc<EmbeddingMatrix>) {
        self.inputs = Some(inputs);
    }

    /// Membership-weighted average of the output coordinates of the nearest
    /// training rows.
    pub(super) fn place(&self, v: &[f64]) -> Result<Vec<f64>, ReductionError> {
        let inputs = self
            .inputs
            .as_ref()
            .ok_or(ReductionError::MissingTrainingInputs)?;
        let mut dists: Vec<(f64, usize)> = (0..inputs.rows())
            .map(|i| (dist_f32(inputs.row(i), v), i))
            .collect();
        let k = self.n_neighbors.min(dists.len());
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dists.truncate(k);
        let d: Vec<f64> = dists.iter().map(|x| x.0).collect();
        let (rho, sigma) = smooth_knn(&d, k);
        let weights: Vec<f64> = d.iter().map(|&x| membership(x, rho, sigma)).collect();
        let total: f64 = weights.iter().sum();
        let mut out = vec![0.0; self.target_dim()];
        for (w, &(_, i)) in weights.iter().zip(&dists) {
            for (o, y) in out.iter_mut().zip(self.embedding.row(i)) {
                *o += w / total * y;
            }
        }
        Ok(out)
    }
}

fn dist_f32(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, y)| (x as f64 - y) * (x as f64 - y))
        .sum::<f64>()
        .sqrt()
}

fn membership(d: f64, rho: f64, sigma: f64) -> f64 {
    if d <= rho {
        1.0
    } else {
        (-(d - rho) / sigma).exp()
    }
}

/// Distance to the nearest neighbor and the bandwidth making the
/// memberships sum to `log2(k)`.
fn smooth_knn(dists: &[f64], k: usize) -> (f64, f64) {
    let rho = dists.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
    let target = (k.max(2) as f64).log2();
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..64 {
        let psum: f64 = dists.iter().map(|&d| membership(d, rho, mid)).sum();
        if (psum - target).abs() < 1e-5 {
            break;
        }
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() {
                mid * 2.0
            } else {
                (lo + hi) / 2.0
            };
        }
    }
    let mean: f64 = dists.iter().sum::<f64>() / dists.len().max(1) as f64;
    (rho, mid.max(1e-3 * mean).max(1e-12))
}

/// Least-squares fit of `1 / (1 + a x^(2b))` to the target membership curve.
fn fit_curve(min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (1..=300).map(|i| i as f64 * SPREAD * 3.0 / 300.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / SPREAD).exp()
            }
        })
        .collect();
    let loss = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let f = 1.0 / (1.0 + a * x.powf(2.0 * b));
                (f - y) * (f - y)
            })
            .sum()
    };
    let (mut best_a, mut best_b, mut best) = (1.0, 1.0, f64::INFINITY);
    for i in 1..=60 {
        for j in 1..=40 {
            let (a, b) = (i as f64 * 0.05, j as f64 * 0.05);
            let l = loss(a, b);
            if l < best {
                (best_a, best_b, best) = (a, b, l);
            }
        }
    }
    let mut step = 0.025;
    while step > 1e-6 {
        let mut improved = false;
        for (da, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let (a, b) = (best_a + da, best_b + db);
            if a > 0.0 && b > 0.0 {
                let l = loss(a, b);
                if l < best {
                    (best_a, best_b, best) = (a, b, l);
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (best_a, best_b)
}

pub(super) fn fit(
    matrix: &Arc<EmbeddingMatrix>,
    cfg: &ReducerConfig,
) -> Result<(Points, UmapModel), ReductionError> {
    let n = matrix.rows();
    let d = cfg.target_dim;
    let k = cfg.umap_n_neighbors.min(n.saturating_sub(1)).max(1);

    // Fuzzy neighbor graph, symmetrized with the probabilistic t-conorm.
    let mut graph: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    for i in 0..n {
        let row: Vec<f64> = matrix.row_f64(i);
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (dist_f32(matrix.row(j), &row), j))
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dists.truncate(k);
        let ds: Vec<f64> = dists.iter().map(|x| x.0).collect();
        let (rho, sigma) = smooth_knn(&ds, k);
        for &(dist, j) in &dists {
            let w = membership(dist, rho, sigma);
            let key = (i.min(j), i.max(j));
            let e = graph.entry(key).or_insert(0.0);
            *e = *e + w - *e * w;
        }
    }
    let edges: Vec<(usize, usize, f64)> = graph
        .into_iter()
        .filter(|&(_, w)| w > 0.0)
        .map(|((i, j), w)| (i, j, w))
        .collect();

    let (init, _) = pca::fit(matrix, d)?;
    let mut emb = scale_init(init);
    let (a, b) = fit_curve(cfg.umap_min_dist);
    optimize(
        &mut emb,
        &edges,
        a,
        b,
        cfg.umap_epochs.max(1),
        cfg.random_seed,
    );

    let model = UmapModel {
        n_neighbors: k,
        min_dist: cfg.umap_min_dist,
        a,
        b,
        input_dim: matrix.dim(),
        embedding: emb.clone(),
        inputs: Some(Arc::clone(matrix)),
    };
    Ok((emb, model))
}

fn scale_init(mut p: Points) -> Points {
    let max = p.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max > 0.0 {
        for i in 0..p.rows() {
            p.row_mut(i).iter_mut().for_each(|x| *x *= INIT_SCALE / max);
        }
    }
    p
}

fn optimize(
    emb: &mut Points,
    edges: &[(usize, usize, f64)],
    a: f64,
    b: f64,
    epochs: usize,
    seed: u64,
) {
    let n = emb.rows();
    let dim = emb.dim();
    let max_w = edges.iter().map(|e| e.2).fold(0.0f64, f64::max);
    if edges.is_empty() || max_w <= 0.0 {
        return;
    }
    let per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let mut next_sample = per_sample.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clip = |g: f64| g.clamp(-4.0, 4.0);

    for epoch in 0..epochs {
        let alpha = 1.0 - epoch as f64 / epochs as f64;
        for (e, &(i, j, _)) in edges.iter().enumerate() {
            if next_sample[e] > (epoch + 1) as f64 {
                continue;
            }
            next_sample[e] += per_sample[e];
            attract(emb, i, j, a, b, alpha, clip);
            for _ in 0..NEGATIVE_SAMPLES {
                let other = rng.random_range(0..n);
                if other == i {
                    continue;
                }
                let d2: f64 = (0..dim)
                    .map(|c| (emb.row(i)[c] - emb.row(other)[c]).powi(2))
                    .sum();
                if d2 <= 0.0 {
                    continue;
                }
                let coeff = 2.0 * b / ((0.001 + d2) * (1.0 + a * d2.powf(b)));
                for c in 0..dim {
                    let diff = emb.row(i)[c] - emb.row(other)[c];
                    emb.row_mut(i)[c] += clip(coeff * diff) * alpha;
                }
            }
        }
    }
}

fn attract(
    emb: &mut Points,
    i: usize,
    j: usize,
    a: f64,
    b: f64,
    alpha: f64,
    clip: impl Fn(f64) -> f64,
) {
    let dim = emb.dim();
    let d2: f64 = (0..dim)
        .map(|c| (emb.row(i)[c] - emb.row(j)[c]).powi(2))
        .sum();
    if d2 <= 0.0 {
        return;
    }
    let coeff = -2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b));
    for c in 0..dim {
        let diff = emb.row(i)[c] - emb.row(j)[c];
        let g = clip(coeff * diff) * alpha;
        emb.row_mut(i)[c] += g;
        emb.row_mut(j)[c] -= g;
    }
}
