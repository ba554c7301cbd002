use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{relabel_by_size, ClusterAssignment, ClusteringError};
use crate::points::{squared_euclidean, Points};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: ClusterAssignment,
    /// Final centroids, indexed by the (relabeled) cluster label.
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after each assignment step, first entry from the seeding.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

pub fn kmeans_cluster(
    points: &Points,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterAssignment, ClusteringError> {
    kmeans_detailed(points, k, seed, max_iter).map(|r| r.assignment)
}

/// Lloyd's algorithm with k-means++ seeding. Stops when an assignment step
/// changes nothing or after `max_iter` update steps. A centroid left without
/// points is re-seeded at the point farthest from its own centroid.
pub fn kmeans_detailed(
    points: &Points,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansResult, ClusteringError> {
    let n = points.rows();
    if k == 0 {
        return Err(ClusteringError::InvalidParameter("k must be >= 1".into()));
    }
    if max_iter == 0 {
        return Err(ClusteringError::InvalidParameter(
            "max_iter must be >= 1".into(),
        ));
    }
    if n < k {
        return Err(ClusteringError::TooFewPoints {
            points: n,
            required: k,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let (mut labels, inertia) = assign(points, &centroids);
    let mut history = vec![inertia];
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        centroids = update(points, &labels, &centroids);
        let (next, inertia) = assign(points, &centroids);
        history.push(inertia);
        let stable = next == labels;
        labels = next;
        if stable {
            break;
        }
    }

    let raw: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    let assignment = relabel_by_size(&raw);
    let mut final_centroids = vec![Vec::new(); assignment.n_clusters];
    for (members, c) in assignment.members().iter().zip(final_centroids.iter_mut()) {
        *c = points.mean_of(members);
    }
    Ok(KMeansResult {
        assignment,
        centroids: final_centroids,
        inertia_history: history,
        iterations,
    })
}

fn plus_plus_init(points: &Points, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_euclidean(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive weight"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("n >= k")
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_euclidean(points.row(i), points.row(next)));
        }
    }
    chosen.iter().map(|&i| points.row(i).to_vec()).collect()
}

/// Nearest centroid per point (ties to the lower index) and total inertia.
fn assign(points: &Points, centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = (0..points.rows())
        .map(|i| {
            let mut best = (f64::INFINITY, 0);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = squared_euclidean(points.row(i), centroid);
                if d < best.0 {
                    best = (d, c);
                }
            }
            inertia += best.0;
            best.1
        })
        .collect();
    (labels, inertia)
}

fn update(points: &Points, labels: &[usize], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = previous.len();
    let dim = points.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    let mut centroids: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let c = c.max(1) as f64;
            s.into_iter().map(|x| x / c).collect()
        })
        .collect();

    let mut used = Vec::new();
    for empty in (0..k).filter(|&c| counts[c] == 0) {
        let mut far = (-1.0, usize::MAX);
        for (i, &l) in labels.iter().enumerate() {
            if used.contains(&i) {
                continue;
            }
            let d = squared_euclidean(points.row(i), &previous[l]);
            if d > far.0 {
                far = (d, i);
            }
        }
        if far.1 != usize::MAX {
            used.push(far.1);
            centroids[empty] = points.row(far.1).to_vec();
        }
    }
    centroids
}
