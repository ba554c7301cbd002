use super::{relabel_by_size, ClusterAssignment, ClusteringError};
use crate::points::{squared_euclidean, Points};

struct Group {
    size: usize,
    centroid: Vec<f64>,
}

/// Ward cost of merging two groups: the increase in within-group sum of
/// squares, `n_a n_b / (n_a + n_b) · ‖c_a − c_b‖²`.
fn ward_increase(a: &Group, b: &Group) -> f64 {
    let (na, nb) = (a.size as f64, b.size as f64);
    na * nb / (na + nb) * squared_euclidean(&a.centroid, &b.centroid)
}

/// Greedily merges the pair of clusters with the smallest Ward increase until
/// `k` remain. Ties go to the lexicographically smallest pair of current
/// labels; the merged cluster keeps the lower label. The result is relabeled
/// by descending size.
pub fn agglomerative_merge_to_k(
    points: &Points,
    assignment: &ClusterAssignment,
    k: usize,
) -> Result<ClusterAssignment, ClusteringError> {
    if assignment.labels.len() != points.rows() {
        return Err(ClusteringError::LengthMismatch {
            labels: assignment.labels.len(),
            points: points.rows(),
        });
    }
    if assignment.has_noise() {
        return Err(ClusteringError::NoiseNotResolved);
    }
    if k == 0 {
        return Err(ClusteringError::InvalidParameter("k must be >= 1".into()));
    }
    let c = assignment.n_clusters;
    if k > c {
        return Err(ClusteringError::KExceedsClusters { k, available: c });
    }

    let members = assignment.members();
    let mut groups: Vec<Option<Group>> = members
        .iter()
        .map(|m| {
            (!m.is_empty()).then(|| Group {
                size: m.len(),
                centroid: points.mean_of(m),
            })
        })
        .collect();
    let mut alive = groups.iter().filter(|g| g.is_some()).count();
    // merged_into[i] = current representative label of original label i
    let mut merged_into: Vec<usize> = (0..c).collect();

    let mut cost = vec![vec![f64::INFINITY; c]; c];
    for i in 0..c {
        for j in i + 1..c {
            if let (Some(a), Some(b)) = (&groups[i], &groups[j]) {
                cost[i][j] = ward_increase(a, b);
            }
        }
    }

    while alive > k {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for (i, row) in cost.iter().enumerate() {
            for (j, &v) in row.iter().enumerate().skip(i + 1) {
                if v < best.0 {
                    best = (v, i, j);
                }
            }
        }
        let (_, a, b) = best;
        let gb = groups[b].take().expect("live cluster");
        let ga = groups[a].as_mut().expect("live cluster");
        let total = (ga.size + gb.size) as f64;
        for (x, y) in ga.centroid.iter_mut().zip(&gb.centroid) {
            *x = (*x * ga.size as f64 + y * gb.size as f64) / total;
        }
        ga.size += gb.size;
        for m in merged_into.iter_mut() {
            if *m == b {
                *m = a;
            }
        }
        for row in cost.iter_mut() {
            row[b] = f64::INFINITY;
        }
        cost[b].fill(f64::INFINITY);
        for other in 0..c {
            if other == a {
                continue;
            }
            if let (Some(x), Some(y)) = (&groups[a], &groups[other]) {
                let v = ward_increase(x, y);
                let (lo, hi) = (a.min(other), a.max(other));
                cost[lo][hi] = v;
            }
        }
        alive -= 1;
    }

    let labels: Vec<i64> = assignment
        .labels
        .iter()
        .map(|&l| merged_into[l as usize] as i64)
        .collect();
    Ok(relabel_by_size(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_clusters_merge_nearest_pair() {
        // Hand-computed increases: {0,1}: 1·1/2·1 = 0.5; {1,10}: 1·1/2·81 = 40.5;
        // {0,10}: 1·1/2·100 = 50. The first pair wins.
        let p = Points::from_rows(&[vec![0.0], vec![1.0], vec![10.0]]);
        let a = ClusterAssignment {
            labels: vec![0, 1, 2],
            n_clusters: 3,
        };
        let out = agglomerative_merge_to_k(&p, &a, 2).unwrap();
        assert_eq!(out.n_clusters, 2);
        assert_eq!(out.labels[0], out.labels[1]);
        assert_ne!(out.labels[0], out.labels[2]);
        assert_eq!(out.labels, vec![0, 0, 1]);
    }

    #[test]
    fn size_weighting_matters() {
        // A big cluster at 0 (size 10), a singleton at 3, a singleton at 7.
        // {big,3}: 10/11·9 ≈ 8.18; {3,7}: 1/2·16 = 8.0 -> merge the singletons.
        let mut rows = vec![vec![0.0]; 10];
        rows.push(vec![3.0]);
        rows.push(vec![7.0]);
        let p = Points::from_rows(&rows);
        let mut labels = vec![0; 10];
        labels.extend([1, 2]);
        let a = ClusterAssignment {
            labels,
            n_clusters: 3,
        };
        let out = agglomerative_merge_to_k(&p, &a, 2).unwrap();
        assert_eq!(out.labels[10], out.labels[11]);
        assert_ne!(out.labels[0], out.labels[10]);
    }

    #[test]
    fn k_equal_to_clusters_only_relabels() {
        let p = Points::from_rows(&[vec![0.0], vec![5.0], vec![5.1], vec![9.0]]);
        let a = ClusterAssignment {
            labels: vec![2, 0, 0, 1],
            n_clusters: 3,
        };
        let out = agglomerative_merge_to_k(&p, &a, 3).unwrap();
        assert_eq!(out, a.relabeled_by_size());
        assert_eq!(out.labels, vec![1, 0, 0, 2]);
    }

    #[test]
    fn errors() {
        let p = Points::from_rows(&[vec![0.0], vec![1.0]]);
        let a = ClusterAssignment {
            labels: vec![0, 1],
            n_clusters: 2,
        };
        assert_eq!(
            agglomerative_merge_to_k(&p, &a, 3),
            Err(ClusteringError::KExceedsClusters { k: 3, available: 2 })
        );
        let noisy = ClusterAssignment {
            labels: vec![0, -1],
            n_clusters: 1,
        };
        assert_eq!(
            agglomerative_merge_to_k(&p, &noisy, 1),
            Err(ClusteringError::NoiseNotResolved)
        );
    }

    #[test]
    fn twenty_clusters_to_twenty_topics() {
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|i| vec![(i / 5) as f64 * 10.0, (i % 5) as f64 * 0.1])
            .collect();
        let p = Points::from_rows(&rows);
        let a = ClusterAssignment {
            labels: (0..100).map(|i| (i / 5) as i64).collect(),
            n_clusters: 20,
        };
        assert_eq!(agglomerative_merge_to_k(&p, &a, 20).unwrap().n_clusters, 20);
    }
}
