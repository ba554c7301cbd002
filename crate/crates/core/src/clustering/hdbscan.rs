//! HDBSCAN: core distances, mutual-reachability minimum spanning tree,
//! single-linkage hierarchy, condensed tree and excess-of-mass selection.
//!
//! Distances are Euclidean and computed brute force. The spanning tree is
//! built with Prim's algorithm over the implicit complete graph; ties pick the
//! lower vertex index, and the edge list is sorted by
//! `(weight, min endpoint, max endpoint)`, which makes the whole procedure a
//! deterministic function of the input rows.

use super::{relabel_by_size, ClusterAssignment, ClusteringError, NOISE};
use crate::points::{euclidean, Points};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Neighbor count for core distances (the point itself included).
    /// Defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
}

impl HdbscanParams {
    pub fn new(min_cluster_size: usize) -> Self {
        Self {
            min_cluster_size,
            min_samples: None,
        }
    }
}

/// `max(15, n / 500)`.
pub fn default_min_cluster_size(n_documents: usize) -> usize {
    (n_documents / 500).max(15)
}

pub fn hdbscan_cluster(
    points: &Points,
    params: HdbscanParams,
) -> Result<ClusterAssignment, ClusteringError> {
    let n = points.rows();
    let mcs = params.min_cluster_size;
    if mcs < 2 {
        return Err(ClusteringError::InvalidParameter(
            "min_cluster_size must be >= 2".into(),
        ));
    }
    if n < mcs {
        return Err(ClusteringError::TooFewPoints {
            points: n,
            required: mcs,
        });
    }
    let min_samples = params.min_samples.unwrap_or(mcs).clamp(1, n);
    let core = core_distances(points, min_samples);
    let mst = prim_mst(points, &core);
    let tree = SingleLinkage::build(n, &mst);
    let condensed = condense(&tree, n, mcs);
    let selected = select_clusters(&condensed);
    let labels = label_points(&condensed, &selected, n);
    Ok(relabel_by_size(&labels))
}

fn core_distances(points: &Points, k: usize) -> Vec<f64> {
    let n = points.rows();
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .map(|j| euclidean(points.row(i), points.row(j)))
                .collect();
            // d contains the zero self-distance, so the k-th smallest counts the point itself.
            let idx = k - 1;
            let (_, kth, _) = d.select_nth_unstable_by(idx, f64::total_cmp);
            *kth
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    a: usize,
    b: usize,
    w: f64,
}

fn prim_mst(points: &Points, core: &[f64]) -> Vec<Edge> {
    let n = points.rows();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let mr = euclidean(points.row(current), points.row(j))
                .max(core[current])
                .max(core[j]);
            if mr < best[j] || (mr == best[j] && current < from[j]) {
                best[j] = mr;
                from[j] = current;
            }
            if best[j] < next_w || (best[j] == next_w && j < next) {
                next_w = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push(Edge {
            a: from[next].min(next),
            b: from[next].max(next),
            w: next_w,
        });
        current = next;
    }
    edges.sort_by(|x, y| x.w.total_cmp(&y.w).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)));
    edges
}

/// Binary merge tree: nodes `0..n` are points, node `n + k` is the k-th merge.
struct SingleLinkage {
    children: Vec<(usize, usize)>,
    weight: Vec<f64>,
    size: Vec<usize>,
}

impl SingleLinkage {
    fn build(n: usize, mst: &[Edge]) -> Self {
        let mut parent: Vec<usize> = (0..2 * n).collect();
        let mut size = vec![1usize; n];
        size.resize(2 * n - 1, 0);
        let mut children = Vec::with_capacity(n - 1);
        let mut weight = Vec::with_capacity(n - 1);

        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }

        for (k, e) in mst.iter().enumerate() {
            let ra = find(&mut parent, e.a);
            let rb = find(&mut parent, e.b);
            let node = n + k;
            parent[ra] = node;
            parent[rb] = node;
            size[node] = size[ra] + size[rb];
            children.push((ra, rb));
            weight.push(e.w);
        }
        Self {
            children,
            weight,
            size,
        }
    }

    fn n_points(&self) -> usize {
        self.children.len() + 1
    }

    fn root(&self) -> usize {
        2 * self.n_points() - 2
    }

    fn is_leaf(&self, node: usize) -> bool {
        node < self.n_points()
    }
}

#[derive(Debug, Clone)]
struct CondensedCluster {
    parent: Option<usize>,
    birth_lambda: f64,
    stability: f64,
    children: Vec<usize>,
}

struct Condensed {
    clusters: Vec<CondensedCluster>,
    /// Cluster a point fell out of, per point.
    point_cluster: Vec<usize>,
}

fn condense(tree: &SingleLinkage, n: usize, mcs: usize) -> Condensed {
    let mut clusters = vec![CondensedCluster {
        parent: None,
        birth_lambda: 0.0,
        stability: 0.0,
        children: Vec::new(),
    }];
    let mut point_cluster = vec![0usize; n];
    if n == 1 {
        return Condensed {
            clusters,
            point_cluster,
        };
    }

    // Zero-weight merges (duplicates) would give infinite lambdas; cap them
    // just above the largest finite lambda.
    let min_positive = tree
        .weight
        .iter()
        .copied()
        .filter(|&w| w > 0.0)
        .fold(f64::INFINITY, f64::min);
    let lambda_cap = if min_positive.is_finite() {
        2.0 / min_positive
    } else {
        1.0
    };
    let lambda_of = |node: usize| -> f64 {
        let w = tree.weight[node - n];
        if w > 0.0 {
            (1.0 / w).min(lambda_cap)
        } else {
            lambda_cap
        }
    };

    let mut stack = vec![(tree.root(), 0usize)];
    while let Some((node, cluster)) = stack.pop() {
        let (left, right) = tree.children[node - n];
        let lambda = lambda_of(node);
        let big = |c: usize| tree.size[c] >= mcs;
        match (big(left), big(right)) {
            (true, true) => {
                for child in [left, right] {
                    let id = clusters.len();
                    clusters.push(CondensedCluster {
                        parent: Some(cluster),
                        birth_lambda: lambda,
                        stability: 0.0,
                        children: Vec::new(),
                    });
                    let birth = clusters[cluster].birth_lambda;
                    clusters[cluster].children.push(id);
                    clusters[cluster].stability += (lambda - birth) * tree.size[child] as f64;
                    // min_cluster_size >= 2, so a big child is never a leaf.
                    stack.push((child, id));
                }
            }
            (l_big, r_big) => {
                for (child, child_big) in [(left, l_big), (right, r_big)] {
                    if child_big {
                        stack.push((child, cluster));
                    } else {
                        emit_points(
                            tree,
                            child,
                            cluster,
                            lambda,
                            &mut clusters,
                            &mut point_cluster,
                        );
                    }
                }
            }
        }
    }
    Condensed {
        clusters,
        point_cluster,
    }
}

fn emit_points(
    tree: &SingleLinkage,
    node: usize,
    cluster: usize,
    lambda: f64,
    clusters: &mut [CondensedCluster],
    point_cluster: &mut [usize],
) {
    let mut stack = vec![node];
    let birth = clusters[cluster].birth_lambda;
    while let Some(cur) = stack.pop() {
        if tree.is_leaf(cur) {
            point_cluster[cur] = cluster;
            clusters[cluster].stability += lambda - birth;
        } else {
            let (l, r) = tree.children[cur - tree.n_points()];
            stack.push(l);
            stack.push(r);
        }
    }
}

/// Excess-of-mass selection. The root is never selectable.
fn select_clusters(condensed: &Condensed) -> Vec<bool> {
    let clusters = &condensed.clusters;
    let mut selected = vec![false; clusters.len()];
    let mut best = vec![0.0; clusters.len()];
    // Children always have larger ids than their parent.
    for id in (1..clusters.len()).rev() {
        let own = clusters[id].stability;
        let from_children: f64 = clusters[id].children.iter().map(|&c| best[c]).sum();
        if clusters[id].children.is_empty() || own >= from_children {
            selected[id] = true;
            best[id] = own;
            let mut stack = clusters[id].children.clone();
            while let Some(c) = stack.pop() {
                selected[c] = false;
                stack.extend(clusters[c].children.iter().copied());
            }
        } else {
            best[id] = from_children;
        }
    }
    selected
}

fn label_points(condensed: &Condensed, selected: &[bool], n: usize) -> Vec<i64> {
    let mut labels = vec![NOISE; n];
    for (p, label) in labels.iter_mut().enumerate() {
        let mut c = Some(condensed.point_cluster[p]);
        while let Some(id) = c {
            if selected[id] {
                *label = id as i64;
                break;
            }
            c = condensed.clusters[id].parent;
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{adjusted_rand_index, resolve_noise};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 2]], per: usize, sigma: f64, seed: u64) -> (Points, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                rows.push(vec![
                    center[0] + noise.sample(&mut rng),
                    center[1] + noise.sample(&mut rng),
                ]);
                truth.push(c);
            }
        }
        (Points::from_rows(&rows), truth)
    }

    #[test]
    fn two_separated_blobs() {
        for seed in 0..5 {
            let (p, truth) = blobs(&[[0.0, 0.0], [10.0, 0.0]], 100, 0.1, seed);
            let a = hdbscan_cluster(&p, HdbscanParams::new(10)).unwrap();
            assert_eq!(a.n_clusters, 2, "seed {seed}");
            assert_eq!(a.noise_count(), 0, "seed {seed}");
            assert_eq!(adjusted_rand_index(&a.labels, &truth), 1.0);
        }
    }

    #[test]
    fn uniform_points_resolve_to_one_cluster() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        let p = Points::from_rows(&rows);
        let a = hdbscan_cluster(&p, HdbscanParams::new(50)).unwrap();
        let r = resolve_noise(&p, &a);
        assert_eq!(r.n_clusters, 1);
        assert!(!r.has_noise());
    }

    #[test]
    fn too_few_points() {
        let p = Points::from_rows(&[vec![0.0, 0.0]]);
        assert_eq!(
            hdbscan_cluster(&p, HdbscanParams::new(2)),
            Err(ClusteringError::TooFewPoints {
                points: 1,
                required: 2
            })
        );
    }

    #[test]
    fn three_blobs_with_outlier_noise() {
        let (p, _) = blobs(&[[0.0, 0.0], [5.0, 5.0], [-5.0, 5.0]], 40, 0.2, 9);
        let mut rows = p.to_rows();
        rows.push(vec![100.0, 100.0]);
        let p = Points::from_rows(&rows);
        let a = hdbscan_cluster(&p, HdbscanParams::new(8)).unwrap();
        assert_eq!(a.n_clusters, 3);
        assert_eq!(a.labels[120], NOISE);
        let members = a.members();
        assert!(members.iter().all(|m| m.len() == 40));
    }

    #[test]
    fn duplicate_points_do_not_break_stability() {
        let mut rows = vec![vec![0.0, 0.0]; 30];
        rows.extend(vec![vec![3.0, 3.0]; 30]);
        let p = Points::from_rows(&rows);
        let a = hdbscan_cluster(&p, HdbscanParams::new(5)).unwrap();
        assert_eq!(a.n_clusters, 2);
        assert_eq!(a.noise_count(), 0);
    }

    #[test]
    fn deterministic() {
        let (p, _) = blobs(&[[0.0, 0.0], [3.0, 0.0]], 50, 0.5, 2);
        let a = hdbscan_cluster(&p, HdbscanParams::new(5)).unwrap();
        let b = hdbscan_cluster(&p, HdbscanParams::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn default_min_cluster_size_scales() {
        assert_eq!(default_min_cluster_size(600), 15);
        assert_eq!(default_min_cluster_size(100_000), 200);
    }
}
