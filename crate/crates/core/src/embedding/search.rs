use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub doc_id: usize,
    pub similarity: f64,
}

fn norm<T: Copy + Into<f64>>(v: &[T]) -> f64 {
    v.iter().map(|&x| x.into() * x.into()).sum::<f64>().sqrt()
}

fn dot<A: Copy + Into<f64>, B: Copy + Into<f64>>(a: &[A], b: &[B]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.into() * y.into()).sum()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub(crate) fn cosine_f32(
    row: &[f32],
    query: &[f64],
    query_norm: f64,
) -> Result<f64, EmbeddingError> {
    let nr = norm(row);
    if nr == 0.0 || query_norm == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot(row, query) / (nr * query_norm)).clamp(-1.0, 1.0))
}

/// Ranking order: similarity descending, then document id ascending.
fn rank(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then(a.doc_id.cmp(&b.doc_id))
}

/// Exact top-`k` cosine search over `candidate_ids` (duplicates ignored).
pub fn knn_search(
    matrix: &EmbeddingMatrix,
    candidate_ids: &[usize],
    query: &[f64],
    k: usize,
) -> Result<Vec<Neighbor>, EmbeddingError> {
    if candidate_ids.is_empty() {
        return Err(EmbeddingError::EmptyCandidates);
    }
    if query.len() != matrix.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: matrix.dim(),
            actual: query.len(),
        });
    }
    let qn = norm(query);
    let mut ids = candidate_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut scored = ids
        .into_iter()
        .map(|doc_id| {
            cosine_f32(matrix.row(doc_id), query, qn)
                .map(|similarity| Neighbor { doc_id, similarity })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let k = k.max(1).min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank);
    Ok(scored)
}

/// Element-wise mean of equally sized vectors.
pub fn mean_vector(vectors: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = vectors.first()?;
    let mut acc = vec![0.0; first.len()];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 0.7071067811865475).abs() < 1e-12);
        assert_eq!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(EmbeddingError::ZeroVector)
        );
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    fn random_matrix(n: usize, d: usize, seed: u64) -> (EmbeddingMatrix, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        (EmbeddingMatrix::from_rows(&rows).unwrap(), rng)
    }

    #[test]
    fn single_candidate() {
        let (m, _) = random_matrix(4, 3, 1);
        let q = [0.5, 0.1, -0.2];
        let out = knn_search(&m, &[0], &q, 5).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].doc_id, 0);
        let expected = cosine_similarity(&m.row_f64(0), &q).unwrap();
        assert!((out[0].similarity - expected).abs() < 1e-12);
    }

    #[test]
    fn exact_match_ranks_first() {
        let (m, _) = random_matrix(20, 8, 2);
        let q = m.row_f64(7);
        let all: Vec<usize> = (0..20).collect();
        let out = knn_search(&m, &all, &q, 3).unwrap();
        assert_eq!(out[0].doc_id, 7);
        assert!((out[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let rows = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![2.0, 0.0],
        ];
        let m = EmbeddingMatrix::from_rows(&rows).unwrap();
        let out = knn_search(&m, &[3, 2, 1, 0], &[1.0, 0.0], 3).unwrap();
        let ids: Vec<_> = out.iter().map(|n| n.doc_id).collect();
        assert_eq!(ids, vec![0, 2, 3]);
    }

    #[test]
    fn empty_candidates_is_an_error() {
        let (m, _) = random_matrix(2, 2, 3);
        assert_eq!(
            knn_search(&m, &[], &[1.0, 0.0], 1),
            Err(EmbeddingError::EmptyCandidates)
        );
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 6),
            b in prop::collection::vec(-10.0f64..10.0, 6),
            c in 0.001f64..1000.0,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            prop_assert!((cosine_similarity(&scaled, &b).unwrap() - ab).abs() <= 1e-9);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn knn_sorted_and_complete(seed in 0u64..1000, n in 1usize..40, k in 1usize..50) {
            let (m, mut rng) = random_matrix(n, 4, seed);
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ids: Vec<usize> = (0..n).collect();
            let out = knn_search(&m, &ids, &q, k).unwrap();
            prop_assert_eq!(out.len(), k.min(n));
            prop_assert!(out.windows(2).all(|w| w[0].similarity >= w[1].similarity));
            if k >= n {
                let mut seen: Vec<usize> = out.iter().map(|x| x.doc_id).collect();
                seen.sort_unstable();
                prop_assert_eq!(seen, ids);
            }
        }
    }
}
