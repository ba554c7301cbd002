use super::EmbeddingError;

/// Row-major `N × D` matrix of document embeddings. Row `i` belongs to
/// document id `i`. Values are held at single precision, which is also the
/// on-disk precision, so a saved and reloaded matrix is bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, EmbeddingError> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or(EmbeddingError::EmptyInput)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            for &x in row {
                let x = x as f32;
                if !x.is_finite() {
                    return Err(EmbeddingError::NonFinite);
                }
                data.push(x);
            }
        }
        Ok(Self {
            rows: rows.len(),
            dim,
            data,
        })
    }

    pub fn from_raw(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self, EmbeddingError> {
        if data.len() != rows * dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: rows * dim,
                actual: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&x| x as f64).collect()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Arithmetic mean of the given rows, accumulated in double precision.
    pub fn mean_of(&self, ids: &[usize]) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.dim];
        for &i in ids {
            for (a, &x) in acc.iter_mut().zip(self.row(i)) {
                *a += x as f64;
            }
        }
        let n = ids.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}
