//! Unit embeddings and the dense cosine graph over a candidate pool.

mod provider;
mod vectorfile;

use rayon::prelude::*;
use thiserror::Error;

pub use provider::{
    EmbedItem, EmbeddingProvider, FileProvider, HttpProvider, ProviderError,
};
pub use vectorfile::{VectorFileError, VectorTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VectorError {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("non-finite vector component")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty pool")]
    EmptyPool,
    #[error("one_hop_count {one_hop_count} exceeds pool size {n}")]
    OneHopCount { one_hop_count: usize, n: usize },
}

/// A unit-length vector tagged with the document it encodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub doc_id: String,
    values: Vec<f32>,
}

impl Embedding {
    /// Normalizes `raw` to unit length.
    pub fn new(doc_id: impl Into<String>, raw: &[f32]) -> Result<Self, VectorError> {
        Ok(Embedding {
            doc_id: doc_id.into(),
            values: normalize(raw)?,
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64, VectorError> {
        check_dim(self.dim(), other.dim())?;
        Ok(dot(&self.values, &other.values))
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), VectorError> {
    if expected != got {
        return Err(VectorError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Dot product accumulated in f64.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// `raw / ||raw||₂`.
pub fn normalize(raw: &[f32]) -> Result<Vec<f32>, VectorError> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(VectorError::NonFinite);
    }
    let norm = dot(raw, raw).sqrt();
    if norm == 0.0 {
        return Err(VectorError::ZeroVector);
    }
    Ok(raw.iter().map(|&v| (f64::from(v) / norm) as f32).collect())
}

/// Complete pairwise cosine matrix over a candidate pool. The first
/// `one_hop_count` pool entries are 1-hop documents.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    n: usize,
    matrix: Vec<f32>,
    pool_ids: Vec<String>,
    one_hop_count: usize,
}

impl SimilarityGraph {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn one_hop_count(&self) -> usize {
        self.one_hop_count
    }

    pub fn pool_ids(&self) -> &[String] {
        &self.pool_ids
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.matrix[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.n..(i + 1) * self.n]
    }

    /// Builds a graph from an explicit row-major matrix; used for
    /// hand-specified graphs. The matrix must be square and symmetric.
    pub fn from_matrix(
        rows: Vec<Vec<f32>>,
        pool_ids: Vec<String>,
        one_hop_count: usize,
    ) -> Result<Self, VectorError> {
        let n = rows.len();
        if n == 0 {
            return Err(VectorError::EmptyPool);
        }
        check_dim(n, pool_ids.len())?;
        if one_hop_count > n {
            return Err(VectorError::OneHopCount { one_hop_count, n });
        }
        let mut matrix = Vec::with_capacity(n * n);
        for r in &rows {
            check_dim(n, r.len())?;
            matrix.extend_from_slice(r);
        }
        Ok(SimilarityGraph {
            n,
            matrix,
            pool_ids,
            one_hop_count,
        })
    }
}

/// `matrix[i][j] = cos(pool[i], pool[j])`. Rows are computed in parallel;
/// only the upper triangle is evaluated and mirrored, so the result is
/// exactly symmetric.
pub fn build_similarity_graph(
    pool: &[Embedding],
    one_hop_count: usize,
) -> Result<SimilarityGraph, VectorError> {
    let n = pool.len();
    if n == 0 {
        return Err(VectorError::EmptyPool);
    }
    if one_hop_count > n {
        return Err(VectorError::OneHopCount { one_hop_count, n });
    }
    let d = pool[0].dim();
    for e in pool {
        check_dim(d, e.dim())?;
    }
    let norms: Vec<f64> = pool.iter().map(|e| dot(&e.values, &e.values).sqrt()).collect();
    let upper: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    if j == i {
                        return 1.0;
                    }
                    let c = dot(&pool[i].values, &pool[j].values) / (norms[i] * norms[j]);
                    c.clamp(-1.0, 1.0) as f32
                })
                .collect()
        })
        .collect();
    let mut matrix = vec![0f32; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            matrix[i * n + j] = v;
            matrix[j * n + i] = v;
        }
    }
    Ok(SimilarityGraph {
        n,
        matrix,
        pool_ids: pool.iter().map(|e| e.doc_id.clone()).collect(),
        one_hop_count,
    })
}

/// Query-to-pool similarity for every pool entry.
pub fn query_similarities(query: &Embedding, pool: &[Embedding]) -> Result<Vec<f64>, VectorError> {
    pool.iter().map(|e| query.dot(e)).collect()
}
