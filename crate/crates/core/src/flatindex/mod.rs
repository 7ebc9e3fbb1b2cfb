//! Exact inner-product index: every query is scored against every stored
//! vector; a bounded heap keeps the best `k`.

mod bench;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::vectorspace::dot;

pub use bench::{
    bench, nearest_rank, protocol_iterations, BenchConfig, IterationTiming, LatencyReport,
    LatencyRow, PhaseSummary, PrecomputedQueries, ProviderEncoder, QueryEncoder, StubEncoder,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("cannot build an index from zero vectors")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0} ids for {1} vectors")]
    IdCount(usize, usize),
    #[error("k must be >= 1")]
    InvalidK,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub doc_id: String,
    pub score: f32,
}

/// Vectors stored verbatim, row-major.
#[derive(Debug, Clone)]
pub struct FlatIndex {
    dim: usize,
    vectors: Vec<f32>,
    doc_ids: Vec<String>,
}

#[derive(Clone, Copy)]
struct Ranked<'a> {
    score: f32,
    id: &'a str,
    row: usize,
}

impl Ranked<'_> {
    /// Greater means better: higher score, then smaller id.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.id.cmp(self.id))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked<'_> {}
impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

impl FlatIndex {
    pub fn build<V: AsRef<[f32]>>(vectors: &[V], ids: Vec<String>) -> Result<Self, IndexError> {
        if vectors.is_empty() {
            return Err(IndexError::Empty);
        }
        if ids.len() != vectors.len() {
            return Err(IndexError::IdCount(ids.len(), vectors.len()));
        }
        let dim = vectors[0].as_ref().len();
        let mut flat = Vec::with_capacity(dim * vectors.len());
        for v in vectors {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            flat.extend_from_slice(v);
        }
        Ok(FlatIndex {
            dim,
            vectors: flat,
            doc_ids: ids,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn check<V: AsRef<[f32]>>(&self, queries: &[V], k: usize) -> Result<(), IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        for q in queries {
            if q.as_ref().len() != self.dim {
                return Err(IndexError::DimensionMismatch {
                    expected: self.dim,
                    got: q.as_ref().len(),
                });
            }
        }
        Ok(())
    }

    fn search_one(&self, q: &[f32], k: usize) -> Vec<Hit> {
        let k = k.min(self.len());
        let mut heap: BinaryHeap<Reverse<Ranked<'_>>> = BinaryHeap::with_capacity(k + 1);
        for (row, id) in self.doc_ids.iter().enumerate() {
            let cand = Ranked {
                score: dot(q, self.vector(row)) as f32,
                id,
                row,
            };
            if heap.len() < k {
                heap.push(Reverse(cand));
            } else if let Some(Reverse(worst)) = heap.peek() {
                if cand > *worst {
                    heap.pop();
                    heap.push(Reverse(cand));
                }
            }
        }
        let mut best: Vec<Ranked<'_>> = heap.into_iter().map(|r| r.0).collect();
        best.sort_by(|a, b| b.cmp(a));
        best.into_iter()
            .map(|r| Hit {
                doc_id: self.doc_ids[r.row].clone(),
                score: r.score,
            })
            .collect()
    }

    /// Exact top-`min(k, n)` by inner product for each query, best first,
    /// ties by doc id. Queries are processed in parallel.
    pub fn search<V: AsRef<[f32]> + Sync>(
        &self,
        queries: &[V],
        k: usize,
    ) -> Result<Vec<Vec<Hit>>, IndexError> {
        self.check(queries, k)?;
        Ok(queries
            .par_iter()
            .map(|q| self.search_one(q.as_ref(), k))
            .collect())
    }

    /// Same as [`search`](Self::search) on the calling thread only.
    pub fn search_sequential<V: AsRef<[f32]>>(
        &self,
        queries: &[V],
        k: usize,
    ) -> Result<Vec<Vec<Hit>>, IndexError> {
        self.check(queries, k)?;
        Ok(queries
            .iter()
            .map(|q| self.search_one(q.as_ref(), k))
            .collect())
    }
}
