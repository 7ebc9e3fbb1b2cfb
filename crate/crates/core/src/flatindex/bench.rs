//! Latency protocol: for each batch size, time query encoding and top-k
//! retrieval separately per iteration, then report mean and nearest-rank
//! p99 in milliseconds for each phase and their sum.
//!
//! Batches below 1000 queries run 100 iterations, larger ones 10. Both
//! phases run on the calling thread so the timings stay interpretable.

use std::time::Instant;

use serde::Serialize;

use super::FlatIndex;
use crate::vectorspace::{normalize, EmbedItem, EmbeddingProvider, ProviderError, VectorTable};

/// Supplies one batch of encoded queries per call. Whatever work the
/// encoder does (tokenizing, model calls, copying) is billed to encoding.
pub trait QueryEncoder {
    fn encode(&mut self, batch_size: usize) -> Result<Vec<Vec<f32>>, ProviderError>;

    fn describe(&self) -> String;
}

/// Deterministic pseudo-random unit vectors; cost is linear in
/// `batch_size * dim`.
#[derive(Debug, Clone)]
pub struct StubEncoder {
    dim: usize,
    state: u64,
}

impl StubEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        StubEncoder { dim, state: seed }
    }

    fn next_u64(&mut self) -> u64 {
        // splitmix64
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

impl QueryEncoder for StubEncoder {
    fn encode(&mut self, batch_size: usize) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok((0..batch_size)
            .map(|_| {
                let raw: Vec<f32> = (0..self.dim)
                    .map(|_| (self.next_u64() >> 40) as f32 / (1u64 << 24) as f32 - 0.5)
                    .collect();
                normalize(&raw).unwrap_or_else(|_| {
                    let mut v = vec![0.0; self.dim];
                    v[0] = 1.0;
                    v
                })
            })
            .collect())
    }

    fn describe(&self) -> String {
        format!("stub encoder (dim={})", self.dim)
    }
}

/// Cycles through precomputed query vectors, normalizing each copy.
#[derive(Debug, Clone)]
pub struct PrecomputedQueries {
    table: VectorTable,
    cursor: usize,
}

impl PrecomputedQueries {
    pub fn new(table: VectorTable) -> Self {
        assert!(!table.is_empty(), "no query vectors");
        PrecomputedQueries { table, cursor: 0 }
    }
}

impl QueryEncoder for PrecomputedQueries {
    fn encode(&mut self, batch_size: usize) -> Result<Vec<Vec<f32>>, ProviderError> {
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let i = self.cursor % self.table.len();
            self.cursor += 1;
            let id = &self.table.ids()[i];
            out.push(normalize(self.table.row(i)).map_err(|source| ProviderError::Vector {
                id: id.clone(),
                source,
            })?);
        }
        Ok(out)
    }

    fn describe(&self) -> String {
        format!("precomputed vectors ({})", self.table.provider_id())
    }
}

/// Encodes query texts through an embedding provider, cycling the texts.
pub struct ProviderEncoder<'a> {
    provider: &'a dyn EmbeddingProvider,
    texts: Vec<String>,
    cursor: usize,
}

impl<'a> ProviderEncoder<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider, texts: Vec<String>) -> Self {
        assert!(!texts.is_empty(), "no query texts");
        ProviderEncoder {
            provider,
            texts,
            cursor: 0,
        }
    }
}

impl QueryEncoder for ProviderEncoder<'_> {
    fn encode(&mut self, batch_size: usize) -> Result<Vec<Vec<f32>>, ProviderError> {
        let ids: Vec<String> = (0..batch_size).map(|i| format!("q{i}")).collect();
        let items: Vec<EmbedItem<'_>> = ids
            .iter()
            .map(|id| {
                let text = &self.texts[self.cursor % self.texts.len()];
                self.cursor += 1;
                EmbedItem { id, text }
            })
            .collect();
        Ok(self
            .provider
            .embed_batch(&items)?
            .into_iter()
            .map(|e| e.values().to_vec())
            .collect())
    }

    fn describe(&self) -> String {
        format!("provider {}", self.provider.provider_id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    pub batch_sizes: Vec<usize>,
    pub k: usize,
    /// Overrides the per-batch protocol iteration counts.
    pub iterations: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            batch_sizes: vec![1, 10, 2000],
            k: 1000,
            iterations: None,
        }
    }
}

/// 100 iterations for small batches, 10 for batches of 1000 or more.
pub fn protocol_iterations(batch_size: usize) -> usize {
    if batch_size >= 1000 {
        10
    } else {
        100
    }
}

/// Nearest-rank percentile: the `ceil(p/100 * N)`-th smallest sample.
pub fn nearest_rank(samples: &[f64], p: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p * sorted.len() as f64) / 100.0).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub avg: f64,
    pub p99: f64,
}

impl PhaseSummary {
    fn of(samples: &[f64]) -> Self {
        PhaseSummary {
            avg: samples.iter().sum::<f64>() / samples.len() as f64,
            p99: nearest_rank(samples, 99.0).unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationTiming {
    pub encoding_ms: f64,
    pub retrieval_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyRow {
    pub batch_size: usize,
    pub iterations: usize,
    pub encoding_ms: PhaseSummary,
    pub retrieval_ms: PhaseSummary,
    pub total_ms: PhaseSummary,
    pub samples: Vec<IterationTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub index_size: usize,
    pub dim: usize,
    pub k: usize,
    pub encoder: String,
    pub hardware_note: String,
    pub rows: Vec<LatencyRow>,
}

fn hardware_note() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{}, {} logical CPUs, single-threaded phases, CPU exact inner-product search",
        std::env::consts::OS,
        std::env::consts::ARCH,
        cpus
    )
}

/// Runs the latency protocol against `index`.
pub fn bench(
    index: &FlatIndex,
    encoder: &mut dyn QueryEncoder,
    cfg: &BenchConfig,
) -> Result<LatencyReport, ProviderError> {
    let mut rows = Vec::with_capacity(cfg.batch_sizes.len());
    for &batch in &cfg.batch_sizes {
        let iterations = cfg.iterations.unwrap_or_else(|| protocol_iterations(batch));
        let mut samples = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let t0 = Instant::now();
            let queries = encoder.encode(batch)?;
            let encoding_ms = t0.elapsed().as_secs_f64() * 1e3;

            let t1 = Instant::now();
            let hits = index
                .search_sequential(&queries, cfg.k)
                .map_err(|e| ProviderError::Http(format!("query batch rejected by index: {e}")))?;
            let retrieval_ms = t1.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(hits);

            samples.push(IterationTiming {
                encoding_ms,
                retrieval_ms,
                total_ms: encoding_ms + retrieval_ms,
            });
        }
        let col = |f: fn(&IterationTiming) -> f64| samples.iter().map(f).collect::<Vec<_>>();
        rows.push(LatencyRow {
            batch_size: batch,
            iterations,
            encoding_ms: PhaseSummary::of(&col(|s| s.encoding_ms)),
            retrieval_ms: PhaseSummary::of(&col(|s| s.retrieval_ms)),
            total_ms: PhaseSummary::of(&col(|s| s.total_ms)),
            samples,
        });
    }
    Ok(LatencyReport {
        index_size: index.len(),
        dim: index.dim(),
        k: cfg.k,
        encoder: encoder.describe(),
        hardware_note: hardware_note(),
        rows,
    })
}
