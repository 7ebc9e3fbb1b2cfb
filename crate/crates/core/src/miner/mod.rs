//! Hard-negative mining by diverse stochastic traversal of a record's
//! semantic graph.
//!
//! For each record the candidate pool (1-hop then 2-hop abstracts) is
//! embedded and turned into a dense cosine graph. `n_paths` walks start at
//! the 1-hop documents closest to the generated query; each walk appends
//! up to `l_path` documents, stepping to a neighbor drawn from the
//! `k_sample` most similar unvisited nodes with probability proportional
//! to similarity. One visited set is shared by all walks. Optionally one
//! extra negative is drawn uniformly from whatever is left unvisited.

mod ablation;
mod emit;
mod query;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neighborhood::CitationRecord;
use crate::pubmed::Pmid;
use crate::vectorspace::{
    build_similarity_graph, query_similarities, Embedding, SimilarityGraph, VectorError,
};

pub use ablation::{run_ablation, AblationRow, AblationTable, ABLATION_GRID};
pub use emit::{
    emit_triplets, mine_record, prepare_record, read_triplets, write_triplets, DatasetStats,
    EmitError,
};
pub use query::{FileQueryProvider, HttpQueryProvider, QueryError, QueryProvider};

/// Floor applied to sampling weights so non-positive similarities keep a
/// tiny chance of selection.
pub const WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningConfig {
    /// Number of walks (distinct 1-hop start points).
    pub n_paths: usize,
    /// Maximum documents appended per walk.
    pub l_path: usize,
    /// Width of the candidate set sampled at each step.
    pub k_sample: usize,
    pub seed: u64,
    /// Append one uniformly random unvisited document at the end.
    pub add_random_negative: bool,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            n_paths: 3,
            l_path: 3,
            k_sample: 5,
            seed: 42,
            add_random_negative: true,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), MineError> {
        for (name, v) in [
            ("n_paths", self.n_paths),
            ("l_path", self.l_path),
            ("k_sample", self.k_sample),
        ] {
            if v == 0 {
                return Err(MineError::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Upper bound on negatives per triplet.
    pub fn max_negatives(&self) -> usize {
        self.n_paths * self.l_path + usize::from(self.add_random_negative)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingTriplet {
    pub query: String,
    pub positive_pmid: Pmid,
    pub positive: String,
    pub negative_pmids: Vec<Pmid>,
    pub negatives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MineError {
    #[error("no 1-hop documents to start from")]
    EmptyPool,
    #[error("invalid mining config: {0}")]
    Config(String),
    #[error("empty query")]
    EmptyQuery,
    #[error("expected {expected} pool embeddings, got {got}")]
    PoolSize { expected: usize, got: usize },
    #[error(transparent)]
    Vector(#[from] VectorError),
}

fn by_similarity_desc(sims: impl Fn(usize) -> f64) -> impl Fn(&usize, &usize) -> std::cmp::Ordering {
    move |&a, &b| sims(b).total_cmp(&sims(a)).then(a.cmp(&b))
}

/// The `n` 1-hop pool indices most similar to the query, best first; ties
/// go to the lower index.
pub fn find_top_n_starts(
    query_sims: &[f64],
    one_hop_count: usize,
    n: usize,
) -> Result<Vec<usize>, MineError> {
    if one_hop_count == 0 {
        return Err(MineError::EmptyPool);
    }
    let one_hop_count = one_hop_count.min(query_sims.len());
    let mut idx: Vec<usize> = (0..one_hop_count).collect();
    idx.sort_by(by_similarity_desc(|i| query_sims[i]));
    idx.truncate(n);
    Ok(idx)
}

/// Top `k` unvisited neighbors of `current`, most similar first, ties by
/// ascending index.
pub fn top_k_unvisited(
    current: usize,
    graph: &SimilarityGraph,
    visited: &[bool],
    k: usize,
) -> Vec<usize> {
    let row = graph.row(current);
    let mut cands: Vec<usize> = (0..graph.len())
        .filter(|&j| j != current && !visited[j])
        .collect();
    let cmp = by_similarity_desc(|j| f64::from(row[j]));
    if cands.len() > k {
        cands.select_nth_unstable_by(k - 1, &cmp);
        cands.truncate(k);
    }
    cands.sort_by(cmp);
    cands
}

/// Inverse-CDF draw over `weights` from a single uniform in [0, 1).
fn draw_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Next node of a walk, or `None` once every node is visited.
///
/// Candidates are the top `k` unvisited neighbors; one is drawn with
/// weight `max(sim, 1e-6)`, or uniformly when no candidate has positive
/// similarity.
pub fn sample_next<R: Rng + ?Sized>(
    current: usize,
    graph: &SimilarityGraph,
    visited: &[bool],
    k: usize,
    rng: &mut R,
) -> Option<usize> {
    let cands = top_k_unvisited(current, graph, visited, k);
    if cands.is_empty() {
        return None;
    }
    let row = graph.row(current);
    let sims: Vec<f64> = cands.iter().map(|&j| f64::from(row[j])).collect();
    let weights: Vec<f64> = if sims.iter().all(|&s| s <= 0.0) {
        vec![1.0; sims.len()]
    } else {
        sims.iter().map(|&s| s.max(WEIGHT_FLOOR)).collect()
    };
    Some(cands[draw_weighted(&weights, rng)])
}

/// Pool indices visited by the traversal, in visit order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Traversal {
    pub starts: Vec<usize>,
    /// Nodes appended by each walk (a walk whose start was already
    /// consumed is empty).
    pub paths: Vec<Vec<usize>>,
    pub random_pick: Option<usize>,
}

impl Traversal {
    /// Walk nodes then the random pick, deduplicated in order.
    pub fn negatives(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &i in self.paths.iter().flatten().chain(self.random_pick.iter()) {
            if !out.contains(&i) {
                out.push(i);
            }
        }
        out
    }
}

/// Runs the multi-start traversal on a prepared graph.
pub fn traverse<R: Rng + ?Sized>(
    graph: &SimilarityGraph,
    query_sims: &[f64],
    cfg: &MiningConfig,
    rng: &mut R,
) -> Result<Traversal, MineError> {
    cfg.validate()?;
    let starts = find_top_n_starts(query_sims, graph.one_hop_count(), cfg.n_paths)?;
    let mut visited = vec![false; graph.len()];
    let mut paths = Vec::with_capacity(starts.len());
    for &start in &starts {
        let mut path = Vec::new();
        let mut current = Some(start);
        for _ in 0..cfg.l_path {
            let Some(node) = current else { break };
            if visited[node] {
                break;
            }
            visited[node] = true;
            path.push(node);
            current = sample_next(node, graph, &visited, cfg.k_sample, rng);
        }
        paths.push(path);
    }
    let random_pick = if cfg.add_random_negative {
        let remaining: Vec<usize> = (0..graph.len()).filter(|&i| !visited[i]).collect();
        if remaining.is_empty() {
            None
        } else {
            let u: f64 = rng.gen();
            let at = ((u * remaining.len() as f64) as usize).min(remaining.len() - 1);
            Some(remaining[at])
        }
    } else {
        None
    };
    Ok(Traversal {
        starts,
        paths,
        random_pick,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-record seed: global seed XOR a fixed mix of the PMID, so each
/// record's draws are independent of processing order.
pub fn record_seed(seed: u64, pmid: Pmid) -> u64 {
    seed ^ splitmix64(pmid.get())
}

pub fn record_rng(seed: u64, pmid: Pmid) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(record_seed(seed, pmid))
}

/// A record with its graph and query similarities computed, ready to be
/// mined under any number of configurations.
#[derive(Debug, Clone)]
pub struct PreparedRecord<'a> {
    pub record: &'a CitationRecord,
    pub query: String,
    pub graph: SimilarityGraph,
    pub query_sims: Vec<f64>,
}

impl<'a> PreparedRecord<'a> {
    /// `pool` must be the record's candidates in pool order (1-hop first).
    pub fn new(
        record: &'a CitationRecord,
        query: impl Into<String>,
        pool: &[Embedding],
        query_embedding: &Embedding,
    ) -> Result<Self, MineError> {
        let query = query.into();
        if query.trim().is_empty() {
            return Err(MineError::EmptyQuery);
        }
        let expected = record.candidate_count();
        if pool.len() != expected {
            return Err(MineError::PoolSize {
                expected,
                got: pool.len(),
            });
        }
        if record.one_hop.is_empty() {
            return Err(MineError::EmptyPool);
        }
        let graph = build_similarity_graph(pool, record.one_hop.len())?;
        let query_sims = query_similarities(query_embedding, pool)?;
        Ok(PreparedRecord {
            record,
            query,
            graph,
            query_sims,
        })
    }

    pub fn traverse(&self, cfg: &MiningConfig) -> Result<Traversal, MineError> {
        let mut rng = record_rng(cfg.seed, self.record.positive_pmid);
        traverse(&self.graph, &self.query_sims, cfg, &mut rng)
    }

    pub fn mine(&self, cfg: &MiningConfig) -> Result<TrainingTriplet, MineError> {
        let negs = self.traverse(cfg)?.negatives();
        let docs: Vec<_> = self.record.candidates().collect();
        Ok(TrainingTriplet {
            query: self.query.clone(),
            positive_pmid: self.record.positive_pmid,
            positive: self.record.positive_abstract.clone(),
            negative_pmids: negs.iter().map(|&i| docs[i].pmid).collect(),
            negatives: negs.iter().map(|&i| docs[i].abstract_text.clone()).collect(),
        })
    }
}

/// Mines one record: graph over `pool` (the record's candidates in pool
/// order), walks seeded from `cfg.seed` and the record's PMID.
pub fn mine_hard_negatives(
    record: &CitationRecord,
    query: &str,
    pool: &[Embedding],
    query_embedding: &Embedding,
    cfg: &MiningConfig,
) -> Result<TrainingTriplet, MineError> {
    cfg.validate()?;
    PreparedRecord::new(record, query, pool, query_embedding)?.mine(cfg)
}
