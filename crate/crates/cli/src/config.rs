//! Flag/TOML configuration. Each subcommand has one struct of optional
//! fields that doubles as its clap argument group and its TOML section;
//! flags are overlaid on the file, then defaults fill what is left.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

macro_rules! overlay {
    ($t:ident { $($f:ident),* $(,)? }) => {
        impl $t {
            /// Fields set in `self` win over those in `base`.
            pub fn overlay(self, base: Option<$t>) -> $t {
                let base = base.unwrap_or_default();
                $t { $($f: self.$f.or(base.$f)),* }
            }
        }
    };
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub workers: Option<usize>,
    pub crawl: Option<CrawlArgs>,
    pub mine: Option<MineArgs>,
    pub eval: Option<EvalArgs>,
    pub bench: Option<BenchArgs>,
    pub stats: Option<StatsArgs>,
    pub ablate: Option<AblateArgs>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::config("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            CliError::config("config", e.message().to_string())
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrawlArgs {
    /// Newline-separated seed PMIDs
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// Output corpus (JSONL, overwritten)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Response cache directory [default: $CITE_MINE_CACHE_DIR, else no cache]
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// E-utilities base URL [default: https://eutils.ncbi.nlm.nih.gov/entrez/eutils]
    #[arg(long)]
    pub base_url: Option<String>,
    /// Requests per second [default: 3, or 10 when NCBI_API_KEY is set]
    #[arg(long)]
    pub rate: Option<f64>,
    /// Retries after a 429/5xx/network failure [default: 3]
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Base of the exponential backoff, in milliseconds [default: 500]
    #[arg(long)]
    pub backoff_ms: Option<u64>,
    /// Simultaneous in-flight requests [default: 4]
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Minimum 1-hop + 2-hop candidates for a record to be kept [default: 10]
    #[arg(long)]
    pub min_candidates: Option<usize>,
    /// Cap on new 2-hop documents per 1-hop parent [default: unlimited]
    #[arg(long)]
    pub max_two_hop_per_parent: Option<usize>,
}
overlay!(CrawlArgs {
    seeds, out, cache_dir, base_url, rate, max_retries, backoff_ms, concurrency,
    min_candidates, max_two_hop_per_parent,
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MineArgs {
    /// Corpus JSONL produced by `crawl`
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Precomputed vector file (documents by PMID, queries as query:<pmid>)
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Embedding service base URL, used when --vectors is absent
    #[arg(long)]
    pub embed_url: Option<String>,
    /// Query TSV (pmid<TAB>query)
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Query-generation service base URL, used when --queries is absent
    #[arg(long)]
    pub query_url: Option<String>,
    /// Output triplets (JSONL)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Walks per record [default: 3]
    #[arg(long)]
    pub n_paths: Option<usize>,
    /// Documents per walk [default: 3]
    #[arg(long)]
    pub l_path: Option<usize>,
    /// Candidates sampled from at each step [default: 5]
    #[arg(long)]
    pub k_sample: Option<usize>,
    /// RNG seed [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Append one random unvisited negative [default: true]
    #[arg(long, value_name = "BOOL")]
    pub add_random_negative: Option<bool>,
}
overlay!(MineArgs {
    corpus, vectors, embed_url, queries, query_url, out, n_paths, l_path, k_sample, seed,
    add_random_negative,
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    /// Qrels file; repeat together with --run to average over datasets
    #[arg(long)]
    pub qrels: Option<Vec<PathBuf>>,
    /// Run file, paired positionally with --qrels
    #[arg(long)]
    pub run: Option<Vec<PathBuf>>,
    /// ndcg@K, success@K or triplet-accuracy [default: ndcg@10]
    #[arg(long)]
    pub metric: Option<String>,
    /// Triplets JSONL (triplet-accuracy only)
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    /// Vector file covering the triplets (triplet-accuracy only)
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Write the report here as well as to stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(EvalArgs { qrels, run, metric, triplets, vectors, out });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchArgs {
    /// Vector file to index
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Precomputed query vectors [default: deterministic stub encoder]
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Index this many random unit vectors instead of --vectors
    #[arg(long)]
    pub random_index: Option<usize>,
    /// Dimension for --random-index and the stub encoder [default: 32]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Results per query [default: 1000]
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated batch sizes [default: 1,10,2000]
    #[arg(long, value_delimiter = ',')]
    pub batches: Option<Vec<usize>>,
    /// Iterations per batch size [default: 100 below 1000 queries, else 10]
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Seed for the stub encoder and random index [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(BenchArgs { vectors, queries, random_index, dim, k, batches, iterations, seed, out });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsArgs {
    /// Corpus JSONL to summarize
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Triplets JSONL to summarize
    #[arg(long)]
    pub triplets: Option<PathBuf>,
}
overlay!(StatsArgs { corpus, triplets });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateArgs {
    /// Corpus JSONL produced by `crawl`
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Precomputed vector file
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Embedding service base URL, used when --vectors is absent
    #[arg(long)]
    pub embed_url: Option<String>,
    /// Query TSV (pmid<TAB>query)
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Query-generation service base URL, used when --queries is absent
    #[arg(long)]
    pub query_url: Option<String>,
    /// Candidates sampled from at each step [default: 5]
    #[arg(long)]
    pub k_sample: Option<usize>,
    /// RNG seed [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Append one random unvisited negative [default: true]
    #[arg(long, value_name = "BOOL")]
    pub add_random_negative: Option<bool>,
    /// Table JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the table as Markdown
    #[arg(long)]
    pub markdown: Option<PathBuf>,
    /// Write each setting's triplets into this directory
    #[arg(long)]
    pub triplets_dir: Option<PathBuf>,
}
overlay!(AblateArgs {
    corpus, vectors, embed_url, queries, query_url, k_sample, seed, add_random_negative, out,
    markdown, triplets_dir,
});

/// The value of a required option, or a config error naming it.
pub fn required<T: Clone>(stage: &'static str, name: &str, v: &Option<T>) -> Result<T, CliError> {
    v.clone()
        .ok_or_else(|| CliError::config(stage, format!("missing required option --{name}")))
}

/// Input paths must exist before a stage starts.
pub fn existing(stage: &'static str, p: &Path) -> Result<(), CliError> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::config(stage, format!("{} does not exist", p.display())))
    }
}
