//! Traversal-parameter ablation: mines a corpus under each `(n_paths,
//! l_path)` setting of the standard grid and reports per-setting dataset
//! statistics next to empty retrieval-score columns (those need trained
//! models and are filled in elsewhere).

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::emit::{prepare_record, write_triplets, DatasetStats, EmitError};
use super::{MiningConfig, QueryProvider, TrainingTriplet};
use crate::neighborhood::CitationRecord;
use crate::vectorspace::EmbeddingProvider;

/// Benchmarks whose nDCG@10 columns the table reserves.
pub const SCORE_COLUMNS: [&str; 6] = ["NFC", "SCIDOCS", "SCIFACT", "ArguAna", "FIQA", "Average"];

/// `(group, n_paths, l_path)`: vary the walk count at length 3, then the
/// length at three walks.
pub const ABLATION_GRID: [(&str, usize, usize); 9] = [
    ("traversals", 1, 3),
    ("traversals", 2, 3),
    ("traversals", 4, 3),
    ("traversals", 5, 3),
    ("path_length", 3, 1),
    ("path_length", 3, 2),
    ("path_length", 3, 3),
    ("path_length", 3, 4),
    ("path_length", 3, 5),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub group: String,
    pub n_paths: usize,
    pub l_path: usize,
    pub stats: DatasetStats,
    /// One slot per entry of [`SCORE_COLUMNS`]; `None` until a trained
    /// model is evaluated.
    pub scores: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub k_sample: usize,
    pub seed: u64,
    pub add_random_negative: bool,
    pub score_columns: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| group | N_paths | L_path | records | mean negatives |");
        for c in SCORE_COLUMNS {
            write!(s, " {c} |").unwrap();
        }
        s.push('\n');
        s.push_str(&"|---".repeat(5 + SCORE_COLUMNS.len()));
        s.push_str("|\n");
        for r in &self.rows {
            let mean = r
                .stats
                .mean_negatives
                .map_or_else(|| "n/a".to_string(), |m| format!("{m:.2}"));
            write!(
                s,
                "| {} | {} | {} | {} | {} |",
                r.group, r.n_paths, r.l_path, r.stats.records, mean
            )
            .unwrap();
            for v in &r.scores {
                match v {
                    Some(x) => write!(s, " {x:.4} |").unwrap(),
                    None => s.push_str(" n/a |"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Runs the nine grid settings over `records`. `base` supplies `k_sample`,
/// the seed and the random-negative switch. Each record is embedded once and
/// reused across settings. When `out_dir` is given, each setting's triplets
/// are written to `triplets_np<N>_lp<L>.jsonl` there.
pub fn run_ablation(
    records: &[CitationRecord],
    queries: &dyn QueryProvider,
    embedder: &dyn EmbeddingProvider,
    base: &MiningConfig,
    out_dir: Option<&Path>,
) -> Result<AblationTable, EmitError> {
    base.validate().map_err(EmitError::Config)?;
    let prepared = records
        .par_iter()
        .map(|r| prepare_record(r, queries, embedder))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::with_capacity(ABLATION_GRID.len());
    for (group, n_paths, l_path) in ABLATION_GRID {
        let cfg = MiningConfig {
            n_paths,
            l_path,
            ..*base
        };
        let triplets = prepared
            .par_iter()
            .map(|p| {
                p.mine(&cfg).map_err(|source| EmitError::Mine {
                    pmid: p.record.positive_pmid,
                    source,
                })
            })
            .collect::<Result<Vec<TrainingTriplet>, _>>()?;
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            write_triplets(
                &dir.join(format!("triplets_np{n_paths}_lp{l_path}.jsonl")),
                &triplets,
            )?;
        }
        rows.push(AblationRow {
            group: group.to_string(),
            n_paths,
            l_path,
            stats: DatasetStats::from_triplets(&triplets),
            scores: vec![None; SCORE_COLUMNS.len()],
        });
    }
    Ok(AblationTable {
        k_sample: base.k_sample,
        seed: base.seed,
        add_random_negative: base.add_random_negative,
        score_columns: SCORE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows,
    })
}
