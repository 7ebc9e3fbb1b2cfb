//! Ranking metrics over qrels/run files, the multiple-negatives ranking
//! loss, and triplet accuracy.

mod loss;
mod trec;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

pub use loss::{mnr_loss, mnr_loss_from_scores, triplet_accuracy, LossInputs};
pub use trec::{Qrels, RunRanking};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no query has a positive relevance judgment")]
    NoJudgedQueries,
    #[error("k must be >= 1")]
    InvalidCutoff,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invalid run: {0}")]
    InvalidRun(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("loss needs at least one negative")]
    NoNegatives,
    #[error("provider error: {0}")]
    Provider(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ndcg,
    Success,
}

/// Mean over evaluated queries plus the per-query breakdown. Queries with
/// no positive judgment are left out of the mean and counted in `skipped`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub k: usize,
    pub mean: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub per_query: BTreeMap<String, f64>,
}

fn evaluate<F>(
    metric: Metric,
    run: &RunRanking,
    qrels: &Qrels,
    k: usize,
    score: F,
) -> Result<MetricReport, EvalError>
where
    F: Fn(&[(String, f64)], &BTreeMap<String, u32>) -> f64,
{
    if k == 0 {
        return Err(EvalError::InvalidCutoff);
    }
    let mut per_query = BTreeMap::new();
    let mut skipped = 0;
    for (qid, judged) in qrels.queries() {
        if !judged.values().any(|&g| g > 0) {
            skipped += 1;
            continue;
        }
        let ranked = run.ranked(qid).unwrap_or(&[]);
        let top = &ranked[..ranked.len().min(k)];
        per_query.insert(qid.clone(), score(top, judged));
    }
    if per_query.is_empty() {
        return Err(EvalError::NoJudgedQueries);
    }
    let mean = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok(MetricReport {
        metric,
        k,
        mean,
        evaluated: per_query.len(),
        skipped,
        per_query,
    })
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

/// nDCG@k with exponential gain `2^rel - 1` and `log2(rank + 1)` discount.
/// Judged queries missing from the run score 0.
pub fn ndcg_at_k(run: &RunRanking, qrels: &Qrels, k: usize) -> Result<MetricReport, EvalError> {
    evaluate(Metric::Ndcg, run, qrels, k, |top, judged| {
        let dcg: f64 = top
            .iter()
            .enumerate()
            .map(|(i, (doc, _))| {
                let g = judged.get(doc).copied().unwrap_or(0);
                gain(g) / ((i + 2) as f64).log2()
            })
            .sum();
        let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &g)| gain(g) / ((i + 2) as f64).log2())
            .sum();
        dcg / idcg
    })
}

/// Success@k: 1 if any document graded ≥ 1 is in the top k.
pub fn success_at_k(run: &RunRanking, qrels: &Qrels, k: usize) -> Result<MetricReport, EvalError> {
    evaluate(Metric::Success, run, qrels, k, |top, judged| {
        let hit = top
            .iter()
            .any(|(doc, _)| judged.get(doc).is_some_and(|&g| g >= 1));
        if hit {
            1.0
        } else {
            0.0
        }
    })
}
