use super::EvalError;
use crate::miner::TrainingTriplet;
use crate::vectorspace::{dot, EmbedItem, EmbeddingProvider};

/// Query, positive and K negative embeddings for one loss term.
#[derive(Debug, Clone, PartialEq)]
pub struct LossInputs {
    pub q: Vec<f32>,
    pub d_pos: Vec<f32>,
    pub d_negs: Vec<Vec<f32>>,
}

/// `-log(exp(s+) / (exp(s+) + Σ exp(s_i)))` on raw dot-product scores.
///
/// Written as `m + ln(exp(-m) + Σ exp(s_i - s+ - m))` with
/// `m = max(0, max_i(s_i - s+))`, which never overflows and keeps full
/// relative precision when the positive dominates.
pub fn mnr_loss_from_scores(pos: f64, negs: &[f64]) -> Result<f64, EvalError> {
    if negs.is_empty() {
        return Err(EvalError::NoNegatives);
    }
    let m = negs
        .iter()
        .map(|&s| s - pos)
        .fold(0.0f64, f64::max);
    let tail: f64 = negs.iter().map(|&s| (s - pos - m).exp()).sum();
    if m == 0.0 {
        Ok(tail.ln_1p())
    } else {
        Ok(m + ((-m).exp() + tail).ln())
    }
}

pub fn mnr_loss(inputs: &LossInputs) -> Result<f64, EvalError> {
    let d = inputs.q.len();
    let check = |v: &[f32]| {
        if v.len() != d {
            Err(EvalError::DimensionMismatch {
                expected: d,
                got: v.len(),
            })
        } else {
            Ok(())
        }
    };
    check(&inputs.d_pos)?;
    for n in &inputs.d_negs {
        check(n)?;
    }
    let pos = dot(&inputs.q, &inputs.d_pos);
    let negs: Vec<f64> = inputs.d_negs.iter().map(|n| dot(&inputs.q, n)).collect();
    mnr_loss_from_scores(pos, &negs)
}

/// Fraction of triplets whose positive is strictly closer to the query than
/// every negative (cosine on provider embeddings). Ties count as misses.
///
/// Item ids follow the mining convention: PMIDs for documents,
/// `query:<pmid>` for the query.
pub fn triplet_accuracy(
    triplets: &[TrainingTriplet],
    provider: &dyn EmbeddingProvider,
) -> Result<f64, EvalError> {
    if triplets.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for t in triplets {
        let qid = format!("query:{}", t.positive_pmid);
        let pid = t.positive_pmid.to_string();
        let nids: Vec<String> = t.negative_pmids.iter().map(|p| p.to_string()).collect();
        let mut items = vec![
            EmbedItem {
                id: &qid,
                text: &t.query,
            },
            EmbedItem {
                id: &pid,
                text: &t.positive,
            },
        ];
        items.extend(nids.iter().zip(&t.negatives).map(|(id, text)| EmbedItem { id, text }));
        let embs = provider
            .embed_batch(&items)
            .map_err(|e| EvalError::Provider(e.to_string()))?;
        let q = &embs[0];
        let pos = q.dot(&embs[1]).map_err(|e| EvalError::Provider(e.to_string()))?;
        let mut best_neg = f64::NEG_INFINITY;
        for n in &embs[2..] {
            best_neg = best_neg.max(q.dot(n).map_err(|e| EvalError::Provider(e.to_string()))?);
        }
        if pos > best_neg {
            correct += 1;
        }
    }
    Ok(correct as f64 / triplets.len() as f64)
}
