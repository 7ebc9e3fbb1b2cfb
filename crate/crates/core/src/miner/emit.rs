use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{MineError, MiningConfig, PreparedRecord, QueryProvider, TrainingTriplet};
use crate::neighborhood::{CitationRecord, CorpusError};
use crate::pubmed::Pmid;
use crate::vectorspace::{EmbedItem, EmbeddingProvider};

const CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("PMID {pmid}: {message}")]
    Provider { pmid: Pmid, message: String },
    #[error("PMID {pmid}: {source}")]
    Mine { pmid: Pmid, source: MineError },
    #[error(transparent)]
    Config(MineError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("triplet file line {line}: {message}")]
    Schema { line: usize, message: String },
}

/// Summary of a triplet set. Means and extrema are absent for an empty set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub total_negatives: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_negatives: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_negatives: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_negatives: Option<usize>,
    /// negatives-per-triplet → number of triplets.
    pub negatives_histogram: BTreeMap<usize, usize>,
}

impl DatasetStats {
    pub fn add(&mut self, t: &TrainingTriplet) {
        let n = t.negatives.len();
        self.records += 1;
        self.total_negatives += n;
        *self.negatives_histogram.entry(n).or_default() += 1;
        self.min_negatives = Some(self.min_negatives.map_or(n, |m| m.min(n)));
        self.max_negatives = Some(self.max_negatives.map_or(n, |m| m.max(n)));
        self.mean_negatives = Some(self.total_negatives as f64 / self.records as f64);
    }

    pub fn from_triplets<'a>(triplets: impl IntoIterator<Item = &'a TrainingTriplet>) -> Self {
        let mut s = DatasetStats::default();
        for t in triplets {
            s.add(t);
        }
        s
    }
}

pub(crate) fn query_id(pmid: Pmid) -> String {
    format!("query:{pmid}")
}

/// Generates the query and embeds pool + query for one record.
pub fn prepare_record<'a>(
    record: &'a CitationRecord,
    queries: &dyn QueryProvider,
    embedder: &dyn EmbeddingProvider,
) -> Result<PreparedRecord<'a>, EmitError> {
    let pmid = record.positive_pmid;
    let provider_err = |message: String| EmitError::Provider { pmid, message };
    let query = queries
        .generate(pmid, &record.positive_abstract)
        .map_err(|e| provider_err(e.to_string()))?;

    let ids: Vec<String> = record.candidates().map(|d| d.pmid.to_string()).collect();
    let qid = query_id(pmid);
    let mut items: Vec<EmbedItem<'_>> = record
        .candidates()
        .zip(&ids)
        .map(|(d, id)| EmbedItem {
            id,
            text: &d.abstract_text,
        })
        .collect();
    items.push(EmbedItem {
        id: &qid,
        text: &query,
    });
    let mut vectors = embedder
        .embed_batch(&items)
        .map_err(|e| provider_err(e.to_string()))?;
    if vectors.len() != items.len() {
        return Err(provider_err(format!(
            "provider returned {} vectors for {} inputs",
            vectors.len(),
            items.len()
        )));
    }
    let query_embedding = vectors.pop().unwrap();
    PreparedRecord::new(record, query.clone(), &vectors, &query_embedding)
        .map_err(|source| EmitError::Mine { pmid, source })
}

pub fn mine_record(
    record: &CitationRecord,
    queries: &dyn QueryProvider,
    embedder: &dyn EmbeddingProvider,
    cfg: &MiningConfig,
) -> Result<TrainingTriplet, EmitError> {
    let prepared = prepare_record(record, queries, embedder)?;
    prepared.mine(cfg).map_err(|source| EmitError::Mine {
        pmid: record.positive_pmid,
        source,
    })
}

/// Mines every record and writes one triplet per line to `out`, in input
/// order. Records are mined in parallel; each uses its own PMID-derived
/// RNG, so the output does not depend on scheduling or record order.
pub fn emit_triplets<I>(
    records: I,
    queries: &dyn QueryProvider,
    embedder: &dyn EmbeddingProvider,
    cfg: &MiningConfig,
    out: &Path,
) -> Result<DatasetStats, EmitError>
where
    I: IntoIterator<Item = Result<CitationRecord, CorpusError>>,
{
    cfg.validate().map_err(EmitError::Config)?;
    let mut w = BufWriter::new(File::create(out)?);
    let mut stats = DatasetStats::default();
    let mut chunk: Vec<CitationRecord> = Vec::with_capacity(CHUNK);
    let flush = |chunk: &mut Vec<CitationRecord>,
                     w: &mut BufWriter<File>,
                     stats: &mut DatasetStats|
     -> Result<(), EmitError> {
        let mined: Vec<Result<TrainingTriplet, EmitError>> = chunk
            .par_iter()
            .map(|r| mine_record(r, queries, embedder, cfg))
            .collect();
        for t in mined {
            let t = t?;
            serde_json::to_writer(&mut *w, &t).map_err(io::Error::from)?;
            w.write_all(b"\n")?;
            stats.add(&t);
        }
        chunk.clear();
        Ok(())
    };
    for rec in records {
        chunk.push(rec?);
        if chunk.len() == CHUNK {
            flush(&mut chunk, &mut w, &mut stats)?;
        }
    }
    flush(&mut chunk, &mut w, &mut stats)?;
    w.flush()?;
    Ok(stats)
}

pub fn write_triplets<'a>(
    path: &Path,
    triplets: impl IntoIterator<Item = &'a TrainingTriplet>,
) -> io::Result<usize> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut n = 0;
    for t in triplets {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

pub fn read_triplets(path: &Path) -> Result<Vec<TrainingTriplet>, EmitError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TrainingTriplet = serde_json::from_str(&line).map_err(|e| EmitError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        if t.negatives.len() != t.negative_pmids.len() {
            return Err(EmitError::Schema {
                line: i + 1,
                message: "negatives and negative_pmids differ in length".into(),
            });
        }
        out.push(t);
    }
    Ok(out)
}
