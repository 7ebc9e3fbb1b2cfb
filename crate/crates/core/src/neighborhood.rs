//! 2-hop citation neighborhoods and their JSONL corpus format.
//!
//! A record holds a seed paper's abstract, the abstracts it cites (1-hop)
//! and the abstracts those cite (2-hop). A 1-hop paper whose abstract is
//! missing is dropped *before* expansion, so every 2-hop entry hangs off a
//! retained 1-hop paper.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::parallel_map;
use crate::pubmed::{CitationSource, FetchError, Pmid};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopDocument {
    pub pmid: Pmid,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CitationRecord {
    pub positive_pmid: Pmid,
    pub positive_abstract: String,
    pub one_hop: Vec<HopDocument>,
    pub two_hop: Vec<HopDocument>,
}

impl CitationRecord {
    /// 1-hop then 2-hop documents: the candidate pool, in pool order.
    pub fn candidates(&self) -> impl Iterator<Item = &HopDocument> {
        self.one_hop.iter().chain(self.two_hop.iter())
    }

    pub fn candidate_count(&self) -> usize {
        self.one_hop.len() + self.two_hop.len()
    }

    /// Checks the record invariants: non-empty texts, no PMID repeated
    /// within or across hop lists, seed absent from both lists.
    pub fn validate(&self) -> Result<(), String> {
        if self.positive_abstract.trim().is_empty() {
            return Err("positive_abstract is empty".into());
        }
        let mut seen = HashSet::new();
        seen.insert(self.positive_pmid);
        for doc in self.candidates() {
            if doc.abstract_text.trim().is_empty() {
                return Err(format!("abstract of {} is empty", doc.pmid));
            }
            if !seen.insert(doc.pmid) {
                return Err(format!("PMID {} appears more than once", doc.pmid));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodConfig {
    /// Minimum |one_hop ∪ two_hop| for a record to be kept.
    pub min_candidates: usize,
    /// Optional cap on new 2-hop PMIDs taken from each 1-hop parent.
    pub max_two_hop_per_parent: Option<usize>,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        NeighborhoodConfig {
            min_candidates: 10,
            max_two_hop_per_parent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    SeedAbstractMissing,
    SeedNotFound,
    InsufficientCandidates { found: usize, required: usize },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::SeedAbstractMissing => f.write_str("seed abstract missing"),
            RejectReason::SeedNotFound => f.write_str("seed not found"),
            RejectReason::InsufficientCandidates { found, required } => {
                write!(f, "insufficient candidates ({found} < {required})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Neighborhood {
    Built(CitationRecord),
    Rejected { seed: Pmid, reason: RejectReason },
}

#[derive(Debug, Error)]
pub enum NeighborhoodError {
    #[error("invalid neighborhood config: {0}")]
    Config(String),
    #[error(transparent)]
    Fetch(#[from] FetchError),
}

/// `Ok(None)` for documents that exist without an abstract, or that the API
/// does not know; anything else is a real failure.
fn optional_abstract<S: CitationSource + ?Sized>(
    source: &S,
    pmid: Pmid,
) -> Result<Option<String>, FetchError> {
    match source.abstract_text(pmid) {
        Ok(text) if !text.trim().is_empty() => Ok(Some(text)),
        Ok(_) | Err(FetchError::AbstractMissing(_)) | Err(FetchError::NotFound(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn optional_refs<S: CitationSource + ?Sized>(
    source: &S,
    pmid: Pmid,
) -> Result<Vec<Pmid>, FetchError> {
    match source.cited_pmids(pmid) {
        Ok(v) => Ok(v),
        Err(FetchError::NotFound(_)) => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

fn fetch_abstracts<S: CitationSource + ?Sized>(
    source: &S,
    pmids: &[Pmid],
) -> Result<Vec<HopDocument>, FetchError> {
    let fetched = parallel_map(pmids, source.parallelism(), |&p| optional_abstract(source, p));
    let mut docs = Vec::new();
    for (&pmid, res) in pmids.iter().zip(fetched) {
        if let Some(abstract_text) = res? {
            docs.push(HopDocument {
                pmid,
                abstract_text,
            });
        }
    }
    Ok(docs)
}

/// Crawl the 2-hop neighborhood of `seed`.
///
/// List order is first-encounter order across the API responses, so a
/// fixed universe always yields the same record.
pub fn build_neighborhood<S: CitationSource + ?Sized>(
    source: &S,
    seed: Pmid,
    cfg: &NeighborhoodConfig,
) -> Result<Neighborhood, NeighborhoodError> {
    if cfg.min_candidates == 0 {
        return Err(NeighborhoodError::Config("min_candidates must be >= 1".into()));
    }
    let positive_abstract = match source.abstract_text(seed) {
        Ok(t) if !t.trim().is_empty() => t,
        Ok(_) | Err(FetchError::AbstractMissing(_)) => {
            return Ok(Neighborhood::Rejected {
                seed,
                reason: RejectReason::SeedAbstractMissing,
            })
        }
        Err(FetchError::NotFound(_)) => {
            return Ok(Neighborhood::Rejected {
                seed,
                reason: RejectReason::SeedNotFound,
            })
        }
        Err(e) => return Err(e.into()),
    };

    // Every PMID that has been claimed by a list (or is the seed) goes here;
    // hop-1 claims happen first, so overlaps stay in one_hop.
    let mut claimed: HashSet<Pmid> = HashSet::new();
    claimed.insert(seed);

    let mut first_hop_ids = Vec::new();
    for p in optional_refs(source, seed)? {
        if claimed.insert(p) {
            first_hop_ids.push(p);
        }
    }
    let one_hop = fetch_abstracts(source, &first_hop_ids)?;

    let parents: Vec<Pmid> = one_hop.iter().map(|d| d.pmid).collect();
    let parent_refs = parallel_map(&parents, source.parallelism(), |&p| optional_refs(source, p));
    let mut second_hop_ids = Vec::new();
    for refs in parent_refs {
        let mut taken = 0usize;
        for p in refs? {
            if cfg.max_two_hop_per_parent.is_some_and(|cap| taken >= cap) {
                break;
            }
            if claimed.insert(p) {
                second_hop_ids.push(p);
                taken += 1;
            }
        }
    }
    let two_hop = fetch_abstracts(source, &second_hop_ids)?;

    let found = one_hop.len() + two_hop.len();
    if found < cfg.min_candidates {
        return Ok(Neighborhood::Rejected {
            seed,
            reason: RejectReason::InsufficientCandidates {
                found,
                required: cfg.min_candidates,
            },
        });
    }
    Ok(Neighborhood::Built(CitationRecord {
        positive_pmid: seed,
        positive_abstract,
        one_hop,
        two_hop,
    }))
}

/// In-memory citation universe, for tests and offline fixtures.
#[derive(Debug, Clone, Default)]
pub struct StaticSource {
    pub references: HashMap<Pmid, Vec<Pmid>>,
    pub abstracts: HashMap<Pmid, String>,
}

impl StaticSource {
    pub fn cite(&mut self, from: Pmid, to: &[Pmid]) -> &mut Self {
        self.references.insert(from, to.to_vec());
        self
    }

    pub fn with_abstract(&mut self, pmid: Pmid, text: impl Into<String>) -> &mut Self {
        self.abstracts.insert(pmid, text.into());
        self
    }
}

impl CitationSource for StaticSource {
    fn cited_pmids(&self, pmid: Pmid) -> Result<Vec<Pmid>, FetchError> {
        Ok(self.references.get(&pmid).cloned().unwrap_or_default())
    }

    fn abstract_text(&self, pmid: Pmid) -> Result<String, FetchError> {
        self.abstracts
            .get(&pmid)
            .cloned()
            .ok_or(FetchError::AbstractMissing(pmid))
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

/// Append records as JSON lines; returns how many were written.
///
/// The file is opened in append mode, so successive calls extend an
/// existing corpus without rewriting it.
pub fn write_corpus<'a, I>(path: &Path, records: I) -> Result<usize, CorpusError>
where
    I: IntoIterator<Item = &'a CitationRecord>,
{
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    let mut n = 0;
    for rec in records {
        serde_json::to_writer(&mut w, rec).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

/// Streaming reader over a corpus file. Blank lines are skipped; any
/// schema violation is reported with its 1-based line number.
pub fn read_corpus(
    path: &Path,
) -> Result<impl Iterator<Item = Result<CitationRecord, CorpusError>>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    Ok(reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let line_no = i + 1;
            match line {
                Err(e) => Some(Err(CorpusError::Io(e))),
                Ok(l) if l.trim().is_empty() => None,
                Ok(l) => Some(parse_record(&l, line_no)),
            }
        }))
}

pub fn read_corpus_vec(path: &Path) -> Result<Vec<CitationRecord>, CorpusError> {
    read_corpus(path)?.collect()
}

fn parse_record(line: &str, line_no: usize) -> Result<CitationRecord, CorpusError> {
    let rec: CitationRecord = serde_json::from_str(line).map_err(|e| CorpusError::Schema {
        line: line_no,
        message: e.to_string(),
    })?;
    rec.validate().map_err(|message| CorpusError::Schema {
        line: line_no,
        message,
    })?;
    Ok(rec)
}
