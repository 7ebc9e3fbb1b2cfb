use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pubmed::Pmid;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("no query for PMID {0}")]
    Missing(Pmid),
    #[error("empty query generated for PMID {0}")]
    Empty(Pmid),
    #[error("query file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("query service error: {0}")]
    Http(String),
}

/// Produces the synthetic search query for a positive abstract.
pub trait QueryProvider: Sync {
    fn generate(&self, pmid: Pmid, positive_abstract: &str) -> Result<String, QueryError>;
}

/// Precomputed queries from a `pmid<TAB>query` file.
#[derive(Debug, Clone, Default)]
pub struct FileQueryProvider {
    queries: HashMap<Pmid, String>,
}

impl FileQueryProvider {
    pub fn from_map(queries: HashMap<Pmid, String>) -> Self {
        FileQueryProvider { queries }
    }

    pub fn load(path: &Path) -> Result<Self, QueryError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, QueryError> {
        let mut queries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (pmid, query) = line.split_once('\t').ok_or_else(|| QueryError::Format {
                line: line_no,
                message: "expected pmid<TAB>query".into(),
            })?;
            let pmid: Pmid = pmid.parse().map_err(|e| QueryError::Format {
                line: line_no,
                message: format!("{e}"),
            })?;
            let query = query.trim();
            if query.is_empty() {
                return Err(QueryError::Format {
                    line: line_no,
                    message: format!("empty query for {pmid}"),
                });
            }
            if queries.insert(pmid, query.to_string()).is_some() {
                return Err(QueryError::Format {
                    line: line_no,
                    message: format!("duplicate PMID {pmid}"),
                });
            }
        }
        Ok(FileQueryProvider { queries })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

impl QueryProvider for FileQueryProvider {
    fn generate(&self, pmid: Pmid, _positive_abstract: &str) -> Result<String, QueryError> {
        self.queries.get(&pmid).cloned().ok_or(QueryError::Missing(pmid))
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct GenerateResponse {
    query: String,
}

/// Client for `POST /generate_query {"text"}` → `{"query"}`.
pub struct HttpQueryProvider {
    agent: ureq::Agent,
    url: String,
}

impl HttpQueryProvider {
    pub fn new(base_url: &str) -> Self {
        HttpQueryProvider {
            agent: ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(300)))
                .build()
                .into(),
            url: format!("{}/generate_query", base_url.trim_end_matches('/')),
        }
    }
}

impl QueryProvider for HttpQueryProvider {
    fn generate(&self, pmid: Pmid, positive_abstract: &str) -> Result<String, QueryError> {
        let body = serde_json::to_vec(&GenerateRequest {
            text: positive_abstract,
        })
        .map_err(|e| QueryError::Http(e.to_string()))?;
        let text = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(&body[..])
            .map_err(|e| QueryError::Http(e.to_string()))?
            .body_mut()
            .read_to_string()
            .map_err(|e| QueryError::Http(e.to_string()))?;
        let resp: GenerateResponse =
            serde_json::from_str(&text).map_err(|e| QueryError::Http(e.to_string()))?;
        let q = resp.query.trim().to_string();
        if q.is_empty() {
            return Err(QueryError::Empty(pmid));
        }
        Ok(q)
    }
}
