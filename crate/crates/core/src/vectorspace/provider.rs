use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::vectorfile::{VectorFileError, VectorTable};
use super::{Embedding, VectorError};

/// One thing to embed: a stable id (a PMID, or `query:<pmid>` for a
/// generated query) plus its text. Id-keyed providers ignore the text;
/// model-backed providers ignore the id.
#[derive(Debug, Clone, Copy)]
pub struct EmbedItem<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("no vector for {0:?}")]
    MissingVector(String),
    #[error("{id}: {source}")]
    Vector { id: String, source: VectorError },
    #[error("provider returned {got} vectors for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("provider HTTP error: {0}")]
    Http(String),
    #[error(transparent)]
    File(#[from] VectorFileError),
}

/// Maps texts to unit embeddings. Output order and count match the input;
/// the same item always maps to the same vector.
pub trait EmbeddingProvider: Sync {
    fn dimension(&self) -> usize;

    fn provider_id(&self) -> &str;

    fn embed_batch(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Embedding>, ProviderError>;
}

/// Precomputed vectors looked up by id.
#[derive(Debug, Clone)]
pub struct FileProvider {
    table: VectorTable,
}

impl FileProvider {
    pub fn new(table: VectorTable) -> Self {
        FileProvider { table }
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        Ok(FileProvider::new(VectorTable::load(path)?))
    }

    pub fn table(&self) -> &VectorTable {
        &self.table
    }
}

impl EmbeddingProvider for FileProvider {
    fn dimension(&self) -> usize {
        self.table.dim()
    }

    fn provider_id(&self) -> &str {
        self.table.provider_id()
    }

    fn embed_batch(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Embedding>, ProviderError> {
        items
            .iter()
            .map(|it| {
                let raw = self
                    .table
                    .get(it.id)
                    .ok_or_else(|| ProviderError::MissingVector(it.id.to_string()))?;
                Embedding::new(it.id, raw).map_err(|source| ProviderError::Vector {
                    id: it.id.to_string(),
                    source,
                })
            })
            .collect()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f32>>,
}

/// Client for an embedding service speaking
/// `POST /embed {"texts": [...]}` → `{"dim": d, "vectors": [[...], ...]}`.
/// Vectors are re-normalized here whatever the server did.
pub struct HttpProvider {
    agent: ureq::Agent,
    url: String,
    dim: usize,
    provider_id: String,
}

impl HttpProvider {
    /// Connects and probes the service once to learn its dimension.
    pub fn connect(base_url: &str) -> Result<Self, ProviderError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        let url = format!("{}/embed", base_url.trim_end_matches('/'));
        let mut p = HttpProvider {
            agent,
            url,
            dim: 0,
            provider_id: format!("http:{}", base_url.trim_end_matches('/')),
        };
        let probe = p.call(&["probe"])?;
        p.dim = probe.dim;
        Ok(p)
    }

    fn call(&self, texts: &[&str]) -> Result<EmbedResponse, ProviderError> {
        let body = serde_json::to_vec(&EmbedRequest {
            texts: texts.to_vec(),
        })
        .map_err(|e| ProviderError::Http(e.to_string()))?;
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(&body[..])
            .map_err(|e| ProviderError::Http(e.to_string()))?;
        let text = resp
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_string()
            .map_err(|e| ProviderError::Http(e.to_string()))?;
        let parsed: EmbedResponse =
            serde_json::from_str(&text).map_err(|e| ProviderError::Http(e.to_string()))?;
        if parsed.vectors.len() != texts.len() {
            return Err(ProviderError::CountMismatch {
                expected: texts.len(),
                got: parsed.vectors.len(),
            });
        }
        Ok(parsed)
    }
}

impl EmbeddingProvider for HttpProvider {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn embed_batch(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Embedding>, ProviderError> {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let texts: Vec<&str> = items.iter().map(|i| i.text).collect();
        let resp = self.call(&texts)?;
        items
            .iter()
            .zip(resp.vectors)
            .map(|(it, v)| {
                let err = |source| ProviderError::Vector {
                    id: it.id.to_string(),
                    source,
                };
                if v.len() != self.dim || resp.dim != self.dim {
                    return Err(err(VectorError::DimensionMismatch {
                        expected: self.dim,
                        got: v.len(),
                    }));
                }
                Embedding::new(it.id, &v).map_err(err)
            })
            .collect()
    }
}
