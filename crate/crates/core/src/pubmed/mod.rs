//! NCBI E-utilities client: resolves a PMID to its outbound reference list
//! (elink, `pubmed_pubmed_refs`) and to its plain-text abstract (efetch).
//!
//! Requests go through a shared rate limiter and an on-disk cache of raw
//! payloads, so a crawl can be re-parsed without touching the network.
//! NCBI allows 3 requests/second without an API key and 10 with one.

mod cache;
mod client;
mod parse;
mod ratelimit;
mod transport;

use std::fmt;
use std::num::NonZeroU64;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheEntry, CacheKind, DiskCache};
pub use client::{PubmedClient, DEFAULT_BASE_URL};
pub use parse::{parse_abstract, parse_cited_pmids};
pub use ratelimit::{Clock, MockClock, RateLimiter, SystemClock};
pub use transport::{HttpResponse, Transport, TransportError, UreqTransport};

/// Environment variable holding the optional NCBI API key.
pub const API_KEY_ENV: &str = "NCBI_API_KEY";
/// Environment variable overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "CITE_MINE_CACHE_DIR";

/// PubMed record identifier. Always positive; displays without leading zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Pmid(NonZeroU64);

impl Pmid {
    pub fn new(value: u64) -> Result<Self, InvalidPmid> {
        NonZeroU64::new(value)
            .map(Pmid)
            .ok_or_else(|| InvalidPmid(value.to_string()))
    }

    pub fn get(self) -> u64 {
        self.0.get()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid PMID {0:?}")]
pub struct InvalidPmid(pub String);

impl TryFrom<u64> for Pmid {
    type Error = InvalidPmid;

    fn try_from(value: u64) -> Result<Self, Self::Error> {
        Pmid::new(value)
    }
}

impl From<Pmid> for u64 {
    fn from(p: Pmid) -> u64 {
        p.get()
    }
}

impl FromStr for Pmid {
    type Err = InvalidPmid;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
            return Err(InvalidPmid(s.to_string()));
        }
        let v: u64 = t.parse().map_err(|_| InvalidPmid(s.to_string()))?;
        Pmid::new(v).map_err(|_| InvalidPmid(s.to_string()))
    }
}

impl fmt::Display for Pmid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Request pacing, retry and parallelism settings for the client.
#[derive(Debug, Clone, PartialEq)]
pub struct FetchPolicy {
    pub max_requests_per_second: f64,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub api_key: Option<String>,
    /// Simultaneous in-flight requests.
    pub concurrency_limit: usize,
}

impl FetchPolicy {
    pub const RATE_WITHOUT_KEY: f64 = 3.0;
    pub const RATE_WITH_KEY: f64 = 10.0;

    /// Default policy for the given key: 10 req/s with a key, 3 without.
    pub fn with_api_key(api_key: Option<String>) -> Self {
        let rate = if api_key.is_some() {
            Self::RATE_WITH_KEY
        } else {
            Self::RATE_WITHOUT_KEY
        };
        FetchPolicy {
            max_requests_per_second: rate,
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            api_key,
            concurrency_limit: 4,
        }
    }

    /// Default policy, picking up `NCBI_API_KEY` if set.
    pub fn from_env() -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.trim().is_empty());
        Self::with_api_key(key)
    }

    pub fn api_key_present(&self) -> bool {
        self.api_key.is_some()
    }

    pub fn validate(&self) -> Result<(), FetchError> {
        if !(self.max_requests_per_second.is_finite() && self.max_requests_per_second > 0.0) {
            return Err(FetchError::InvalidPolicy(format!(
                "max_requests_per_second must be > 0, got {}",
                self.max_requests_per_second
            )));
        }
        if self.concurrency_limit == 0 {
            return Err(FetchError::InvalidPolicy(
                "concurrency_limit must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for FetchPolicy {
    fn default() -> Self {
        Self::with_api_key(None)
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("network error for PMID {pmid}: {message}")]
    Network { pmid: Pmid, message: String },
    #[error("rate limited for PMID {pmid} after {attempts} attempts")]
    RateLimited { pmid: Pmid, attempts: u32 },
    #[error("malformed XML: {0}")]
    Parse(String),
    #[error("PMID {0} not found")]
    NotFound(Pmid),
    #[error("PMID {0} has no abstract")]
    AbstractMissing(Pmid),
    #[error("cache I/O error: {0}")]
    Cache(#[from] std::io::Error),
    #[error("invalid fetch policy: {0}")]
    InvalidPolicy(String),
}

/// Anything that can answer "what does this paper cite" and "what is its
/// abstract". Implemented by [`PubmedClient`] and by in-memory universes.
pub trait CitationSource: Sync {
    fn cited_pmids(&self, pmid: Pmid) -> Result<Vec<Pmid>, FetchError>;

    fn abstract_text(&self, pmid: Pmid) -> Result<String, FetchError>;

    /// How many lookups may usefully run at once.
    fn parallelism(&self) -> usize {
        1
    }
}
