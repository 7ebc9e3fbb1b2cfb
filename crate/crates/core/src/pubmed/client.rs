use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::cache::{CacheKind, DiskCache};
use super::parse::{parse_abstract, parse_cited_pmids};
use super::ratelimit::{Clock, RateLimiter, SystemClock};
use super::transport::{Transport, UreqTransport};
use super::{CitationSource, FetchError, FetchPolicy, Pmid};

pub const DEFAULT_BASE_URL: &str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
const TOOL: &str = "citemine";
const MAX_BACKOFF: Duration = Duration::from_secs(60);

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Shared E-utilities client. Cheap to share by reference across worker
/// threads; the limiter, cache and in-flight bound are internally synchronized.
pub struct PubmedClient {
    policy: FetchPolicy,
    transport: Arc<dyn Transport>,
    limiter: RateLimiter,
    cache: Option<DiskCache>,
    inflight: Semaphore,
    base_url: String,
}

impl PubmedClient {
    /// Client talking to NCBI over HTTPS with the system clock.
    pub fn new(policy: FetchPolicy, cache: Option<DiskCache>) -> Result<Self, FetchError> {
        let ua = format!("{TOOL}/{}", env!("CARGO_PKG_VERSION"));
        let transport = Arc::new(UreqTransport::new(ua, Duration::from_secs(60)));
        Self::with_parts(policy, cache, transport, Arc::new(SystemClock::new()))
    }

    pub fn with_parts(
        policy: FetchPolicy,
        cache: Option<DiskCache>,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, FetchError> {
        policy.validate()?;
        Ok(PubmedClient {
            limiter: RateLimiter::new(policy.max_requests_per_second, clock),
            inflight: Semaphore::new(policy.concurrency_limit),
            policy,
            transport,
            cache,
            base_url: DEFAULT_BASE_URL.to_string(),
        })
    }

    pub fn with_base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into().trim_end_matches('/').to_string();
        self
    }

    pub fn policy(&self) -> &FetchPolicy {
        &self.policy
    }

    /// Outbound references of `pmid`, deduplicated, in API order.
    pub fn fetch_cited_pmids(&self, pmid: Pmid) -> Result<Vec<Pmid>, FetchError> {
        let raw = self.fetch_raw(pmid, CacheKind::CitedList)?;
        parse_cited_pmids(pmid, &raw)
    }

    /// Plain-text abstract of `pmid`.
    pub fn fetch_abstract(&self, pmid: Pmid) -> Result<String, FetchError> {
        let raw = self.fetch_raw(pmid, CacheKind::Abstract)?;
        parse_abstract(pmid, &raw)
    }

    fn request(&self, pmid: Pmid, kind: CacheKind) -> (String, Vec<(&'static str, String)>) {
        let id = pmid.to_string();
        let (endpoint, mut query) = match kind {
            CacheKind::CitedList => (
                "elink.fcgi",
                vec![
                    ("dbfrom", "pubmed".to_string()),
                    ("db", "pubmed".to_string()),
                    ("linkname", "pubmed_pubmed_refs".to_string()),
                    ("id", id),
                    ("retmode", "xml".to_string()),
                ],
            ),
            CacheKind::Abstract => (
                "efetch.fcgi",
                vec![
                    ("db", "pubmed".to_string()),
                    ("id", id),
                    ("rettype", "abstract".to_string()),
                    ("retmode", "xml".to_string()),
                ],
            ),
        };
        query.push(("tool", TOOL.to_string()));
        if let Some(key) = &self.policy.api_key {
            query.push(("api_key", key.clone()));
        }
        (format!("{}/{}", self.base_url, endpoint), query)
    }

    fn fetch_raw(&self, pmid: Pmid, kind: CacheKind) -> Result<Vec<u8>, FetchError> {
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.get(pmid, kind)? {
                return Ok(entry.payload);
            }
        }

        let (url, query) = self.request(pmid, kind);
        let clock = self.limiter.clock().clone();
        let mut delay = Duration::ZERO;
        let mut attempt: u32 = 0;
        loop {
            let outcome = {
                let _permit = self.inflight.acquire();
                self.limiter.acquire();
                self.transport.get(&url, &query)
            };
            let retry_after = match outcome {
                Ok(resp) if resp.status == 200 => {
                    if let Some(cache) = &self.cache {
                        cache.put(pmid, kind, &resp.body)?;
                    }
                    return Ok(resp.body);
                }
                Ok(resp) if resp.status == 404 => return Err(FetchError::NotFound(pmid)),
                Ok(resp) if resp.status == 429 => {
                    if attempt >= self.policy.max_retries {
                        return Err(FetchError::RateLimited {
                            pmid,
                            attempts: attempt + 1,
                        });
                    }
                    resp.retry_after
                }
                Ok(resp) if resp.status >= 500 => {
                    if attempt >= self.policy.max_retries {
                        return Err(FetchError::Network {
                            pmid,
                            message: format!("HTTP {} after {} attempts", resp.status, attempt + 1),
                        });
                    }
                    resp.retry_after
                }
                Ok(resp) => {
                    return Err(FetchError::Network {
                        pmid,
                        message: format!("HTTP {}", resp.status),
                    })
                }
                Err(e) => {
                    if attempt >= self.policy.max_retries {
                        return Err(FetchError::Network {
                            pmid,
                            message: format!("{e} (after {} attempts)", attempt + 1),
                        });
                    }
                    None
                }
            };
            // Delays never shrink between attempts, even when a server
            // Retry-After was longer than the next exponential step.
            let exp = self
                .policy
                .backoff_base
                .saturating_mul(1u32 << attempt.min(16))
                .min(MAX_BACKOFF);
            delay = delay.max(exp).max(retry_after.unwrap_or_default());
            clock.sleep_until(clock.now() + delay);
            attempt += 1;
        }
    }
}

impl CitationSource for PubmedClient {
    fn cited_pmids(&self, pmid: Pmid) -> Result<Vec<Pmid>, FetchError> {
        self.fetch_cited_pmids(pmid)
    }

    fn abstract_text(&self, pmid: Pmid) -> Result<String, FetchError> {
        self.fetch_abstract(pmid)
    }

    fn parallelism(&self) -> usize {
        self.policy.concurrency_limit
    }
}
