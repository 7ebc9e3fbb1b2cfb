//! Shared test support: fixture paths, a scripted transport, random
//! instance generators and independent reference implementations.
//!
//! The reference implementations deliberately share no code with the
//! library: they work on plain `f64` vectors and follow the definitions
//! directly.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use citemine::neighborhood::{CitationRecord, HopDocument};
use citemine::pubmed::{Clock, HttpResponse, MockClock, Pmid, Transport, TransportError};
use citemine::vectorspace::Embedding;
use rand::Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn pmid(v: u64) -> Pmid {
    Pmid::new(v).unwrap()
}

/// Transport answering from a table keyed by `(endpoint, id)`. Every call
/// is logged with the mock-clock time at which it was issued.
pub struct ScriptedTransport {
    clock: Arc<MockClock>,
    responses: Mutex<HashMap<(String, String), Vec<HttpResponse>>>,
    pub calls: Mutex<Vec<(std::time::Duration, String, String)>>,
}

impl ScriptedTransport {
    pub fn new(clock: Arc<MockClock>) -> Self {
        ScriptedTransport {
            clock,
            responses: Mutex::new(HashMap::new()),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Queue responses for `(endpoint, id)`; the last one repeats forever.
    pub fn script(&self, endpoint: &str, id: u64, responses: Vec<HttpResponse>) {
        self.responses
            .lock()
            .unwrap()
            .insert((endpoint.to_string(), id.to_string()), responses);
    }

    pub fn ok(&self, endpoint: &str, id: u64, body: &[u8]) {
        self.script(endpoint, id, vec![ok(body)]);
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }

    pub fn call_times(&self) -> Vec<std::time::Duration> {
        self.calls.lock().unwrap().iter().map(|c| c.0).collect()
    }
}

pub fn ok(body: &[u8]) -> HttpResponse {
    HttpResponse {
        status: 200,
        body: body.to_vec(),
        retry_after: None,
    }
}

pub fn status(code: u16) -> HttpResponse {
    HttpResponse {
        status: code,
        body: Vec::new(),
        retry_after: None,
    }
}

impl Transport for ScriptedTransport {
    fn get(&self, url: &str, query: &[(&str, String)]) -> Result<HttpResponse, TransportError> {
        let endpoint = url.rsplit('/').next().unwrap_or(url).to_string();
        let id = query
            .iter()
            .find(|(k, _)| *k == "id")
            .map(|(_, v)| v.clone())
            .unwrap_or_default();
        self.calls
            .lock()
            .unwrap()
            .push((self.clock.now(), endpoint.clone(), id.clone()));
        let mut table = self.responses.lock().unwrap();
        match table.get_mut(&(endpoint, id)) {
            Some(q) if q.len() > 1 => Ok(q.remove(0)),
            Some(q) => Ok(q[0].clone()),
            None => Ok(status(404)),
        }
    }
}

/// Largest number of timestamps in any half-open one-second window.
pub fn max_in_any_second(times: &[std::time::Duration]) -> usize {
    let mut sorted = times.to_vec();
    sorted.sort();
    let mut best = 0;
    for (i, &t) in sorted.iter().enumerate() {
        let end = t + std::time::Duration::from_secs(1);
        best = best.max(sorted[i..].iter().take_while(|&&u| u < end).count());
    }
    best
}

// ---------- random instances ----------

pub fn random_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if norm(&v) > 1e-3 {
            return v;
        }
    }
}

pub fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// A record with `n` candidates (`one_hop` of them 1-hop) and its raw
/// vectors, in pool order, plus a query vector.
pub struct SyntheticRecord {
    pub record: CitationRecord,
    pub pool: Vec<Vec<f64>>,
    pub query: Vec<f64>,
}

impl SyntheticRecord {
    pub fn random<R: Rng>(rng: &mut R, seed_pmid: u64, n: usize, one_hop: usize, d: usize) -> Self {
        assert!(one_hop >= 1 && one_hop <= n);
        let pool: Vec<Vec<f64>> = (0..n).map(|_| random_vec(rng, d)).collect();
        let query = random_vec(rng, d);
        let docs: Vec<HopDocument> = (0..n)
            .map(|i| HopDocument {
                pmid: pmid(seed_pmid * 1000 + 1 + i as u64),
                abstract_text: format!("doc {i} of {seed_pmid}"),
            })
            .collect();
        let record = CitationRecord {
            positive_pmid: pmid(seed_pmid),
            positive_abstract: format!("seed {seed_pmid}"),
            one_hop: docs[..one_hop].to_vec(),
            two_hop: docs[one_hop..].to_vec(),
        };
        SyntheticRecord {
            record,
            pool,
            query,
        }
    }

    pub fn pool_embeddings(&self) -> Vec<Embedding> {
        self.record
            .candidates()
            .zip(&self.pool)
            .map(|(d, v)| Embedding::new(d.pmid.to_string(), &to_f32(v)).unwrap())
            .collect()
    }

    pub fn query_embedding(&self) -> Embedding {
        Embedding::new(format!("query:{}", self.record.positive_pmid), &to_f32(&self.query))
            .unwrap()
    }

    pub fn pmid_at(&self, i: usize) -> Pmid {
        self.record.candidates().nth(i).unwrap().pmid
    }

    /// Smallest gap between any two distinct similarity values the
    /// traversal might compare (pairwise within a row, and query
    /// similarities). Instances with tiny gaps are skipped so rounding
    /// differences cannot change an argmax.
    pub fn min_gap(&self) -> f64 {
        let n = self.pool.len();
        let mut gap = f64::INFINITY;
        let qs: Vec<f64> = self.pool.iter().map(|p| cosine(&self.query, p)).collect();
        for a in 0..n {
            for b in a + 1..n {
                gap = gap.min((qs[a] - qs[b]).abs());
            }
            let row: Vec<f64> = (0..n).map(|j| cosine(&self.pool[a], &self.pool[j])).collect();
            for b in 0..n {
                for c in b + 1..n {
                    if b != a && c != a {
                        gap = gap.min((row[b] - row[c]).abs());
                    }
                }
            }
        }
        gap
    }
}

// ---------- reference implementations ----------

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

/// Greedy multi-start walk: start from 1-hop documents by descending query
/// similarity, always step to the most similar unvisited document.
pub fn greedy_oracle(
    pool: &[Vec<f64>],
    query: &[f64],
    one_hop: usize,
    n_paths: usize,
    l_path: usize,
) -> Vec<usize> {
    let n = pool.len();
    let mut starts: Vec<usize> = (0..one_hop).collect();
    starts.sort_by(|&a, &b| {
        cosine(query, &pool[b])
            .partial_cmp(&cosine(query, &pool[a]))
            .unwrap()
            .then(a.cmp(&b))
    });
    starts.truncate(n_paths);
    let mut visited = vec![false; n];
    let mut out = Vec::new();
    for s in starts {
        if visited[s] {
            continue;
        }
        let mut cur = s;
        for step in 0..l_path {
            visited[cur] = true;
            out.push(cur);
            if step + 1 == l_path {
                break;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if visited[j] {
                    continue;
                }
                let s = cosine(&pool[cur], &pool[j]);
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((j, s));
                }
            }
            match best {
                Some((j, _)) => cur = j,
                None => break,
            }
        }
    }
    out
}

/// nDCG@k straight from the definition: order the run by score descending
/// (ties by doc id), gain `2^g - 1`, discount `log2(rank + 1)`.
pub fn brute_ndcg(run: &[(String, f64)], judged: &BTreeMap<String, u32>, k: usize) -> f64 {
    let mut ranked = run.to_vec();
    ranked.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    let mut dcg = 0.0;
    for (i, (doc, _)) in ranked.iter().take(k).enumerate() {
        let g = *judged.get(doc).unwrap_or(&0) as f64;
        dcg += (2f64.powf(g) - 1.0) / ((i + 2) as f64).ln() * std::f64::consts::LN_2;
    }
    let mut grades: Vec<u32> = judged.values().cloned().collect();
    grades.sort();
    grades.reverse();
    let mut idcg = 0.0;
    for (i, &g) in grades.iter().take(k).enumerate() {
        idcg += (2f64.powf(g as f64) - 1.0) / ((i + 2) as f64).ln() * std::f64::consts::LN_2;
    }
    dcg / idcg
}

pub fn brute_success(run: &[(String, f64)], judged: &BTreeMap<String, u32>, k: usize) -> f64 {
    let mut ranked = run.to_vec();
    ranked.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    for (doc, _) in ranked.iter().take(k) {
        if judged.get(doc).copied().unwrap_or(0) >= 1 {
            return 1.0;
        }
    }
    0.0
}

/// Random (qrels, run) instance: up to 20 queries, up to 50 docs each;
/// integer scores so ties are common. Returns the raw maps.
pub type Instance = (
    BTreeMap<String, BTreeMap<String, u32>>,
    BTreeMap<String, Vec<(String, f64)>>,
);

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let mut qrels = BTreeMap::new();
    let mut runs = BTreeMap::new();
    let nq = rng.gen_range(1..=20);
    for q in 0..nq {
        let qid = format!("q{q}");
        let ndocs = rng.gen_range(1..=50);
        let mut judged = BTreeMap::new();
        let mut run = Vec::new();
        for d in 0..ndocs {
            let doc = format!("d{d:02}");
            if rng.gen_bool(0.3) {
                judged.insert(doc.clone(), rng.gen_range(0..=3));
            }
            if rng.gen_bool(0.9) {
                run.push((doc, f64::from(rng.gen_range(0..15))));
            }
        }
        // Relevant documents the system never retrieved.
        if rng.gen_bool(0.3) {
            judged.insert(format!("unretrieved{q}"), rng.gen_range(1..=3));
        }
        if !judged.is_empty() {
            qrels.insert(qid.clone(), judged);
        }
        if !run.is_empty() && rng.gen_bool(0.95) {
            runs.insert(qid, run);
        }
    }
    if qrels.values().all(|j: &BTreeMap<String, u32>| j.values().all(|&g| g == 0)) {
        qrels.insert("qforced".into(), BTreeMap::from([("d00".to_string(), 1)]));
    }
    (qrels, runs)
}

/// Brute-force top-k: score everything, full sort (score desc, id asc).
pub fn brute_top_k(vectors: &[Vec<f32>], ids: &[String], q: &[f32], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = vectors
        .iter()
        .zip(ids)
        .map(|(v, id)| {
            let s: f64 = v.iter().zip(q).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
            (id.clone(), s)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
