use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use citemine::evalkit::{ndcg_at_k, success_at_k, triplet_accuracy, Qrels, RunRanking};
use citemine::flatindex::{
    bench, BenchConfig, FlatIndex, PrecomputedQueries, QueryEncoder, StubEncoder,
};
use citemine::miner::{
    emit_triplets, read_triplets, run_ablation, DatasetStats, FileQueryProvider,
    HttpQueryProvider, MiningConfig, QueryProvider,
};
use citemine::neighborhood::{
    build_neighborhood, read_corpus, read_corpus_vec, write_corpus, CitationRecord, Neighborhood,
    NeighborhoodConfig,
};
use citemine::pubmed::{DiskCache, FetchPolicy, Pmid, PubmedClient, CACHE_DIR_ENV};
use citemine::vectorspace::{
    normalize, EmbeddingProvider, FileProvider, HttpProvider, VectorTable,
};

use crate::config::{
    existing, required, AblateArgs, BenchArgs, CrawlArgs, EvalArgs, MineArgs, StatsArgs,
};
use crate::error::CliError;

const SEED_CHUNK: usize = 64;

/// Writes `<artifact>.meta.json` recording the command, the resolved
/// configuration and a summary. No timestamps, so reruns are byte-identical.
fn write_sidecar(
    stage: &'static str,
    artifact: &Path,
    config: &impl Serialize,
    summary: Value,
) -> Result<(), CliError> {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".meta.json");
    let meta = json!({
        "tool": "citemine",
        "version": env!("CARGO_PKG_VERSION"),
        "command": stage,
        "config": config,
        "summary": summary,
    });
    let mut text = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
    text.push('\n');
    fs::write(PathBuf::from(name), text).map_err(|e| CliError::runtime(stage, "io", e))
}

fn write_json(stage: &'static str, path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::runtime(stage, "io", e))
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn embedder(
    stage: &'static str,
    vectors: &Option<PathBuf>,
    url: &Option<String>,
) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    match (vectors, url) {
        (Some(p), _) => {
            existing(stage, p)?;
            Ok(Box::new(
                FileProvider::load(p).map_err(|e| CliError::runtime(stage, "vectors", e))?,
            ))
        }
        (None, Some(u)) => Ok(Box::new(
            HttpProvider::connect(u).map_err(|e| CliError::runtime(stage, "provider", e))?,
        )),
        (None, None) => Err(CliError::config(
            stage,
            "missing required option --vectors (or --embed-url)",
        )),
    }
}

fn query_provider(
    stage: &'static str,
    queries: &Option<PathBuf>,
    url: &Option<String>,
) -> Result<Box<dyn QueryProvider>, CliError> {
    match (queries, url) {
        (Some(p), _) => {
            existing(stage, p)?;
            Ok(Box::new(
                FileQueryProvider::load(p).map_err(|e| CliError::runtime(stage, "queries", e))?,
            ))
        }
        (None, Some(u)) => Ok(Box::new(HttpQueryProvider::new(u))),
        (None, None) => Err(CliError::config(
            stage,
            "missing required option --queries (or --query-url)",
        )),
    }
}

fn read_seeds(path: &Path) -> Result<Vec<Pmid>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::runtime("crawl", "io", e))?;
    let mut seen = HashSet::new();
    let mut seeds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let pmid: Pmid = line.parse().map_err(|e| {
            CliError::config("crawl", format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        if seen.insert(pmid) {
            seeds.push(pmid);
        }
    }
    Ok(seeds)
}

pub fn crawl(mut args: CrawlArgs) -> Result<(), CliError> {
    const S: &str = "crawl";
    let seeds_path = required(S, "seeds", &args.seeds)?;
    let out = required(S, "out", &args.out)?;
    existing(S, &seeds_path)?;

    let mut policy = FetchPolicy::from_env();
    policy.max_requests_per_second = *args.rate.get_or_insert(policy.max_requests_per_second);
    policy.max_retries = *args.max_retries.get_or_insert(policy.max_retries);
    policy.backoff_base =
        Duration::from_millis(*args.backoff_ms.get_or_insert(policy.backoff_base.as_millis() as u64));
    policy.concurrency_limit = *args.concurrency.get_or_insert(policy.concurrency_limit);
    policy.validate().map_err(|e| CliError::config(S, e.to_string()))?;

    let ncfg = NeighborhoodConfig {
        min_candidates: *args.min_candidates.get_or_insert(10),
        max_two_hop_per_parent: args.max_two_hop_per_parent,
    };
    if ncfg.min_candidates == 0 {
        return Err(CliError::config(S, "min_candidates must be >= 1"));
    }
    if args.cache_dir.is_none() {
        args.cache_dir = std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from);
    }
    let cache = match &args.cache_dir {
        Some(d) => Some(DiskCache::open(d).map_err(|e| CliError::runtime(S, "io", e))?),
        None => None,
    };
    let api_key_present = policy.api_key_present();
    let mut client =
        PubmedClient::new(policy, cache).map_err(|e| CliError::config(S, e.to_string()))?;
    if let Some(url) = &args.base_url {
        client = client.with_base_url(url.clone());
    }

    let seeds = read_seeds(&seeds_path)?;
    if out.exists() {
        fs::remove_file(&out).map_err(|e| CliError::runtime(S, "io", e))?;
    }
    fs::File::create(&out).map_err(|e| CliError::runtime(S, "io", e))?;

    let mut built = 0usize;
    let mut rejected: BTreeMap<String, usize> = BTreeMap::new();
    let mut failed: Vec<Value> = Vec::new();
    for chunk in seeds.chunks(SEED_CHUNK) {
        let results: Vec<_> = chunk
            .par_iter()
            .map(|&s| (s, build_neighborhood(&client, s, &ncfg)))
            .collect();
        let mut records: Vec<CitationRecord> = Vec::new();
        for (seed, r) in results {
            match r {
                Ok(Neighborhood::Built(rec)) => records.push(rec),
                Ok(Neighborhood::Rejected { reason, .. }) => {
                    let key = reason.to_string();
                    let key = key.split(" (").next().unwrap_or(&key).to_string();
                    *rejected.entry(key).or_default() += 1;
                }
                Err(e) => failed.push(json!({"pmid": seed, "error": e.to_string()})),
            }
        }
        built += write_corpus(&out, &records).map_err(|e| CliError::runtime(S, "io", e))?;
    }

    let summary = json!({
        "seeds": seeds.len(),
        "records": built,
        "rejected": rejected,
        "failed": failed.len(),
        "failures": failed,
        "api_key_present": api_key_present,
    });
    write_sidecar(S, &out, &args, summary.clone())?;
    print_json(&summary);
    Ok(())
}

fn mining_config(
    n_paths: usize,
    l_path: usize,
    k_sample: usize,
    seed: u64,
    add_random_negative: bool,
    stage: &'static str,
) -> Result<MiningConfig, CliError> {
    let cfg = MiningConfig {
        n_paths,
        l_path,
        k_sample,
        seed,
        add_random_negative,
    };
    cfg.validate().map_err(|e| CliError::config(stage, e.to_string()))?;
    Ok(cfg)
}

pub fn mine(mut args: MineArgs) -> Result<(), CliError> {
    const S: &str = "mine";
    let corpus = required(S, "corpus", &args.corpus)?;
    let out = required(S, "out", &args.out)?;
    existing(S, &corpus)?;
    let d = MiningConfig::default();
    let cfg = mining_config(
        *args.n_paths.get_or_insert(d.n_paths),
        *args.l_path.get_or_insert(d.l_path),
        *args.k_sample.get_or_insert(d.k_sample),
        *args.seed.get_or_insert(d.seed),
        *args.add_random_negative.get_or_insert(d.add_random_negative),
        S,
    )?;
    let emb = embedder(S, &args.vectors, &args.embed_url)?;
    let queries = query_provider(S, &args.queries, &args.query_url)?;

    let records = read_corpus(&corpus).map_err(|e| CliError::runtime(S, "corpus", e))?;
    let stats = emit_triplets(records, queries.as_ref(), emb.as_ref(), &cfg, &out)
        .map_err(|e| CliError::runtime(S, "mine", e))?;
    let summary = serde_json::to_value(&stats).expect("stats serialize");
    write_sidecar(S, &out, &args, summary)?;
    print_json(&stats);
    Ok(())
}

enum MetricSpec {
    Ndcg(usize),
    Success(usize),
    TripletAccuracy,
}

fn parse_metric(s: &str) -> Result<MetricSpec, CliError> {
    let bad = || {
        CliError::config(
            "eval",
            format!("unknown metric {s:?}; expected ndcg@K, success@K or triplet-accuracy"),
        )
    };
    if s == "triplet-accuracy" {
        return Ok(MetricSpec::TripletAccuracy);
    }
    let (name, k) = s.split_once('@').ok_or_else(bad)?;
    let k: usize = k.parse().map_err(|_| bad())?;
    if k == 0 {
        return Err(bad());
    }
    match name {
        "ndcg" => Ok(MetricSpec::Ndcg(k)),
        "success" => Ok(MetricSpec::Success(k)),
        _ => Err(bad()),
    }
}

pub fn eval(mut args: EvalArgs) -> Result<(), CliError> {
    const S: &str = "eval";
    let metric_name = args.metric.get_or_insert_with(|| "ndcg@10".into()).clone();
    let report = match parse_metric(&metric_name)? {
        MetricSpec::TripletAccuracy => {
            let triplets = required(S, "triplets", &args.triplets)?;
            let vectors = required(S, "vectors", &args.vectors)?;
            existing(S, &triplets)?;
            existing(S, &vectors)?;
            let ts = read_triplets(&triplets).map_err(|e| CliError::runtime(S, "triplets", e))?;
            let provider =
                FileProvider::load(&vectors).map_err(|e| CliError::runtime(S, "vectors", e))?;
            let acc = triplet_accuracy(&ts, &provider).map_err(|e| CliError::runtime(S, "eval", e))?;
            json!({"metric": metric_name, "triplets": ts.len(), "accuracy": acc})
        }
        spec => {
            let qrels = required(S, "qrels", &args.qrels)?;
            let runs = required(S, "run", &args.run)?;
            if qrels.len() != runs.len() {
                return Err(CliError::config(
                    S,
                    format!("{} --qrels but {} --run", qrels.len(), runs.len()),
                ));
            }
            let mut rows = Vec::new();
            let mut sum = 0.0;
            for (q, r) in qrels.iter().zip(&runs) {
                existing(S, q)?;
                existing(S, r)?;
                let qr = Qrels::load(q).map_err(|e| CliError::runtime(S, "qrels", e))?;
                let run = RunRanking::load(r).map_err(|e| CliError::runtime(S, "run", e))?;
                let rep = match spec {
                    MetricSpec::Ndcg(k) => ndcg_at_k(&run, &qr, k),
                    MetricSpec::Success(k) => success_at_k(&run, &qr, k),
                    MetricSpec::TripletAccuracy => unreachable!(),
                }
                .map_err(|e| CliError::runtime(S, "eval", e))?;
                sum += rep.mean;
                rows.push(json!({"qrels": q, "run": r, "report": rep}));
            }
            // Plain mean over the runs given, one per dataset.
            json!({"metric": metric_name, "mean": sum / rows.len() as f64, "runs": rows})
        }
    };
    if let Some(out) = &args.out {
        write_json(S, out, &report)?;
        write_sidecar(S, out, &args, Value::Null)?;
    }
    print_json(&report);
    Ok(())
}

fn unit_rows(stage: &'static str, table: &VectorTable) -> Result<Vec<Vec<f32>>, CliError> {
    (0..table.len())
        .map(|i| {
            normalize(table.row(i)).map_err(|e| {
                CliError::runtime(stage, "vectors", format!("{}: {e}", table.ids()[i]))
            })
        })
        .collect()
}

pub fn bench_cmd(mut args: BenchArgs) -> Result<(), CliError> {
    const S: &str = "bench";
    let out = required(S, "out", &args.out)?;
    let seed = *args.seed.get_or_insert(42);
    let k = *args.k.get_or_insert(1000);
    let batches = args.batches.get_or_insert_with(|| vec![1, 10, 2000]).clone();
    if k == 0 || batches.is_empty() || batches.contains(&0) {
        return Err(CliError::config(S, "k and every batch size must be >= 1"));
    }
    if args.iterations == Some(0) {
        return Err(CliError::config(S, "iterations must be >= 1"));
    }

    let index = match (&args.vectors, args.random_index) {
        (Some(p), _) => {
            existing(S, p)?;
            let table = VectorTable::load(p).map_err(|e| CliError::runtime(S, "vectors", e))?;
            args.dim = Some(table.dim());
            FlatIndex::build(&unit_rows(S, &table)?, table.ids().to_vec())
        }
        (None, Some(n)) => {
            let dim = *args.dim.get_or_insert(32);
            let vs = StubEncoder::new(dim, seed ^ 0x5EED)
                .encode(n)
                .map_err(|e| CliError::runtime(S, "vectors", e))?;
            FlatIndex::build(&vs, (0..n).map(|i| format!("doc{i}")).collect())
        }
        (None, None) => {
            return Err(CliError::config(
                S,
                "missing required option --vectors (or --random-index)",
            ))
        }
    }
    .map_err(|e| CliError::config(S, e.to_string()))?;

    let mut encoder: Box<dyn QueryEncoder> = match &args.queries {
        Some(q) => {
            existing(S, q)?;
            let table = VectorTable::load(q).map_err(|e| CliError::runtime(S, "queries", e))?;
            if table.is_empty() || table.dim() != index.dim() {
                return Err(CliError::config(
                    S,
                    format!(
                        "query vectors must be non-empty with dim {}, got {} rows of dim {}",
                        index.dim(),
                        table.len(),
                        table.dim()
                    ),
                ));
            }
            Box::new(PrecomputedQueries::new(table))
        }
        None => Box::new(StubEncoder::new(index.dim(), seed)),
    };
    let cfg = BenchConfig {
        batch_sizes: batches,
        k,
        iterations: args.iterations,
    };
    let report = bench(&index, encoder.as_mut(), &cfg).map_err(|e| CliError::runtime(S, "bench", e))?;
    write_json(S, &out, &report)?;
    write_sidecar(S, &out, &args, json!({"index_size": index.len(), "dim": index.dim()}))?;
    let cells: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "batch_size": r.batch_size,
                "iterations": r.iterations,
                "encoding_ms": r.encoding_ms,
                "retrieval_ms": r.retrieval_ms,
                "total_ms": r.total_ms,
            })
        })
        .collect();
    print_json(&json!({"hardware_note": report.hardware_note, "rows": cells}));
    Ok(())
}

#[derive(Debug, Default, Serialize)]
struct CorpusSummary {
    records: usize,
    mean_pool_size: Option<f64>,
    mean_one_hop: Option<f64>,
    mean_two_hop: Option<f64>,
    /// |1-hop ∪ 2-hop| → number of records.
    pool_size_histogram: BTreeMap<usize, usize>,
}

fn corpus_summary(records: &[CitationRecord]) -> CorpusSummary {
    let mut s = CorpusSummary {
        records: records.len(),
        ..Default::default()
    };
    if records.is_empty() {
        return s;
    }
    let n = records.len() as f64;
    let (mut pool, mut one, mut two) = (0usize, 0usize, 0usize);
    for r in records {
        pool += r.candidate_count();
        one += r.one_hop.len();
        two += r.two_hop.len();
        *s.pool_size_histogram.entry(r.candidate_count()).or_default() += 1;
    }
    s.mean_pool_size = Some(pool as f64 / n);
    s.mean_one_hop = Some(one as f64 / n);
    s.mean_two_hop = Some(two as f64 / n);
    s
}

pub fn stats(args: StatsArgs) -> Result<(), CliError> {
    const S: &str = "stats";
    if args.corpus.is_none() && args.triplets.is_none() {
        return Err(CliError::config(S, "give --corpus, --triplets or both"));
    }
    let mut report = serde_json::Map::new();
    if let Some(p) = &args.corpus {
        existing(S, p)?;
        let recs = read_corpus_vec(p).map_err(|e| CliError::runtime(S, "corpus", e))?;
        report.insert("corpus".into(), serde_json::to_value(corpus_summary(&recs)).unwrap());
    }
    if let Some(p) = &args.triplets {
        existing(S, p)?;
        let ts = read_triplets(p).map_err(|e| CliError::runtime(S, "triplets", e))?;
        report.insert(
            "triplets".into(),
            serde_json::to_value(DatasetStats::from_triplets(&ts)).unwrap(),
        );
    }
    print_json(&report);
    Ok(())
}

pub fn ablate(mut args: AblateArgs) -> Result<(), CliError> {
    const S: &str = "ablate";
    let corpus = required(S, "corpus", &args.corpus)?;
    let out = required(S, "out", &args.out)?;
    existing(S, &corpus)?;
    let d = MiningConfig::default();
    let base = mining_config(
        d.n_paths,
        d.l_path,
        *args.k_sample.get_or_insert(d.k_sample),
        *args.seed.get_or_insert(d.seed),
        *args.add_random_negative.get_or_insert(d.add_random_negative),
        S,
    )?;
    let emb = embedder(S, &args.vectors, &args.embed_url)?;
    let queries = query_provider(S, &args.queries, &args.query_url)?;
    let records = read_corpus_vec(&corpus).map_err(|e| CliError::runtime(S, "corpus", e))?;
    let table = run_ablation(
        &records,
        queries.as_ref(),
        emb.as_ref(),
        &base,
        args.triplets_dir.as_deref(),
    )
    .map_err(|e| CliError::runtime(S, "mine", e))?;
    write_json(S, &out, &table)?;
    write_sidecar(S, &out, &args, json!({"records": records.len()}))?;
    let md = table.to_markdown();
    if let Some(p) = &args.markdown {
        fs::write(p, &md).map_err(|e| CliError::runtime(S, "io", e))?;
    }
    print!("{md}");
    Ok(())
}
