//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.
//!
//! `acceptance --emit-child <corpus> <queries> <vectors> <out>` mines a
//! corpus and exits; the determinism check uses it to compare output across
//! separate processes.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use citemine::evalkit::{mnr_loss, mnr_loss_from_scores, ndcg_at_k, success_at_k, LossInputs, Qrels, RunRanking};
use citemine::flatindex::{bench, BenchConfig, FlatIndex, QueryEncoder, StubEncoder};
use citemine::miner::{
    emit_triplets, mine_hard_negatives, read_triplets, run_ablation, sample_next, FileQueryProvider,
    MiningConfig, ABLATION_GRID,
};
use citemine::neighborhood::{read_corpus, read_corpus_vec};
use citemine::pubmed::{parse_abstract, parse_cited_pmids, DiskCache, FetchError, FetchPolicy, MockClock, PubmedClient};
use citemine::vectorspace::{build_similarity_graph, Embedding, FileProvider, SimilarityGraph};
use common::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

// ---------- metric oracle ----------

fn metric_oracle() -> Outcome {
    let t0 = Instant::now();
    // Trivial cases, exact.
    let single = |docs: &[&str]| {
        let n = docs.len();
        let run = BTreeMap::from([(
            "q".to_string(),
            docs.iter().enumerate().map(|(i, d)| (d.to_string(), (n - i) as f64)).collect(),
        )]);
        RunRanking::new(run).unwrap()
    };
    let mut qr = Qrels::new();
    qr.insert("q", "rel", 1);
    ensure!(ndcg_at_k(&single(&["rel", "a"]), &qr, 10).unwrap().mean == 1.0, "rank-1 nDCG != 1");
    let second = ndcg_at_k(&single(&["a", "rel"]), &qr, 10).unwrap().mean;
    ensure!((second - 0.63093).abs() <= 1e-5, "rank-2 nDCG = {second}");
    let far: Vec<String> = (0..10).map(|i| format!("x{i}")).chain(["rel".to_string()]).collect();
    let far: Vec<&str> = far.iter().map(String::as_str).collect();
    ensure!(ndcg_at_k(&single(&far), &qr, 10).unwrap().mean == 0.0, "outside cutoff nDCG != 0");
    ensure!(success_at_k(&single(&far[6..]), &qr, 5).unwrap().mean == 1.0, "success at rank 5");
    ensure!(success_at_k(&single(&far[5..]), &qr, 5).unwrap().mean == 0.0, "success at rank 6");

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0f64;
    for i in 0..200 {
        let inst = random_instance(&mut rng);
        let k = [1, 3, 5, 10, 20][i % 5];
        let mut q = Qrels::new();
        for (qid, judged) in &inst.0 {
            for (d, g) in judged {
                q.insert(qid.as_str(), d.as_str(), *g);
            }
        }
        let run = RunRanking::new(inst.1.clone()).unwrap();
        let (mut on, mut os, mut m) = (0.0, 0.0, 0.0);
        for (qid, judged) in &inst.0 {
            if judged.values().all(|&g| g == 0) {
                continue;
            }
            let r = inst.1.get(qid).cloned().unwrap_or_default();
            on += brute_ndcg(&r, judged, k);
            os += brute_success(&r, judged, k);
            m += 1.0;
        }
        let dn = (ndcg_at_k(&run, &q, k).unwrap().mean - on / m).abs();
        let ds = (success_at_k(&run, &q, k).unwrap().mean - os / m).abs();
        worst = worst.max(dn).max(ds);
        ensure!(dn <= 1e-9 && ds <= 1e-9, "instance {i}: diff ndcg {dn:e} success {ds:e}");
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2}s");
    Ok(format!("200 instances, max |diff| {worst:.1e}, {secs:.2}s"))
}

// ---------- miner ----------

fn cfg(n_paths: usize, l_path: usize, k_sample: usize, seed: u64, random: bool) -> MiningConfig {
    MiningConfig {
        n_paths,
        l_path,
        k_sample,
        seed,
        add_random_negative: random,
    }
}

fn greedy_oracle_equivalence() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut accepted, mut skipped) = (0, 0);
    while accepted < 100 {
        let n = rng.gen_range(1..=12);
        let one_hop = rng.gen_range(1..=n);
        let d = rng.gen_range(2..=8);
        let rec = SyntheticRecord::random(&mut rng, 11, n, one_hop, d);
        if rec.min_gap() <= 1e-5 {
            skipped += 1;
            continue;
        }
        let (np, lp) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let want: Vec<_> = greedy_oracle(&rec.pool, &rec.query, one_hop, np, lp)
            .into_iter()
            .map(|i| rec.pmid_at(i))
            .collect();
        let got = mine_hard_negatives(
            &rec.record,
            "q",
            &rec.pool_embeddings(),
            &rec.query_embedding(),
            &cfg(np, lp, 1, rng.gen(), false),
        )
        .map_err(|e| e.to_string())?
        .negative_pmids;
        ensure!(got == want, "graph {accepted} (n={n}, n_paths={np}, l_path={lp}): {got:?} != {want:?}");
        accepted += 1;
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2}s");
    Ok(format!("100 graphs exact ({skipped} near-tie instances skipped), {secs:.2}s"))
}

fn structural_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = Vec::new();
    for r in 0..1000u64 {
        let n = rng.gen_range(1..=40);
        let one_hop = rng.gen_range(1..=n);
        let d = rng.gen_range(2..=16);
        let rec = SyntheticRecord::random(&mut rng, 100 + r, n, one_hop, d);
        let c = cfg(
            rng.gen_range(1..=5),
            rng.gen_range(1..=5),
            rng.gen_range(1..=5),
            rng.gen(),
            rng.gen(),
        );
        let t = mine_hard_negatives(&rec.record, "q", &rec.pool_embeddings(), &rec.query_embedding(), &c)
            .map_err(|e| e.to_string())?;
        let pool: HashSet<_> = rec.record.candidates().map(|d| d.pmid).collect();
        let uniq: HashSet<_> = t.negative_pmids.iter().collect();
        let qs: Vec<f64> = rec.pool[..one_hop].iter().map(|p| cosine(&rec.query, p)).collect();
        let best = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = rec.record.candidates().position(|d| Some(&d.pmid) == t.negative_pmids.first());
        let checks = [
            ("unique", uniq.len() == t.negative_pmids.len()),
            ("in pool", t.negative_pmids.iter().all(|p| pool.contains(p))),
            ("positive excluded", !t.negative_pmids.contains(&rec.record.positive_pmid)),
            ("bounded", t.negative_pmids.len() <= c.max_negatives()),
            ("first is best 1-hop", first.is_some_and(|f| f < one_hop && qs[f] >= best - 1e-6)),
        ];
        for (name, ok) in checks {
            if !ok {
                violations.push(format!("record {r}: {name}"));
            }
        }
    }
    ensure!(violations.is_empty(), "{} violations, e.g. {}", violations.len(), violations[0]);
    Ok("1000 records, 0 violations".into())
}

fn mine_to(corpus: &Path, queries: &Path, vectors: &Path, out: &Path) {
    emit_triplets(
        read_corpus(corpus).unwrap(),
        &FileQueryProvider::load(queries).unwrap(),
        &FileProvider::load(vectors).unwrap(),
        &MiningConfig::default(),
        out,
    )
    .unwrap();
}

fn seeded_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = fixture("synthetic/corpus.jsonl");
    let queries = fixture("synthetic/queries.tsv");
    let vectors = fixture("synthetic/vectors.txt");
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    mine_to(&corpus, &queries, &vectors, &a);
    mine_to(&corpus, &queries, &vectors, &b);
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    ensure!(ta == tb, "two in-process runs differ");

    let mut recs = read_corpus_vec(&corpus).unwrap();
    recs.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let shuffled = dir.path().join("shuffled.jsonl");
    emit_triplets(
        recs.into_iter().map(Ok),
        &FileQueryProvider::load(&queries).unwrap(),
        &FileProvider::load(&vectors).unwrap(),
        &MiningConfig::default(),
        &shuffled,
    )
    .unwrap();
    let by_pmid = |p: &Path| {
        let mut v = read_triplets(p).unwrap();
        v.sort_by_key(|t| t.positive_pmid);
        v
    };
    ensure!(by_pmid(&a) == by_pmid(&shuffled), "permuted record order changes triplets");

    let child = dir.path().join("child.jsonl");
    let status = std::process::Command::new(std::env::current_exe().unwrap())
        .arg("--emit-child")
        .args([&corpus, &queries, &vectors, &child])
        .status()
        .map_err(|e| e.to_string())?;
    ensure!(status.success(), "child process failed");
    ensure!(std::fs::read(&child).unwrap() == ta, "output differs across processes");
    Ok(format!("{} bytes identical across runs, orderings and processes", ta.len()))
}

fn sampling_weights() -> Outcome {
    let sims = [0.6f32, 0.3, 0.1];
    let mut rows = vec![vec![1.0f32, sims[0], sims[1], sims[2]]];
    for (i, &s) in sims.iter().enumerate() {
        let mut r = vec![0.0f32; 4];
        r[0] = s;
        r[i + 1] = 1.0;
        rows.push(r);
    }
    let ids = (0..4).map(|i| i.to_string()).collect();
    let g = SimilarityGraph::from_matrix(rows, ids, 1).map_err(|e| e.to_string())?;
    let visited = [true, false, false, false];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0usize; 3];
    const DRAWS: usize = 100_000;
    for _ in 0..DRAWS {
        let j = sample_next(0, &g, &visited, 3, &mut rng).unwrap();
        counts[j - 1] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / DRAWS as f64).collect();
    for (f, w) in freqs.iter().zip([0.6, 0.3, 0.1]) {
        ensure!((f - w).abs() <= 0.01, "frequencies {freqs:?}");
    }
    Ok(format!("frequencies {:.4}/{:.4}/{:.4}", freqs[0], freqs[1], freqs[2]))
}

fn default_count() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("t.jsonl");
    let stats = emit_triplets(
        read_corpus(&fixture("synthetic/corpus.jsonl")).unwrap(),
        &FileQueryProvider::load(&fixture("synthetic/queries.tsv")).unwrap(),
        &FileProvider::load(&fixture("synthetic/vectors.txt")).unwrap(),
        &MiningConfig::default(),
        &out,
    )
    .map_err(|e| e.to_string())?;
    ensure!(stats.records == 50, "{} records", stats.records);
    ensure!(stats.mean_negatives == Some(10.0), "mean {:?}", stats.mean_negatives);
    let exp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("synthetic/expected.json")).unwrap()).unwrap();
    for t in read_triplets(&out).unwrap() {
        let want = exp["records"][t.positive_pmid.to_string()]["first_negative"].as_u64();
        ensure!(Some(t.negative_pmids[0].get()) == want, "record {}: first negative", t.positive_pmid);
    }
    Ok("50 records, mean negatives 10.0, first negatives match oracle".into())
}

// ---------- similarity graph ----------

fn similarity_graph() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0f64;
    for p in 0..50 {
        let n = rng.gen_range(1..=64);
        let d = rng.gen_range(1..=96);
        let raw: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d)).collect();
        let pool: Vec<Embedding> = raw
            .iter()
            .enumerate()
            .map(|(i, v)| Embedding::new(i.to_string(), &to_f32(v)).unwrap())
            .collect();
        let g = build_similarity_graph(&pool, n).map_err(|e| e.to_string())?;
        for i in 0..n {
            ensure!(g.get(i, i) == 1.0, "pool {p}: diagonal {}", g.get(i, i));
            for j in 0..n {
                let s = g.get(i, j);
                ensure!(s == g.get(j, i), "pool {p}: asymmetric at ({i},{j})");
                ensure!((-1.0..=1.0).contains(&s), "pool {p}: {s} out of range");
                let diff = (f64::from(s) - cosine(&raw[i], &raw[j])).abs();
                worst = worst.max(diff);
                ensure!(diff <= 1e-6, "pool {p}: ({i},{j}) differs by {diff:e}");
            }
        }
    }
    Ok(format!("50 pools, max |diff| {worst:.1e}"))
}

// ---------- flat index ----------

fn flat_index() -> Outcome {
    let mut enc = StubEncoder::new(48, 7);
    let vs = enc.encode(1000).map_err(|e| e.to_string())?;
    let ids: Vec<String> = (0..1000).map(|i| format!("doc{i:04}")).collect();
    let index = FlatIndex::build(&vs, ids.clone()).map_err(|e| e.to_string())?;
    let qs = enc.encode(20).map_err(|e| e.to_string())?;
    let hits = index.search(&qs, 10).map_err(|e| e.to_string())?;
    for (qi, (q, h)) in qs.iter().zip(&hits).enumerate() {
        let want: Vec<String> = brute_top_k(&vs, &ids, q, 10).into_iter().map(|x| x.0).collect();
        let got: Vec<String> = h.iter().map(|x| x.doc_id.clone()).collect();
        ensure!(got == want, "query {qi}: {got:?} != {want:?}");
    }

    let big = StubEncoder::new(32, 8).encode(10_000).map_err(|e| e.to_string())?;
    let big_ids = (0..10_000).map(|i| format!("p{i}")).collect();
    let index = FlatIndex::build(&big, big_ids).map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let rep = bench(&index, &mut StubEncoder::new(32, 9), &BenchConfig::default()).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let sizes: Vec<_> = rep.rows.iter().map(|r| (r.batch_size, r.iterations)).collect();
    ensure!(sizes == vec![(1, 100), (10, 100), (2000, 10)], "rows {sizes:?}");
    let json = serde_json::to_value(&rep).unwrap();
    for (ri, row) in rep.rows.iter().enumerate() {
        ensure!(row.samples.len() == row.iterations, "row {ri}: sample count");
        for s in &row.samples {
            ensure!(s.total_ms == s.encoding_ms + s.retrieval_ms, "row {ri}: total != enc + ret");
        }
        for phase in ["encoding_ms", "retrieval_ms", "total_ms"] {
            for stat in ["avg", "p99"] {
                let v = json["rows"][ri][phase][stat].as_f64();
                ensure!(v.is_some_and(|v| v.is_finite() && v >= 0.0), "row {ri}: {phase}.{stat} missing");
            }
        }
    }
    let r = |i: usize| &rep.rows[i];
    Ok(format!(
        "1000x20 top-10 exact; 10k bench in {secs:.1}s, total avg ms {:.3}/{:.3}/{:.1}",
        r(0).total_ms.avg,
        r(1).total_ms.avg,
        r(2).total_ms.avg
    ))
}

// ---------- crawler ----------

fn crawler() -> Outcome {
    let read = |n: &str| std::fs::read(fixture(&format!("pubmed/{n}"))).unwrap();
    let exp: serde_json::Value = serde_json::from_slice(&read("expected.json")).unwrap();
    for name in ["elink_three_refs.xml", "elink_no_refs.xml"] {
        let e = &exp[name];
        let got: Vec<u64> = parse_cited_pmids(pmid(e["seed"].as_u64().unwrap()), &read(name))
            .map_err(|e| e.to_string())?
            .iter()
            .map(|p| p.get())
            .collect();
        let want: Vec<u64> = e["cited"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        ensure!(got == want, "{name}: {got:?}");
    }
    for name in ["efetch_single.xml", "efetch_structured.xml"] {
        let e = &exp[name];
        let got = parse_abstract(pmid(e["pmid"].as_u64().unwrap()), &read(name)).map_err(|e| e.to_string())?;
        ensure!(got == e["abstract"].as_str().unwrap(), "{name}: {got:?}");
    }
    ensure!(
        matches!(parse_abstract(pmid(27153975), &read("efetch_no_abstract.xml")), Err(FetchError::AbstractMissing(_))),
        "no-abstract fixture"
    );
    ensure!(
        matches!(parse_cited_pmids(pmid(31452104), &read("elink_truncated.xml")), Err(FetchError::Parse(_))),
        "truncated fixture"
    );

    let make = |rate: f64, cache: Option<DiskCache>| {
        let clock = Arc::new(MockClock::new());
        let t = Arc::new(ScriptedTransport::new(clock.clone()));
        let policy = FetchPolicy {
            max_requests_per_second: rate,
            ..FetchPolicy::default()
        };
        (PubmedClient::with_parts(policy, cache, t.clone(), clock).unwrap(), t)
    };
    let mut worst = String::new();
    for rate in [3.0, 10.0] {
        let (c, t) = make(rate, None);
        for id in 1..=60u64 {
            t.ok("efetch.fcgi", id, &read("efetch_single.xml"));
            c.fetch_abstract(pmid(id)).map_err(|e| e.to_string())?;
        }
        let peak = max_in_any_second(&t.call_times());
        ensure!(peak <= rate as usize, "rate {rate}: {peak} requests in one second");
        worst.push_str(&format!(" {peak}/{rate}"));
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (c, t) = make(3.0, Some(DiskCache::open(dir.path()).unwrap()));
    t.ok("elink.fcgi", 31452104, &read("elink_three_refs.xml"));
    c.fetch_cited_pmids(pmid(31452104)).map_err(|e| e.to_string())?;
    let (c2, t2) = make(3.0, Some(DiskCache::open(dir.path()).unwrap()));
    c2.fetch_cited_pmids(pmid(31452104)).map_err(|e| e.to_string())?;
    ensure!(t.call_count() == 1 && t2.call_count() == 0, "cache hit made a request");
    Ok(format!("fixtures parsed; peak per second{worst}; cache hit made 0 calls"))
}

// ---------- loss ----------

fn mnr() -> Outcome {
    let mut worst = 0f64;
    for k in 1..=8usize {
        let inputs = LossInputs {
            q: vec![0.6, 0.8],
            d_pos: vec![0.6, 0.8],
            d_negs: vec![vec![0.6, 0.8]; k],
        };
        let l = mnr_loss(&inputs).map_err(|e| e.to_string())?;
        let diff = (l - ((k + 1) as f64).ln()).abs();
        worst = worst.max(diff);
        ensure!(diff <= 1e-12, "K={k}: {l} vs ln({})", k + 1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..100 {
        let pos: f64 = rng.gen_range(-3.0..3.0);
        let negs: Vec<f64> = (0..rng.gen_range(1..=8)).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let up = pos + rng.gen_range(0.01..1.0);
        let (a, b) = (
            mnr_loss_from_scores(pos, &negs).unwrap(),
            mnr_loss_from_scores(up, &negs).unwrap(),
        );
        ensure!(b < a && b > 0.0, "input {i}: loss {a} -> {b} when q.d+ rose");
    }
    Ok(format!("ln(K+1) max |diff| {worst:.1e}; 100 monotonicity checks"))
}

// ---------- ablation ----------

fn ablation_grid() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let recs = read_corpus_vec(&fixture("synthetic/corpus.jsonl")).unwrap();
    let table = run_ablation(
        &recs,
        &FileQueryProvider::load(&fixture("synthetic/queries.tsv")).unwrap(),
        &FileProvider::load(&fixture("synthetic/vectors.txt")).unwrap(),
        &MiningConfig::default(),
        Some(dir.path()),
    )
    .map_err(|e| e.to_string())?;
    let got: Vec<(usize, usize)> = table.rows.iter().map(|r| (r.n_paths, r.l_path)).collect();
    let want = vec![(1, 3), (2, 3), (4, 3), (5, 3), (3, 1), (3, 2), (3, 3), (3, 4), (3, 5)];
    ensure!(got == want, "configs {got:?}");
    ensure!(ABLATION_GRID.len() == 9, "grid size");
    for r in &table.rows {
        ensure!(r.stats.records == 50, "({}, {}): {} records", r.n_paths, r.l_path, r.stats.records);
        ensure!(r.stats.mean_negatives.is_some(), "missing mean");
        ensure!(r.scores.len() == 6 && r.scores.iter().all(Option::is_none), "score cells");
        let f = dir.path().join(format!("triplets_np{}_lp{}.jsonl", r.n_paths, r.l_path));
        ensure!(read_triplets(&f).map(|t| t.len()).ok() == Some(50), "{} missing", f.display());
    }
    let md = table.to_markdown();
    ensure!(md.lines().count() == 11, "markdown has {} lines", md.lines().count());
    let means: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{:.1}", r.stats.mean_negatives.unwrap()))
        .collect();
    Ok(format!("9 settings, mean negatives {}", means.join("/")))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.get(1).map(String::as_str) == Some("--emit-child") {
        mine_to(Path::new(&args[2]), Path::new(&args[3]), Path::new(&args[4]), Path::new(&args[5]));
        return;
    }

    let criteria: [Criterion; 11] = [
        ("metric oracle equivalence", metric_oracle),
        ("miner greedy-oracle equivalence", greedy_oracle_equivalence),
        ("miner structural invariants", structural_invariants),
        ("seeded determinism", seeded_determinism),
        ("sampling-weight contract", sampling_weights),
        ("default-config count", default_count),
        ("similarity-graph checks", similarity_graph),
        ("flat-index exactness and bench", flat_index),
        ("crawler fixtures, rate limit, cache", crawler),
        ("MNR loss", mnr),
        ("ablation grid harness", ablation_grid),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        let dt = t0.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.2?}]", dt),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{:.2?}]", dt);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
