//! TREC-style qrels and run files.
//!
//! qrels: `query_id 0 doc_id grade`
//! run:   `query_id Q0 doc_id rank score tag`

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use super::EvalError;

/// Relevance judgments: query → doc → non-negative grade.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.judgments
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade);
    }

    pub fn query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn queries(&self) -> impl Iterator<Item = (&String, &BTreeMap<String, u32>)> {
        self.judgments.iter()
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut q = Qrels::new();
        for (i, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            if f.len() != 4 {
                return Err(EvalError::Format {
                    line: i + 1,
                    message: format!("expected 4 fields, found {}", f.len()),
                });
            }
            // Negative grades (seen in some TREC sets) are treated as 0.
            let grade: i64 = f[3].parse().map_err(|_| EvalError::Format {
                line: i + 1,
                message: format!("bad grade {:?}", f[3]),
            })?;
            q.insert(f[0], f[2], grade.max(0) as u32);
        }
        Ok(q)
    }
}

/// Per-query ranked lists, best first. Ties on score are ordered by doc id
/// ascending so metrics are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRanking {
    rankings: BTreeMap<String, Vec<(String, f64)>>,
}

impl RunRanking {
    /// Sorts each list by (score desc, doc_id asc). Duplicate doc ids within
    /// a query and non-finite scores are rejected.
    pub fn new(rankings: BTreeMap<String, Vec<(String, f64)>>) -> Result<Self, EvalError> {
        let mut out = BTreeMap::new();
        for (qid, mut docs) in rankings {
            let mut seen = HashSet::new();
            for (d, s) in &docs {
                if !s.is_finite() {
                    return Err(EvalError::InvalidRun(format!("non-finite score for {qid}/{d}")));
                }
                if !seen.insert(d.clone()) {
                    return Err(EvalError::InvalidRun(format!("duplicate doc {d} for query {qid}")));
                }
            }
            docs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            out.insert(qid, docs);
        }
        Ok(RunRanking { rankings: out })
    }

    pub fn ranked(&self, query_id: &str) -> Option<&[(String, f64)]> {
        self.rankings.get(query_id).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = &String> {
        self.rankings.keys()
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The rank column is ignored; order comes from scores.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut map: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            if f.len() != 6 {
                return Err(EvalError::Format {
                    line: i + 1,
                    message: format!("expected 6 fields, found {}", f.len()),
                });
            }
            let score: f64 = f[4].parse().map_err(|_| EvalError::Format {
                line: i + 1,
                message: format!("bad score {:?}", f[4]),
            })?;
            map.entry(f[0].to_string())
                .or_default()
                .push((f[2].to_string(), score));
        }
        Self::new(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qrels_parse() {
        let q = Qrels::parse("q1 0 d1 2\nq1 0 d2 0\n\nq2 0 d9 -1\n").unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q.query("q1").unwrap()["d1"], 2);
        assert_eq!(q.query("q2").unwrap()["d9"], 0);
        assert!(matches!(
            Qrels::parse("q1 0 d1\n"),
            Err(EvalError::Format { line: 1, .. })
        ));
    }

    #[test]
    fn run_sorting_and_ties() {
        let r = RunRanking::parse("q1 Q0 b 1 0.5 t\nq1 Q0 a 2 0.5 t\nq1 Q0 c 3 0.9 t\n").unwrap();
        let ids: Vec<_> = r.ranked("q1").unwrap().iter().map(|x| x.0.as_str()).collect();
        assert_eq!(ids, vec!["c", "a", "b"]);
        assert!(RunRanking::parse("q1 Q0 a 1 0.5 t\nq1 Q0 a 2 0.4 t\n").is_err());
        assert!(RunRanking::parse("q1 Q0 a 1 x t\n").is_err());
    }
}
