//! Plain-text vector files:
//!
//! ```text
//! dim=<d> count=<n> provider=<id>
//! <doc_id> <v1> ... <vd>
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VectorFileError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

fn format_err(line: usize, message: impl Into<String>) -> VectorFileError {
    VectorFileError::Format {
        line,
        message: message.into(),
    }
}

/// Raw (not necessarily normalized) vectors keyed by document id.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    dim: usize,
    provider_id: String,
    ids: Vec<String>,
    values: Vec<f32>,
    index: HashMap<String, usize>,
}

impl VectorTable {
    pub fn new(dim: usize, provider_id: impl Into<String>) -> Self {
        VectorTable {
            dim,
            provider_id: provider_id.into(),
            ids: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Inserts or replaces a vector. Panics on a dimension mismatch or an id
    /// containing whitespace, both of which would corrupt the file format.
    pub fn insert(&mut self, id: impl Into<String>, v: &[f32]) {
        let id = id.into();
        assert_eq!(v.len(), self.dim, "dimension mismatch for {id}");
        assert!(
            !id.is_empty() && !id.contains(char::is_whitespace),
            "bad doc id {id:?}"
        );
        if let Some(&i) = self.index.get(&id) {
            self.values[i * self.dim..(i + 1) * self.dim].copy_from_slice(v);
            return;
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.values.extend_from_slice(v);
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index
            .get(id)
            .map(|&i| &self.values[i * self.dim..(i + 1) * self.dim])
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn load(path: &Path) -> Result<Self, VectorFileError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, VectorFileError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| format_err(1, "missing header"))?;
        let mut dim = None;
        let mut count = None;
        let mut provider = None;
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| format_err(1, format!("bad header field {field:?}")))?;
            match k {
                "dim" => dim = v.parse::<usize>().ok(),
                "count" => count = v.parse::<usize>().ok(),
                "provider" => provider = Some(v.to_string()),
                _ => return Err(format_err(1, format!("unknown header key {k:?}"))),
            }
        }
        let (dim, count, provider) = match (dim, count, provider) {
            (Some(d), Some(c), Some(p)) if d > 0 => (d, c, p),
            _ => return Err(format_err(1, "header must be dim=<d> count=<n> provider=<id>")),
        };

        let mut table = VectorTable::new(dim, provider);
        let mut row = Vec::with_capacity(dim);
        for (i, line) in lines {
            let line_no = i + 1;
            let mut parts = line.split_whitespace();
            let id = parts.next().unwrap();
            row.clear();
            for tok in parts {
                let v: f32 = tok
                    .parse()
                    .map_err(|_| format_err(line_no, format!("bad value {tok:?}")))?;
                if !v.is_finite() {
                    return Err(format_err(line_no, "non-finite value"));
                }
                row.push(v);
            }
            if row.len() != dim {
                return Err(format_err(
                    line_no,
                    format!("expected {dim} values for {id}, found {}", row.len()),
                ));
            }
            if table.index.contains_key(id) {
                return Err(format_err(line_no, format!("duplicate id {id}")));
            }
            table.insert(id, &row);
        }
        if table.len() != count {
            return Err(format_err(
                1,
                format!("header declares count={count} but file has {} vectors", table.len()),
            ));
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "dim={} count={} provider={}\n",
            self.dim,
            self.len(),
            self.provider_id
        );
        for (i, id) in self.ids.iter().enumerate() {
            s.push_str(id);
            for v in self.row(i) {
                write!(s, " {v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_text())
    }
}
