use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use super::Pmid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CacheKind {
    CitedList,
    Abstract,
}

impl CacheKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CacheKind::CitedList => "cited_list",
            CacheKind::Abstract => "abstract",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub pmid: Pmid,
    pub kind: CacheKind,
    pub payload: Vec<u8>,
    pub fetched_at: SystemTime,
}

/// Raw API payloads on disk, one file per `(pmid, kind)` named
/// `<pmid>.<kind>.xml`. Writes go through a temp file and rename so a
/// crashed crawl never leaves a half-written entry behind.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(DiskCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, pmid: Pmid, kind: CacheKind) -> PathBuf {
        self.dir.join(format!("{}.{}.xml", pmid, kind.as_str()))
    }

    pub fn get(&self, pmid: Pmid, kind: CacheKind) -> io::Result<Option<CacheEntry>> {
        let path = self.path_for(pmid, kind);
        let payload = match fs::read(&path) {
            Ok(p) => p,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        if payload.is_empty() {
            return Ok(None);
        }
        let fetched_at = fs::metadata(&path)?.modified()?;
        Ok(Some(CacheEntry {
            pmid,
            kind,
            payload,
            fetched_at,
        }))
    }

    pub fn put(&self, pmid: Pmid, kind: CacheKind, payload: &[u8]) -> io::Result<()> {
        if payload.is_empty() {
            return Ok(());
        }
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(payload)?;
        tmp.persist(self.path_for(pmid, kind))
            .map_err(|e| e.error)?;
        Ok(())
    }
}
