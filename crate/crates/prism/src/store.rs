//! On-disk artifacts: JSON Lines, JSON documents, dense and sparse indexes,
//! and the content-addressed embedding cache.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use prism_core::corpus::CodeSnippet;
use prism_core::index::{decode_row, encode_row, DenseIndex, IndexError, SparseIndex};
use prism_core::retrieve::EmbeddingCache;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::PrismError;

pub fn ensure_dir(dir: &Path) -> Result<(), PrismError> {
    fs::create_dir_all(dir).map_err(|e| PrismError::io(dir, e))
}

/// Writes to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PrismError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| PrismError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| PrismError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, PrismError> {
    fs::read(path).map_err(|e| PrismError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PrismError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PrismError> {
    let text = fs::read_to_string(path).map_err(|e| PrismError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PrismError::Json { path: path.into(), line: e.line(), message: e.to_string() })
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), PrismError> {
    let mut out = Vec::new();
    {
        let mut w = BufWriter::new(&mut out);
        for r in records {
            serde_json::to_writer(&mut w, r).expect("artifact types serialize");
            w.write_all(b"\n").expect("writing to memory");
        }
    }
    write_atomic(path, &out)
}

/// Reads one JSON object per line; blank lines are ignored.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PrismError> {
    let file = fs::File::open(path).map_err(|e| PrismError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PrismError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| PrismError::Json { path: path.into(), line: i + 1, message: e.to_string() })?;
        out.push(record);
    }
    Ok(out)
}

fn meta_path(index_path: &Path) -> PathBuf {
    let mut p = index_path.as_os_str().to_owned();
    p.push(".meta.jsonl");
    PathBuf::from(p)
}

/// Saves the binary index plus a `<path>.meta.jsonl` sidecar holding the
/// snippet records in index row order.
pub fn save_dense(path: &Path, index: &DenseIndex, snippets: &[CodeSnippet]) -> Result<(), PrismError> {
    let by_id: std::collections::BTreeMap<&str, &CodeSnippet> = snippets.iter().map(|s| (s.snippet_id.as_str(), s)).collect();
    let meta: Vec<&CodeSnippet> = index.ids().iter().filter_map(|id| by_id.get(id.as_str()).copied()).collect();
    write_atomic(path, &index.encode())?;
    write_jsonl(&meta_path(path), &meta)
}

pub fn load_dense(path: &Path) -> Result<DenseIndex, PrismError> {
    Ok(DenseIndex::decode(&read_bytes(path)?)?)
}

pub fn load_dense_meta(path: &Path) -> Result<Vec<CodeSnippet>, PrismError> {
    read_jsonl(&meta_path(path))
}

pub fn save_sparse(path: &Path, index: &SparseIndex) -> Result<(), PrismError> {
    write_json(path, index)
}

pub fn load_sparse(path: &Path) -> Result<SparseIndex, PrismError> {
    let index: SparseIndex = read_json(path)?;
    index.check_invariants()?;
    Ok(index)
}

/// Embedding cache with one file per key under `root/<first two hex chars>/`.
/// Each file holds a single dense-index row record whose id is the key.
#[derive(Debug, Clone)]
pub struct DirCache {
    root: PathBuf,
}

impl DirCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirCache { root: root.into() }
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("xx");
        self.root.join(shard).join(format!("{key}.vec"))
    }

    pub fn entry_count(&self) -> usize {
        walkdir::WalkDir::new(&self.root)
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "vec"))
            .count()
    }
}

fn decode_cache_record(bytes: &[u8], key: &str) -> Result<Vec<f32>, IndexError> {
    let id_len = bytes.get(..2).map(|b| u16::from_le_bytes([b[0], b[1]]) as usize).unwrap_or(0);
    let payload = bytes.len().saturating_sub(2 + id_len);
    if bytes.len() < 2 + id_len || payload % 4 != 0 {
        return Err(IndexError::Corrupt(String::from("bad cache record length")));
    }
    let (id, row, _) = decode_row(bytes, payload / 4)?;
    if id != key {
        return Err(IndexError::Corrupt(String::from("cache record key mismatch")));
    }
    Ok(row)
}

impl EmbeddingCache for DirCache {
    fn get(&self, key: &str) -> Option<Vec<f32>> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        decode_cache_record(&bytes, key).ok()
    }

    fn put(&self, key: &str, row: &[f32]) {
        // A failed write only costs a recomputation later.
        let _ = write_atomic(&self.path_for(key), &encode_row(key, row));
    }
}
