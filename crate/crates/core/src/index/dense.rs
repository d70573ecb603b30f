use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{rank_desc, IndexError};
use crate::embed::EmbeddingVector;

pub const DENSE_MAGIC: &[u8; 4] = b"PDIX";
pub const DENSE_VERSION: u16 = 1;

/// Exact cosine index. Rows are stored as `f32`, matching the on-disk format,
/// so persistence is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    ids: Vec<String>,
    rows: Vec<f32>,
    norms: Vec<f64>,
    positions: BTreeMap<String, usize>,
}

impl DenseIndex {
    pub fn new(dim: usize) -> Self {
        DenseIndex { dim, ids: Vec::new(), rows: Vec::new(), norms: Vec::new(), positions: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, snippet_id: &str) -> Option<&[f32]> {
        self.positions.get(snippet_id).map(|&i| self.row(i))
    }

    pub fn add(&mut self, snippet_id: &str, v: &EmbeddingVector) -> Result<(), IndexError> {
        if v.dim() != self.dim {
            return Err(IndexError::DimMismatch { expected: self.dim, actual: v.dim() });
        }
        self.add_row(snippet_id, &v.to_f32())
    }

    pub fn add_row(&mut self, snippet_id: &str, row: &[f32]) -> Result<(), IndexError> {
        if row.len() != self.dim {
            return Err(IndexError::DimMismatch { expected: self.dim, actual: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::Corrupt(String::from("non-finite row value")));
        }
        if self.positions.contains_key(snippet_id) {
            return Err(IndexError::DuplicateId(String::from(snippet_id)));
        }
        self.positions.insert(String::from(snippet_id), self.ids.len());
        self.ids.push(String::from(snippet_id));
        self.rows.extend_from_slice(row);
        self.norms.push(libm::sqrt(row.iter().map(|&x| f64::from(x) * f64::from(x)).sum()));
        Ok(())
    }

    fn cosine_at(&self, i: usize, query: &EmbeddingVector) -> f64 {
        let norm = self.norms[i];
        if norm == 0.0 || query.is_zero() {
            return 0.0;
        }
        let dot: f64 = self.row(i).iter().zip(query.values()).map(|(&r, q)| f64::from(r) * q).sum();
        (dot / (norm * query.norm())).clamp(-1.0, 1.0)
    }

    /// Brute-force top-k by cosine; ties by ascending snippet id.
    pub fn topk(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<(String, f64)>, IndexError> {
        if query.dim() != self.dim {
            return Err(IndexError::DimMismatch { expected: self.dim, actual: query.dim() });
        }
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let scored = (0..self.len()).map(|i| (self.ids[i].clone(), self.cosine_at(i, query))).collect();
        Ok(rank_desc(scored, k))
    }

    /// Serializes to the `PDIX` binary format: magic, version (u16), dim (u32),
    /// count (u64), rows of `(id_len u16, id, dim x f32)`, then a CRC32 of all
    /// preceding bytes. Integers and floats are little-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + self.rows.len() * 4 + self.ids.len() * 20 + 4);
        out.extend_from_slice(DENSE_MAGIC);
        out.extend_from_slice(&DENSE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for i in 0..self.len() {
            encode_row_into(&mut out, &self.ids[i], self.row(i));
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, IndexError> {
        let corrupt = |m: &str| IndexError::Corrupt(String::from(m));
        if bytes.len() < 22 {
            return Err(corrupt("file too short"));
        }
        let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
        if &body[..4] != DENSE_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let stored_crc = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        if crc32fast::hash(body) != stored_crc {
            return Err(corrupt("checksum mismatch"));
        }
        let version = u16::from_le_bytes([body[4], body[5]]);
        if version != DENSE_VERSION {
            return Err(IndexError::Corrupt(alloc::format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(body[6..10].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(body[10..18].try_into().unwrap());
        let mut index = DenseIndex::new(dim);
        let mut cursor = &body[18..];
        for _ in 0..count {
            let (id, row, rest) = decode_row(cursor, dim)?;
            index.add_row(&id, &row)?;
            cursor = rest;
        }
        if !cursor.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(index)
    }
}

pub fn dense_index_add(index: &mut DenseIndex, snippet_id: &str, v: &EmbeddingVector) -> Result<(), IndexError> {
    index.add(snippet_id, v)
}

pub fn dense_topk(index: &DenseIndex, query: &EmbeddingVector, k: usize) -> Result<Vec<(String, f64)>, IndexError> {
    index.topk(query, k)
}

fn encode_row_into(out: &mut Vec<u8>, id: &str, row: &[f32]) {
    out.extend_from_slice(&(id.len() as u16).to_le_bytes());
    out.extend_from_slice(id.as_bytes());
    for v in row {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// One `(id_len u16, id, f32...)` record, the unit shared with embedding caches.
pub fn encode_row(id: &str, row: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 + id.len() + row.len() * 4);
    encode_row_into(&mut out, id, row);
    out
}

/// Decodes one record of `dim` floats; returns the remaining bytes.
pub fn decode_row(bytes: &[u8], dim: usize) -> Result<(String, Vec<f32>, &[u8]), IndexError> {
    let corrupt = |m: &str| IndexError::Corrupt(String::from(m));
    if bytes.len() < 2 {
        return Err(corrupt("truncated record header"));
    }
    let id_len = u16::from_le_bytes([bytes[0], bytes[1]]) as usize;
    let need = 2 + id_len + dim * 4;
    if bytes.len() < need {
        return Err(corrupt("truncated record"));
    }
    let id = core::str::from_utf8(&bytes[2..2 + id_len]).map_err(|_| corrupt("record id is not UTF-8"))?;
    let row = bytes[2 + id_len..need]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((String::from(id), row, &bytes[need..]))
}
