//! Similarity primitives and retrieval stores.

mod bm25;
mod dense;
mod tokenize;

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub use bm25::{bm25_build_index, bm25_query, SparseIndex, DEFAULT_B, DEFAULT_K1};
pub use dense::{decode_row, dense_index_add, dense_topk, encode_row, DenseIndex, DENSE_MAGIC, DENSE_VERSION};
pub use tokenize::{jaccard_similarity, tokenize_code};
pub(crate) use tokenize::jaccard_sets;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("dimension mismatch: index has {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("duplicate snippet id {0}")]
    DuplicateId(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("cannot build an index from an empty corpus")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("corrupt index: {0}")]
    Corrupt(String),
}

/// Sorts by score descending, ties by ascending id, and keeps the first `k`.
pub(crate) fn rank_desc(mut scored: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    for (_, s) in scored.iter_mut() {
        if *s == 0.0 {
            *s = 0.0;
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}
