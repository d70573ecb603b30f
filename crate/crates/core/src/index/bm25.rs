use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{rank_desc, tokenize_code, IndexError};
use crate::corpus::CodeSnippet;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Okapi BM25 statistics over tokenized snippets.
///
/// Scoring uses the non-negative IDF `ln(1 + (N - df + 0.5) / (df + 0.5))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex {
    pub doc_term_freqs: BTreeMap<String, BTreeMap<String, u32>>,
    pub doc_lengths: BTreeMap<String, u32>,
    pub avg_doc_length: f64,
    pub doc_freq: BTreeMap<String, u32>,
    pub n_docs: usize,
    pub k1: f64,
    pub b: f64,
}

pub fn bm25_build_index(snippets: &[CodeSnippet], k1: f64, b: f64) -> Result<SparseIndex, IndexError> {
    if snippets.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let mut doc_term_freqs = BTreeMap::new();
    let mut doc_lengths = BTreeMap::new();
    let mut doc_freq: BTreeMap<String, u32> = BTreeMap::new();
    for s in snippets {
        let tokens = tokenize_code(&s.text);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens.iter() {
            *tf.entry(t.clone()).or_default() += 1;
        }
        for term in tf.keys() {
            *doc_freq.entry(term.clone()).or_default() += 1;
        }
        if doc_lengths.insert(s.snippet_id.clone(), tokens.len() as u32).is_some() {
            return Err(IndexError::DuplicateId(s.snippet_id.clone()));
        }
        doc_term_freqs.insert(s.snippet_id.clone(), tf);
    }
    let total: u64 = doc_lengths.values().map(|&l| u64::from(l)).sum();
    let n_docs = doc_lengths.len();
    Ok(SparseIndex {
        avg_doc_length: total as f64 / n_docs as f64,
        doc_term_freqs,
        doc_lengths,
        doc_freq,
        n_docs,
        k1,
        b,
    })
}

impl SparseIndex {
    pub fn idf(&self, term: &str) -> f64 {
        let df = f64::from(self.doc_freq.get(term).copied().unwrap_or(0));
        let n = self.n_docs as f64;
        libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    /// BM25 score of one document against distinct query terms.
    pub fn score(&self, snippet_id: &str, query_terms: &[String]) -> f64 {
        let Some(tfs) = self.doc_term_freqs.get(snippet_id) else {
            return 0.0;
        };
        let dl = f64::from(self.doc_lengths.get(snippet_id).copied().unwrap_or(0));
        let mut score = 0.0;
        for term in query_terms {
            let Some(&tf) = tfs.get(term) else { continue };
            let tf = f64::from(tf);
            let norm = 1.0 - self.b + self.b * dl / self.avg_doc_length;
            score += self.idf(term) * tf * (self.k1 + 1.0) / (tf + self.k1 * norm);
        }
        score
    }

    /// Top `k` documents by score; ties by ascending snippet id. Every document
    /// is eligible, so zero scores are returned when no query term matches.
    pub fn query(&self, query_text: &str, k: usize) -> Result<Vec<(String, f64)>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let mut terms = tokenize_code(query_text);
        terms.sort();
        terms.dedup();
        let scored = self
            .doc_term_freqs
            .keys()
            .map(|id| (id.clone(), self.score(id, &terms)))
            .collect();
        Ok(rank_desc(scored, k))
    }

    pub fn check_invariants(&self) -> Result<(), IndexError> {
        if self.n_docs != self.doc_lengths.len() || self.n_docs != self.doc_term_freqs.len() {
            return Err(IndexError::Corrupt(String::from("document count mismatch")));
        }
        if self.doc_freq.values().any(|&df| df as usize > self.n_docs) {
            return Err(IndexError::Corrupt(String::from("doc_freq exceeds n_docs")));
        }
        let total: u64 = self.doc_lengths.values().map(|&l| u64::from(l)).sum();
        if self.n_docs > 0 && (total as f64 / self.n_docs as f64 - self.avg_doc_length).abs() > 1e-9 {
            return Err(IndexError::Corrupt(String::from("avg_doc_length mismatch")));
        }
        Ok(())
    }
}

pub fn bm25_query(index: &SparseIndex, query_text: &str, k: usize) -> Result<Vec<(String, f64)>, IndexError> {
    index.query(query_text, k)
}
