//! Embedding vectors and the backend boundary.
//!
//! Anything that maps text to a vector can serve as an [`Embedder`]; anything
//! that continues a prompt greedily can serve as a [`Generator`]. The local
//! implementations here are deterministic and used for offline runs and tests.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::hex_prefix;
use crate::index::tokenize_code;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("bad backend response: {0}")]
    BadResponse(String),
    #[error("backend rejected credentials")]
    Unauthorized,
    #[error("invalid backend request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VectorError {
    #[error("embedding has no components")]
    Empty,
    #[error("embedding component {0} is not finite")]
    NonFinite(usize),
    #[error("declared dim {declared} but {actual} components")]
    DimMismatch { declared: usize, actual: usize },
}

/// Dense vector with its cached Euclidean norm. Zero vectors are allowed and
/// have cosine 0 against everything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector", into = "RawVector")]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

#[derive(Serialize, Deserialize)]
struct RawVector {
    dim: usize,
    values: Vec<f64>,
    norm: f64,
}

impl TryFrom<RawVector> for EmbeddingVector {
    type Error = VectorError;
    fn try_from(raw: RawVector) -> Result<Self, Self::Error> {
        if raw.dim != raw.values.len() {
            return Err(VectorError::DimMismatch { declared: raw.dim, actual: raw.values.len() });
        }
        EmbeddingVector::new(raw.values)
    }
}

impl From<EmbeddingVector> for RawVector {
    fn from(v: EmbeddingVector) -> Self {
        RawVector { dim: v.values.len(), values: v.values, norm: v.norm }
    }
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        let norm = l2_norm(&values);
        Ok(EmbeddingVector { values, norm })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self, VectorError> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector { values: alloc::vec![0.0; dim.max(1)], norm: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }

    /// Cosine similarity clamped to [-1, 1]; 0 if either side is a zero vector
    /// or the dimensions differ.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        if self.dim() != other.dim() || self.is_zero() || other.is_zero() {
            return 0.0;
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        (dot / (self.norm * other.norm)).clamp(-1.0, 1.0)
    }
}

pub(crate) fn l2_norm(values: &[f64]) -> f64 {
    libm::sqrt(values.iter().map(|v| v * v).sum())
}

pub trait Embedder: Sync {
    fn model_name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError>;
}

/// Greedy text continuation. Implementations return the continuation only.
pub trait Generator: Sync {
    fn model_name(&self) -> &str;
    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, BackendError>;
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        (**self).embed(text)
    }
}

impl<T: Generator + ?Sized> Generator for &T {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, BackendError> {
        (**self).generate(prompt, max_tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Local,
    Remote,
}

fn default_model() -> String {
    String::from("local-hash")
}
fn default_dim() -> usize {
    256
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_embed_path() -> String {
    String::from("/embed")
}
fn default_generate_path() -> String {
    String::from("/generate")
}

/// Backend description shared by the embedding and generation roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Base URL of a remote service; required when `kind` is `remote`.
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default = "default_embed_path")]
    pub embed_path: String,
    #[serde(default = "default_generate_path")]
    pub generate_path: String,
    #[serde(default = "default_model")]
    pub model_name: String,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env_var: Option<String>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Local generation script: JSON object mapping prompt hash to continuation.
    #[serde(default)]
    pub script_path: Option<String>,
    /// Free-form notes, e.g. which tokens a remote embedder averages over.
    #[serde(default)]
    pub notes: Option<String>,
}

impl BackendConfig {
    pub fn local(dim: usize) -> Self {
        BackendConfig {
            kind: BackendKind::Local,
            endpoint_url: None,
            embed_path: default_embed_path(),
            generate_path: default_generate_path(),
            model_name: default_model(),
            api_key_env_var: None,
            dim,
            timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            script_path: None,
            notes: None,
        }
    }

    pub fn remote(endpoint_url: impl Into<String>, model_name: impl Into<String>, dim: usize) -> Self {
        BackendConfig {
            kind: BackendKind::Remote,
            endpoint_url: Some(endpoint_url.into()),
            model_name: model_name.into(),
            ..Self::local(dim)
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.dim == 0 {
            return Err(BackendError::InvalidRequest(String::from("dim must be at least 1")));
        }
        if self.kind == BackendKind::Remote && self.endpoint_url.as_deref().map_or(true, str::is_empty) {
            return Err(BackendError::InvalidRequest(String::from("remote backend requires endpoint_url")));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashed unigram + bigram term-frequency embedding, L2-normalized.
/// Text without tokens maps to the zero vector.
pub fn local_embed(text: &str, dim: usize) -> EmbeddingVector {
    let dim = dim.max(1);
    let tokens = tokenize_code(text);
    let mut values = alloc::vec![0.0f64; dim];
    let mut bump = |feature: &[u8]| {
        values[(fnv1a(feature) % dim as u64) as usize] += 1.0;
    };
    for t in &tokens {
        bump(t.as_bytes());
    }
    let mut pair = Vec::new();
    for w in tokens.windows(2) {
        pair.clear();
        pair.extend_from_slice(w[0].as_bytes());
        pair.push(b' ');
        pair.extend_from_slice(w[1].as_bytes());
        bump(&pair);
    }
    let norm = l2_norm(&values);
    if norm == 0.0 {
        return EmbeddingVector::zeros(dim);
    }
    for v in &mut values {
        *v /= norm;
    }
    EmbeddingVector { norm: l2_norm(&values), values }
}

/// Deterministic embedder backed by [`local_embed`].
#[derive(Debug, Clone)]
pub struct LocalEmbedder {
    dim: usize,
    name: String,
}

impl LocalEmbedder {
    pub fn new(dim: usize) -> Self {
        LocalEmbedder { dim: dim.max(1), name: alloc::format!("local-hash-{}", dim.max(1)) }
    }
}

impl Embedder for LocalEmbedder {
    fn model_name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        Ok(local_embed(text, self.dim))
    }
}

/// SHA-256 of the prompt, lowercase hex. Keys the scripted generator.
pub fn prompt_hash(prompt: &str) -> String {
    hex_prefix(&Sha256::digest(prompt.as_bytes()))
}

/// Local mock generator: continuations looked up by prompt hash, empty when unkeyed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptedGenerator {
    table: BTreeMap<String, String>,
}

impl ScriptedGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_table(table: BTreeMap<String, String>) -> Self {
        ScriptedGenerator { table }
    }

    /// Scripts `continuation` for this exact prompt.
    pub fn script(&mut self, prompt: &str, continuation: impl Into<String>) {
        self.table.insert(prompt_hash(prompt), continuation.into());
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Generator for ScriptedGenerator {
    fn model_name(&self) -> &str {
        "local-script"
    }

    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, BackendError> {
        if max_tokens == 0 {
            return Err(BackendError::InvalidRequest(String::from("max_tokens must be at least 1")));
        }
        Ok(self.table.get(&prompt_hash(prompt)).cloned().unwrap_or_default())
    }
}
