//! Prompt-based multi-perspective retrieval.
//!
//! Each perspective turns code into text through a prompt template and embeds
//! either the prompt itself (lexical) or the generator's continuation of it
//! (hypothetical line, summary). BM25 over raw snippet text is available as an
//! extra perspective.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{hex_prefix, CodeSnippet, CompletionTask};
use crate::embed::{BackendError, Embedder, EmbeddingVector, Generator};
use crate::index::{bm25_build_index, jaccard_sets, tokenize_code, DenseIndex, IndexError, SparseIndex, DEFAULT_B, DEFAULT_K1};
use crate::text::{first_lines, last_lines};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetrieveError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("perspective {0} has no prompt template")]
    UnsupportedPerspective(PerspectiveId),
    #[error("template {template_no} does not belong to perspective {id}")]
    InvalidTemplate { id: PerspectiveId, template_no: u8 },
    #[error("perspective {0} needs a generator")]
    MissingGenerator(PerspectiveId),
    #[error("index kind does not match perspective {0}")]
    IndexKindMismatch(PerspectiveId),
    #[error("snippet {0} is not in the snippet store")]
    UnknownSnippet(String),
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Perspective family; the declaration order is the arm order used by selectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerspectiveId {
    Lexical,
    HypoLine,
    Summary,
    Bm25,
}

impl PerspectiveId {
    pub fn as_str(self) -> &'static str {
        match self {
            PerspectiveId::Lexical => "lexical",
            PerspectiveId::HypoLine => "hypo_line",
            PerspectiveId::Summary => "summary",
            PerspectiveId::Bm25 => "bm25",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lexical" => Some(PerspectiveId::Lexical),
            "hypo_line" | "hypoline" | "hypo" => Some(PerspectiveId::HypoLine),
            "summary" => Some(PerspectiveId::Summary),
            "bm25" => Some(PerspectiveId::Bm25),
            _ => None,
        }
    }

    fn templates(self) -> &'static [u8] {
        match self {
            PerspectiveId::Lexical => &[1, 2],
            PerspectiveId::HypoLine => &[3, 4],
            PerspectiveId::Summary => &[5, 6],
            PerspectiveId::Bm25 => &[0],
        }
    }
}

impl fmt::Display for PerspectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Perspective {
    pub id: PerspectiveId,
    /// Prompt template number (1-6); 0 for BM25.
    pub template_no: u8,
}

impl Perspective {
    pub const LEXICAL: Perspective = Perspective { id: PerspectiveId::Lexical, template_no: 1 };
    pub const HYPO_LINE: Perspective = Perspective { id: PerspectiveId::HypoLine, template_no: 3 };
    pub const SUMMARY: Perspective = Perspective { id: PerspectiveId::Summary, template_no: 5 };
    pub const BM25: Perspective = Perspective { id: PerspectiveId::Bm25, template_no: 0 };

    pub fn new(id: PerspectiveId, template_no: u8) -> Result<Self, RetrieveError> {
        let p = Perspective { id, template_no };
        p.validate()?;
        Ok(p)
    }

    /// Default perspective for a family (templates 1, 3, 5).
    pub fn default_for(id: PerspectiveId) -> Self {
        match id {
            PerspectiveId::Lexical => Self::LEXICAL,
            PerspectiveId::HypoLine => Self::HYPO_LINE,
            PerspectiveId::Summary => Self::SUMMARY,
            PerspectiveId::Bm25 => Self::BM25,
        }
    }

    pub fn defaults() -> [Perspective; 3] {
        [Self::LEXICAL, Self::HYPO_LINE, Self::SUMMARY]
    }

    pub fn validate(&self) -> Result<(), RetrieveError> {
        if self.id.templates().contains(&self.template_no) {
            Ok(())
        } else {
            Err(RetrieveError::InvalidTemplate { id: self.id, template_no: self.template_no })
        }
    }

    pub fn is_generative(&self) -> bool {
        matches!(self.id, PerspectiveId::HypoLine | PerspectiveId::Summary)
    }

    /// Stable key such as `summary#5`, used in cache keys and file names.
    pub fn key(&self) -> String {
        alloc::format!("{}#{}", self.id.as_str(), self.template_no)
    }
}

/// Literal prompt templates, indexed by template number.
pub const TEMPLATES: [&str; 6] = [
    "Embedding the following code snippets: [code]",
    "Representing the following code snippets: [code]",
    "<PRE> [Prefix] <SUF> [Suffix] <MID>",
    "Complete the code snippets [code]",
    "This code snippets of [code] means",
    "Summarize the code snippets [code]",
];

/// What a template is instantiated with: plain code or a prefix/suffix hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptInput<'a> {
    Code(&'a str),
    Hole { prefix: &'a str, suffix: &'a str },
}

/// Instantiates the perspective's template. `[code]` templates given a hole
/// render it with a `<MID>` marker line; the FIM template given plain code
/// treats it as a prefix with an empty suffix.
pub fn build_prompt(p: &Perspective, input: PromptInput<'_>) -> Result<String, RetrieveError> {
    if p.id == PerspectiveId::Bm25 {
        return Err(RetrieveError::UnsupportedPerspective(p.id));
    }
    p.validate()?;
    let template = TEMPLATES[usize::from(p.template_no) - 1];
    if p.template_no == 3 {
        let (prefix, suffix) = match input {
            PromptInput::Code(c) => (c, ""),
            PromptInput::Hole { prefix, suffix } => (prefix, suffix),
        };
        return Ok(fill_fim(template, prefix, suffix));
    }
    let rendered;
    let code = match input {
        PromptInput::Code(c) => c,
        PromptInput::Hole { prefix, suffix } => {
            rendered = render_hole(prefix, suffix, usize::MAX, usize::MAX);
            rendered.as_str()
        }
    };
    let (head, tail) = template.split_once("[code]").unwrap();
    let mut out = String::with_capacity(template.len() + code.len());
    out.push_str(head);
    out.push_str(code);
    out.push_str(tail);
    Ok(out)
}

fn fill_fim(template: &str, prefix: &str, suffix: &str) -> String {
    let (pre, rest) = template.split_once("[Prefix]").unwrap();
    let (mid, post) = rest.split_once("[Suffix]").unwrap();
    let mut out = String::with_capacity(template.len() + prefix.len() + suffix.len());
    out.push_str(pre);
    out.push_str(prefix);
    out.push_str(mid);
    out.push_str(suffix);
    out.push_str(post);
    out
}

/// Tail of the prefix, a `<MID>` marker line, head of the suffix, joined by newlines.
pub fn render_unfinished(task: &CompletionTask, max_prefix_lines: usize, max_suffix_lines: usize) -> String {
    render_hole(&task.prefix, &task.suffix, max_prefix_lines, max_suffix_lines)
}

pub fn render_hole(prefix: &str, suffix: &str, max_prefix_lines: usize, max_suffix_lines: usize) -> String {
    let mut parts: Vec<&str> = Vec::new();
    if max_prefix_lines > 0 {
        let mut tail: Vec<&str> = prefix.lines().rev().take(max_prefix_lines).collect();
        tail.reverse();
        parts.extend(tail);
    }
    parts.push("<MID>");
    let suffix = suffix.strip_prefix('\n').unwrap_or(suffix);
    parts.extend(suffix.lines().take(max_suffix_lines));
    parts.join("\n")
}

/// Knobs shared by index construction and querying.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Snippets retrieved per perspective.
    pub k: usize,
    pub max_prefix_lines: usize,
    pub max_suffix_lines: usize,
    pub hypo_max_tokens: usize,
    pub summary_max_tokens: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { k: 1, max_prefix_lines: 32, max_suffix_lines: 16, hypo_max_tokens: 48, summary_max_tokens: 64 }
    }
}

/// Per-snippet embedding cache, keyed by [`cache_key`]. Implementations use
/// interior mutability so shared handles can be written.
pub trait EmbeddingCache {
    fn get(&self, key: &str) -> Option<Vec<f32>>;
    fn put(&self, key: &str, row: &[f32]);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoCache;

impl EmbeddingCache for NoCache {
    fn get(&self, _key: &str) -> Option<Vec<f32>> {
        None
    }
    fn put(&self, _key: &str, _row: &[f32]) {}
}

#[derive(Debug, Default)]
pub struct MemoryCache {
    entries: RefCell<BTreeMap<String, Vec<f32>>>,
}

impl MemoryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.borrow().is_empty()
    }
}

impl EmbeddingCache for MemoryCache {
    fn get(&self, key: &str) -> Option<Vec<f32>> {
        self.entries.borrow().get(key).cloned()
    }
    fn put(&self, key: &str, row: &[f32]) {
        self.entries.borrow_mut().insert(String::from(key), row.to_vec());
    }
}

/// SHA-256 over `snippet_id ++ perspective ++ model_name`, lowercase hex.
pub fn cache_key(snippet_id: &str, perspective: &Perspective, model_name: &str) -> String {
    let mut h = Sha256::new();
    h.update(snippet_id.as_bytes());
    h.update(perspective.key().as_bytes());
    h.update(model_name.as_bytes());
    hex_prefix(&h.finalize())
}

/// Model identity that determines a perspective's representation.
pub fn representation_model(p: &Perspective, embedder: &dyn Embedder, generator: Option<&dyn Generator>) -> String {
    match (p.is_generative(), generator) {
        (true, Some(g)) => alloc::format!("{}+{}", embedder.model_name(), g.model_name()),
        _ => String::from(embedder.model_name()),
    }
}

/// Splits a snippet around its middle line (index `n / 2`), dropping that line.
pub fn mask_middle_line(text: &str) -> (String, String) {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    if lines.is_empty() {
        return (String::new(), String::new());
    }
    let mid = lines.len() / 2;
    (lines[..mid].concat(), lines[mid + 1..].concat())
}

/// Prompt issued for a snippet while building a perspective's index.
pub fn snippet_prompt(p: &Perspective, snippet: &CodeSnippet) -> Result<String, RetrieveError> {
    match p.id {
        PerspectiveId::Lexical | PerspectiveId::Summary => build_prompt(p, PromptInput::Code(&snippet.text)),
        PerspectiveId::HypoLine => {
            let (prefix, suffix) = mask_middle_line(&snippet.text);
            build_prompt(p, PromptInput::Hole { prefix: &prefix, suffix: &suffix })
        }
        PerspectiveId::Bm25 => Err(RetrieveError::UnsupportedPerspective(p.id)),
    }
}

/// Prompt issued for an unfinished task at query time.
pub fn query_prompt(p: &Perspective, task: &CompletionTask, cfg: &RetrievalConfig) -> Result<String, RetrieveError> {
    match p.id {
        PerspectiveId::HypoLine if p.template_no == 3 => build_prompt(
            p,
            PromptInput::Hole {
                prefix: last_lines(&task.prefix, cfg.max_prefix_lines),
                suffix: first_lines(&task.suffix, cfg.max_suffix_lines),
            },
        ),
        PerspectiveId::Bm25 => Err(RetrieveError::UnsupportedPerspective(p.id)),
        _ => build_prompt(p, PromptInput::Code(&render_unfinished(task, cfg.max_prefix_lines, cfg.max_suffix_lines))),
    }
}

fn max_tokens(p: &Perspective, cfg: &RetrievalConfig) -> usize {
    match p.id {
        PerspectiveId::Summary => cfg.summary_max_tokens,
        _ => cfg.hypo_max_tokens,
    }
}

/// Embeds a prompt directly (lexical) or embeds the generator's continuation.
fn represent(
    p: &Perspective,
    prompt: &str,
    embedder: &dyn Embedder,
    generator: Option<&dyn Generator>,
    cfg: &RetrievalConfig,
) -> Result<EmbeddingVector, RetrieveError> {
    if !p.is_generative() {
        return Ok(embedder.embed(prompt)?);
    }
    let generator = generator.ok_or(RetrieveError::MissingGenerator(p.id))?;
    let generation = generator.generate(prompt, max_tokens(p, cfg))?;
    Ok(embedder.embed(&generation)?)
}

/// Representation of one snippet under a dense perspective, through the cache.
pub fn snippet_representation(
    p: &Perspective,
    snippet: &CodeSnippet,
    embedder: &dyn Embedder,
    generator: Option<&dyn Generator>,
    cache: &dyn EmbeddingCache,
    cfg: &RetrievalConfig,
) -> Result<EmbeddingVector, RetrieveError> {
    let key = cache_key(&snippet.snippet_id, p, &representation_model(p, embedder, generator));
    if let Some(row) = cache.get(&key) {
        if row.len() == embedder.dim() {
            if let Ok(v) = EmbeddingVector::from_f32(&row) {
                return Ok(v);
            }
        }
    }
    let prompt = snippet_prompt(p, snippet)?;
    let v = represent(p, &prompt, embedder, generator, cfg)?;
    if v.dim() != embedder.dim() {
        return Err(IndexError::DimMismatch { expected: embedder.dim(), actual: v.dim() }.into());
    }
    cache.put(&key, &v.to_f32());
    Ok(v)
}

/// A built index for one perspective.
#[derive(Debug, Clone, PartialEq)]
pub enum PerspectiveIndex {
    Dense(DenseIndex),
    Sparse(SparseIndex),
}

pub fn build_perspective_index(
    snippets: &[CodeSnippet],
    p: &Perspective,
    embedder: &dyn Embedder,
    generator: Option<&dyn Generator>,
    cache: &dyn EmbeddingCache,
    cfg: &RetrievalConfig,
) -> Result<PerspectiveIndex, RetrieveError> {
    if snippets.is_empty() {
        return Err(RetrieveError::EmptyCorpus);
    }
    p.validate()?;
    if p.id == PerspectiveId::Bm25 {
        return Ok(PerspectiveIndex::Sparse(bm25_build_index(snippets, DEFAULT_K1, DEFAULT_B)?));
    }
    if p.is_generative() && generator.is_none() {
        return Err(RetrieveError::MissingGenerator(p.id));
    }
    let mut index = DenseIndex::new(embedder.dim());
    for s in snippets {
        let v = snippet_representation(p, s, embedder, generator, cache, cfg)?;
        index.add(&s.snippet_id, &v)?;
    }
    Ok(PerspectiveIndex::Dense(index))
}

/// Snippets by id; the text source for retrieval results.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SnippetStore {
    by_id: BTreeMap<String, CodeSnippet>,
}

impl SnippetStore {
    pub fn new(snippets: impl IntoIterator<Item = CodeSnippet>) -> Self {
        SnippetStore { by_id: snippets.into_iter().map(|s| (s.snippet_id.clone(), s)).collect() }
    }

    pub fn get(&self, id: &str) -> Option<&CodeSnippet> {
        self.by_id.get(id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CodeSnippet> {
        self.by_id.values()
    }
}

/// One retrieved snippet with the similarity features the selectors consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub perspective: Perspective,
    pub snippet_id: String,
    pub snippet_text: String,
    /// Cosine in [-1, 1]; for BM25 a rescaled score in [0, 1] (see `rescaled`).
    pub cosine: f64,
    /// Token-set Jaccard between the snippet and the task's prefix + suffix.
    pub jaccard: f64,
    #[serde(default)]
    pub rescaled: bool,
}

/// Maps raw BM25 scores into [0, 1]: min-max over the returned list, or
/// `s / (1 + s)` when there is a single result or all scores are equal.
pub fn rescale_bm25(scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if scores.len() <= 1 || max <= min {
        return scores.iter().map(|&s| s / (1.0 + s)).collect();
    }
    scores.iter().map(|&s| (s - min) / (max - min)).collect()
}

#[allow(clippy::too_many_arguments)]
pub fn query_perspective(
    p: &Perspective,
    task: &CompletionTask,
    index: &PerspectiveIndex,
    store: &SnippetStore,
    embedder: &dyn Embedder,
    generator: Option<&dyn Generator>,
    cfg: &RetrievalConfig,
    k: usize,
) -> Result<Vec<RetrievalResult>, RetrieveError> {
    if k == 0 {
        return Err(IndexError::InvalidK.into());
    }
    let (hits, rescaled) = match (p.id, index) {
        (PerspectiveId::Bm25, PerspectiveIndex::Sparse(sparse)) => {
            let text = render_unfinished(task, cfg.max_prefix_lines, cfg.max_suffix_lines);
            let raw = sparse.query(&text, k)?;
            let scores: Vec<f64> = raw.iter().map(|h| h.1).collect();
            let hits = raw.into_iter().zip(rescale_bm25(&scores)).map(|((id, _), s)| (id, s)).collect();
            (hits, true)
        }
        (PerspectiveId::Bm25, _) | (_, PerspectiveIndex::Sparse(_)) => return Err(RetrieveError::IndexKindMismatch(p.id)),
        (_, PerspectiveIndex::Dense(dense)) => {
            let prompt = query_prompt(p, task, cfg)?;
            let q = represent(p, &prompt, embedder, generator, cfg)?;
            (dense.topk(&q, k)?, false)
        }
    };

    let mut context = String::with_capacity(task.prefix.len() + task.suffix.len());
    context.push_str(&task.prefix);
    context.push_str(&task.suffix);
    let context_tokens = tokenize_code(&context);
    let context_set: BTreeSet<&str> = context_tokens.iter().map(String::as_str).collect();

    hits.into_iter()
        .map(|(id, score)| {
            let snippet = store.get(&id).ok_or_else(|| RetrieveError::UnknownSnippet(id.clone()))?;
            let tokens = tokenize_code(&snippet.text);
            let set: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
            Ok(RetrievalResult {
                perspective: *p,
                snippet_id: id,
                snippet_text: snippet.text.clone(),
                cosine: score,
                jaccard: jaccard_sets(&set, &context_set),
                rescaled,
            })
        })
        .collect()
}
