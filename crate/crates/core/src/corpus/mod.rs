//! Source files, retrieval snippets and completion tasks.
//!
//! A [`SourceFile`] keeps its lines with their `\n` terminators so that
//! concatenating them reproduces the file text exactly. Every task extracted
//! from a file satisfies `prefix + ground_truth + suffix == file.text()`.

mod functions;
mod split;
mod tasks;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use functions::{extract_function_body_tasks, extract_function_body_tasks_detailed, FunctionTasks};
pub use split::{split_dataset, DatasetSplit};
pub use tasks::{extract_random_line_tasks, is_random_line_candidate};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("invalid chunking parameters: window={window}, stride={stride}")]
    InvalidWindow { window: usize, stride: usize },
    #[error("invalid split fractions: test={test}, validation={validation}")]
    InvalidFraction { test: f64, validation: f64 },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("function extraction is not supported for {0}")]
    UnsupportedLanguage(String),
}

/// Coarse syntactic family, used to pick the function extractor and comment style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    BraceLang,
    IndentLang,
    Other,
}

impl Language {
    pub fn from_path(path: &str) -> Self {
        let ext = match path.rsplit_once('.') {
            Some((stem, ext)) if !stem.is_empty() && !ext.contains('/') => ext,
            _ => return Language::Other,
        };
        match ext.to_ascii_lowercase().as_str() {
            "java" | "c" | "h" | "cc" | "cpp" | "cxx" | "hpp" | "hh" | "cs" | "js" | "jsx" | "ts"
            | "tsx" | "go" | "rs" | "kt" | "kts" | "scala" | "swift" | "php" | "dart" | "m" => {
                Language::BraceLang
            }
            "py" | "pyi" => Language::IndentLang,
            _ => Language::Other,
        }
    }

    /// Line-comment marker used when retrieved code is injected as comments.
    pub fn comment_prefix(self) -> &'static str {
        match self {
            Language::IndentLang => "#",
            Language::BraceLang | Language::Other => "//",
        }
    }
}

/// `(repo_id, rel_path)` reference to a source file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FileRef {
    pub repo_id: String,
    pub rel_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub repo_id: String,
    pub rel_path: String,
    pub language: Language,
    /// Lines including their trailing `\n`; only the last line may lack one.
    pub lines: Vec<String>,
}

impl SourceFile {
    /// Builds a file from raw text. `\r\n` is normalized to `\n`.
    pub fn from_text(repo_id: impl Into<String>, rel_path: impl Into<String>, text: &str) -> Self {
        let rel_path = rel_path.into();
        let normalized;
        let text = if text.contains("\r\n") {
            normalized = text.replace("\r\n", "\n");
            normalized.as_str()
        } else {
            text
        };
        SourceFile {
            repo_id: repo_id.into(),
            language: Language::from_path(&rel_path),
            rel_path,
            lines: text.split_inclusive('\n').map(String::from).collect(),
        }
    }

    pub fn text(&self) -> String {
        self.lines.concat()
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn file_ref(&self) -> FileRef {
        FileRef { repo_id: self.repo_id.clone(), rel_path: self.rel_path.clone() }
    }

    /// Concatenation of lines `[start, end)` (0-based).
    pub(crate) fn join(&self, start: usize, end: usize) -> String {
        self.lines[start..end].concat()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSnippet {
    pub snippet_id: String,
    pub repo_id: String,
    pub rel_path: String,
    /// 1-based, inclusive.
    pub start_line: usize,
    /// 1-based, inclusive.
    pub end_line: usize,
    pub text: String,
}

impl CodeSnippet {
    pub fn new(
        repo_id: impl Into<String>,
        rel_path: impl Into<String>,
        start_line: usize,
        end_line: usize,
        text: impl Into<String>,
    ) -> Self {
        let repo_id = repo_id.into();
        let rel_path = rel_path.into();
        CodeSnippet {
            snippet_id: snippet_id(&repo_id, &rel_path, start_line, end_line),
            repo_id,
            rel_path,
            start_line,
            end_line,
            text: text.into(),
        }
    }
}

/// Stable 16-hex-digit id derived from the snippet's location.
pub fn snippet_id(repo_id: &str, rel_path: &str, start_line: usize, end_line: usize) -> String {
    let mut hasher = Sha256::new();
    hasher.update(repo_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(rel_path.as_bytes());
    hasher.update([0u8]);
    hasher.update((start_line as u64).to_le_bytes());
    hasher.update((end_line as u64).to_le_bytes());
    let digest = hasher.finalize();
    hex_prefix(&digest[..8])
}

pub(crate) fn hex_prefix(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    RandomLine,
    FunctionBody,
}

impl TaskKind {
    /// Short label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            TaskKind::FunctionBody => "FB",
            TaskKind::RandomLine => "RL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionTask {
    pub task_id: String,
    pub kind: TaskKind,
    pub prefix: String,
    pub suffix: String,
    pub ground_truth: String,
    pub source_file: FileRef,
    /// 1-based line where the hole starts.
    pub hole_start_line: usize,
}

impl CompletionTask {
    pub fn language(&self) -> Language {
        Language::from_path(&self.source_file.rel_path)
    }

    pub fn reconstruct(&self) -> String {
        let mut s = String::with_capacity(self.prefix.len() + self.ground_truth.len() + self.suffix.len());
        s.push_str(&self.prefix);
        s.push_str(&self.ground_truth);
        s.push_str(&self.suffix);
        s
    }
}

pub(crate) fn task_id(file: &SourceFile, kind: TaskKind, line: usize) -> String {
    let tag = match kind {
        TaskKind::RandomLine => "rl",
        TaskKind::FunctionBody => "fb",
    };
    alloc::format!("{}/{}:{}:{}", file.repo_id, file.rel_path, line, tag)
}

/// Sliding-window chunking: windows start at lines 1, 1+stride, ... and the
/// last window is clipped at end of file.
pub fn chunk_file(file: &SourceFile, window_lines: usize, stride_lines: usize) -> Result<Vec<CodeSnippet>, CorpusError> {
    if window_lines == 0 || stride_lines == 0 || stride_lines > window_lines {
        return Err(CorpusError::InvalidWindow { window: window_lines, stride: stride_lines });
    }
    let n = file.line_count();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + window_lines).min(n);
        out.push(CodeSnippet::new(
            file.repo_id.as_str(),
            file.rel_path.as_str(),
            start + 1,
            end,
            file.join(start, end),
        ));
        if end == n {
            break;
        }
        start += stride_lines;
    }
    Ok(out)
}
