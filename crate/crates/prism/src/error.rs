use std::path::PathBuf;

use prism_core::corpus::CorpusError;
use prism_core::embed::BackendError;
use prism_core::eval::EvalError;
use prism_core::generate::GenerateError;
use prism_core::index::IndexError;
use prism_core::retrieve::RetrieveError;
use prism_core::select::SelectError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum PrismError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Json { path: PathBuf, line: usize, message: String },
    #[error("path not found: {}", .0.display())]
    PathNotFound(PathBuf),
    #[error("no files under {} match the include globs", .0.display())]
    EmptyCorpus(PathBuf),
    #[error("invalid glob {pattern:?}: {message}")]
    InvalidGlob { pattern: String, message: String },
    #[error("missing artifact {}; run `prism {step}` first", path.display())]
    MissingArtifact { path: PathBuf, step: &'static str },
    #[error("no {0} tasks were extracted; enlarge the corpus or adjust the split")]
    NoTasks(&'static str),
    #[error("completion failed: {0}")]
    Completion(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PrismError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PrismError::Io { path: path.into(), source }
    }
}
