//! Reading repositories from disk and turning them into snippets and tasks.

use std::collections::BTreeSet;
use std::path::Path;

use globset::{Glob, GlobSet, GlobSetBuilder};
use prism_core::corpus::{
    chunk_file, extract_function_body_tasks_detailed, extract_random_line_tasks, split_dataset, CodeSnippet, CompletionTask, DatasetSplit,
    FileRef, Language, SourceFile,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::PrismError;

fn glob_set(patterns: &[String]) -> Result<GlobSet, PrismError> {
    let mut builder = GlobSetBuilder::new();
    for p in patterns {
        let glob = Glob::new(p).map_err(|e| PrismError::InvalidGlob { pattern: p.clone(), message: e.to_string() })?;
        builder.add(glob);
    }
    builder.build().map_err(|e| PrismError::InvalidGlob { pattern: patterns.join(","), message: e.to_string() })
}

/// Every file under `root` whose `/`-separated relative path matches one of
/// `include_globs`, decoded as UTF-8 with replacement, ordered by path.
pub fn ingest_repository(root: &Path, include_globs: &[String], repo_id: Option<&str>) -> Result<Vec<SourceFile>, PrismError> {
    if !root.is_dir() {
        return Err(PrismError::PathNotFound(root.to_path_buf()));
    }
    if include_globs.is_empty() {
        return Err(PrismError::InvalidGlob { pattern: String::new(), message: "no include globs given".into() });
    }
    let globs = glob_set(include_globs)?;
    let repo_id = match repo_id {
        Some(id) => id.to_string(),
        None => std::path::absolute(root)
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "repo".into()),
    };
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            PrismError::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("walkdir stays under root");
        let rel_path = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if !globs.is_match(&rel_path) {
            continue;
        }
        let bytes = std::fs::read(entry.path()).map_err(|e| PrismError::io(entry.path(), e))?;
        files.push(SourceFile::from_text(repo_id.as_str(), rel_path, &String::from_utf8_lossy(&bytes)));
    }
    if files.is_empty() {
        return Err(PrismError::EmptyCorpus(root.to_path_buf()));
    }
    files.sort_by(|a, b| a.rel_path.cmp(&b.rel_path));
    Ok(files)
}

/// Everything `ingest` produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub split: DatasetSplit,
    /// Snippets of the retrieval files only.
    pub snippets: Vec<CodeSnippet>,
    pub test_tasks: Vec<CompletionTask>,
    pub validation_tasks: Vec<CompletionTask>,
    /// Function candidates whose body could not be delimited.
    pub skipped_functions: usize,
}

fn file_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn tasks_for(file: &SourceFile, index: usize, cfg: &RunConfig) -> (Vec<CompletionTask>, usize) {
    let mut tasks = extract_random_line_tasks(file, cfg.tasks.random_lines_per_file, file_seed(cfg.seed, index));
    let mut skipped = 0;
    if cfg.tasks.function_bodies && file.language != Language::Other {
        if let Ok(found) = extract_function_body_tasks_detailed(file) {
            tasks.extend(found.tasks);
            skipped = found.skipped;
        }
    }
    (tasks, skipped)
}

/// Splits files, chunks the retrieval partition and extracts tasks from the
/// test and validation partitions. Task order follows file path order.
pub fn build_dataset(files: &[SourceFile], cfg: &RunConfig) -> Result<Dataset, PrismError> {
    let split = split_dataset(files, cfg.split.test_frac, cfg.split.val_frac, cfg.seed)?;
    let retrieval: BTreeSet<FileRef> = split.retrieval_files.iter().cloned().collect();
    let test: BTreeSet<FileRef> = split.test_files.iter().cloned().collect();
    let validation: BTreeSet<FileRef> = split.validation_files.iter().cloned().collect();

    let mut ordered: Vec<&SourceFile> = files.iter().collect();
    ordered.sort_by(|a, b| a.file_ref().cmp(&b.file_ref()));

    let per_file: Vec<Result<(Vec<CodeSnippet>, Vec<CompletionTask>, usize), PrismError>> = ordered
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let r = f.file_ref();
            if retrieval.contains(&r) {
                Ok((chunk_file(f, cfg.chunking.window, cfg.chunking.stride)?, Vec::new(), 0))
            } else {
                let (tasks, skipped) = tasks_for(f, i, cfg);
                Ok((Vec::new(), tasks, skipped))
            }
        })
        .collect();

    let mut dataset = Dataset { split, snippets: Vec::new(), test_tasks: Vec::new(), validation_tasks: Vec::new(), skipped_functions: 0 };
    for (file, result) in ordered.iter().zip(per_file) {
        let (snippets, tasks, skipped) = result?;
        dataset.snippets.extend(snippets);
        dataset.skipped_functions += skipped;
        let r = file.file_ref();
        if test.contains(&r) {
            dataset.test_tasks.extend(tasks);
        } else if validation.contains(&r) {
            dataset.validation_tasks.extend(tasks);
        }
    }
    Ok(dataset)
}

/// Ingests every configured corpus source.
pub fn ingest_sources(cfg: &RunConfig) -> Result<Vec<SourceFile>, PrismError> {
    let mut files = Vec::new();
    for source in &cfg.corpus {
        files.extend(ingest_repository(&source.path, &source.include, source.repo_id.as_deref())?);
    }
    Ok(files)
}
