use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{task_id, CompletionTask, Language, SourceFile, TaskKind};
use crate::index::tokenize_code;

/// A line qualifies as a random-line target when it is not blank, not a
/// comment-only line, and carries at least two code tokens.
pub fn is_random_line_candidate(line: &str, language: Language) -> bool {
    let trimmed = line.trim();
    if trimmed.is_empty() || is_comment_only(trimmed, language) {
        return false;
    }
    tokenize_code(trimmed).len() >= 2
}

fn is_comment_only(trimmed: &str, language: Language) -> bool {
    let brace = ["//", "/*", "*", "*/"];
    let indent = ["#"];
    match language {
        Language::BraceLang => brace.iter().any(|p| trimmed.starts_with(p)),
        Language::IndentLang => indent.iter().any(|p| trimmed.starts_with(p)),
        Language::Other => brace.iter().chain(indent.iter()).any(|p| trimmed.starts_with(p)),
    }
}

/// Samples up to `n` single-line holes without replacement.
///
/// The ground truth is the line without its `\n`; the newline opens the suffix.
pub fn extract_random_line_tasks(file: &SourceFile, n: usize, seed: u64) -> Vec<CompletionTask> {
    let candidates: Vec<usize> = file
        .lines
        .iter()
        .enumerate()
        .filter(|(_, l)| is_random_line_candidate(l, file.language))
        .map(|(i, _)| i)
        .collect();
    let amount = n.min(candidates.len());
    if amount == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), amount)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();

    picked
        .into_iter()
        .map(|i| {
            let line = &file.lines[i];
            let (gt, newline) = match line.strip_suffix('\n') {
                Some(body) => (body, "\n"),
                None => (line.as_str(), ""),
            };
            let mut suffix = String::from(newline);
            suffix.push_str(&file.join(i + 1, file.line_count()));
            CompletionTask {
                task_id: task_id(file, TaskKind::RandomLine, i + 1),
                kind: TaskKind::RandomLine,
                prefix: file.join(0, i),
                suffix,
                ground_truth: String::from(gt),
                source_file: file.file_ref(),
                hole_start_line: i + 1,
            }
        })
        .collect()
}
