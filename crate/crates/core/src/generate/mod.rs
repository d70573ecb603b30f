//! Fill-in-the-middle prompt assembly, generation post-processing and the
//! per-task completion pipeline.

mod pipeline;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Language, TaskKind};
use crate::embed::BackendError;
use crate::retrieve::RetrieveError;
use crate::select::SelectError;
use crate::text::{first_lines, last_lines};

pub use pipeline::{complete_task, complete_with_context, logistic_samples, retrieve_all, Pipeline, PipelineEnv, Strategy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("invalid prompt config: {0}")]
    InvalidPromptConfig(&'static str),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("perspective {0} is not active")]
    InactivePerspective(String),
    #[error("strategy {0} needs a trained selector")]
    MissingSelector(&'static str),
    #[error("selector expects {expected} arms, pipeline has {actual}")]
    SelectorMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub pre_token: String,
    pub suf_token: String,
    pub mid_token: String,
    /// Stop markers that end a generation.
    pub end_tokens: Vec<String>,
    /// Line-comment marker for injected context; the task language's marker when unset.
    pub comment_prefix: Option<String>,
    /// Inject retrieved code as comments (`true`) or verbatim.
    pub comment_context: bool,
    /// Placed between the FIM segments.
    pub separator: String,
    pub max_prefix_lines: usize,
    pub max_suffix_lines: usize,
    pub max_gen_tokens: usize,
    /// Maximum number of retrieved-context lines in a prompt.
    pub context_line_budget: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            pre_token: String::from("<PRE>"),
            suf_token: String::from("<SUF>"),
            mid_token: String::from("<MID>"),
            end_tokens: alloc::vec![String::from("<EOT>")],
            comment_prefix: None,
            comment_context: true,
            separator: String::from(" "),
            max_prefix_lines: 32,
            max_suffix_lines: 16,
            max_gen_tokens: 128,
            context_line_budget: 40,
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<(), GenerateError> {
        let tokens = [&self.pre_token, &self.suf_token, &self.mid_token];
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(GenerateError::InvalidPromptConfig("FIM tokens must be non-empty"));
        }
        if tokens[0] == tokens[1] || tokens[0] == tokens[2] || tokens[1] == tokens[2] {
            return Err(GenerateError::InvalidPromptConfig("FIM tokens must be distinct"));
        }
        if self.end_tokens.iter().any(String::is_empty) {
            return Err(GenerateError::InvalidPromptConfig("end tokens must be non-empty"));
        }
        if self.max_gen_tokens == 0 {
            return Err(GenerateError::InvalidPromptConfig("max_gen_tokens must be positive"));
        }
        Ok(())
    }

    fn comment_for(&self, language: Language) -> &str {
        self.comment_prefix.as_deref().unwrap_or(language.comment_prefix())
    }
}

fn fim(cfg: &PromptConfig, context: &str, prefix: &str, suffix: &str) -> String {
    let prefix = last_lines(prefix, cfg.max_prefix_lines);
    let suffix = first_lines(suffix, cfg.max_suffix_lines);
    let sep = cfg.separator.as_str();
    let mut out = String::with_capacity(context.len() + prefix.len() + suffix.len() + 32);
    for part in [&cfg.pre_token, sep, context, prefix, sep, &cfg.suf_token, sep, suffix, sep, &cfg.mid_token] {
        out.push_str(part);
    }
    out
}

/// `PRE prefix SUF suffix MID` over the truncated prefix and suffix.
pub fn assemble_fim_prompt(cfg: &PromptConfig, prefix: &str, suffix: &str) -> String {
    fim(cfg, "", prefix, suffix)
}

/// The retrieved-context block: snippets in order, line by line, cut at the
/// line budget. Each line is comment-wrapped unless disabled.
pub fn context_block(cfg: &PromptConfig, language: Language, snippets: &[&str]) -> String {
    let marker = cfg.comment_for(language);
    let mut out = String::new();
    let mut budget = cfg.context_line_budget;
    for line in snippets.iter().flat_map(|s| s.lines()) {
        if budget == 0 {
            break;
        }
        budget -= 1;
        if cfg.comment_context {
            out.push_str(marker);
            if !line.is_empty() {
                out.push(' ');
            }
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// FIM prompt with retrieved snippets placed before the prefix inside the
/// PRE segment. No snippets gives exactly [`assemble_fim_prompt`].
pub fn assemble_augmented_prompt(cfg: &PromptConfig, language: Language, snippets: &[&str], prefix: &str, suffix: &str) -> String {
    fim(cfg, &context_block(cfg, language, snippets), prefix, suffix)
}

fn leading_width(line: &str) -> usize {
    line.chars().take_while(|c| *c == ' ' || *c == '\t').map(|c| if c == '\t' { 4 } else { 1 }).sum()
}

/// Byte offset of the line whose braces close the enclosing body.
fn brace_close(raw: &str) -> Option<usize> {
    let mut depth: i64 = 0;
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        let mut quote: Option<char> = None;
        let mut escaped = false;
        for c in line.chars() {
            match quote {
                Some(q) => {
                    if escaped {
                        escaped = false;
                    } else if c == '\\' {
                        escaped = true;
                    } else if c == q {
                        quote = None;
                    }
                }
                None => match c {
                    '"' | '\'' | '`' => quote = Some(c),
                    '{' => depth += 1,
                    '}' => {
                        depth -= 1;
                        if depth < 0 {
                            return Some(offset);
                        }
                    }
                    _ => {}
                },
            }
        }
        offset += line.len();
    }
    None
}

/// Byte offset of the first non-blank line indented less than the first one.
fn first_dedent(raw: &str) -> Option<usize> {
    let mut base: Option<usize> = None;
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        if !line.trim().is_empty() {
            let width = leading_width(line);
            match base {
                None => base = Some(width),
                Some(b) if width < b => return Some(offset),
                _ => {}
            }
        }
        offset += line.len();
    }
    None
}

/// Cuts a raw generation down to the candidate completion: the first line for
/// random-line tasks; for function bodies the earliest of an end token, the
/// line closing the body, or the first dedent. Trailing whitespace is removed.
pub fn truncate_generation(kind: TaskKind, language: Language, raw: &str, cfg: &PromptConfig) -> String {
    let mut cut = cfg.end_tokens.iter().filter_map(|t| raw.find(t.as_str())).min().unwrap_or(raw.len());
    match kind {
        TaskKind::RandomLine => {
            if let Some(nl) = raw.find('\n') {
                cut = cut.min(nl);
            }
        }
        TaskKind::FunctionBody => {
            let structural = match language {
                Language::BraceLang => brace_close(&raw[..cut]),
                Language::IndentLang => first_dedent(&raw[..cut]),
                Language::Other => None,
            };
            if let Some(at) = structural {
                cut = cut.min(at);
            }
        }
    }
    String::from(raw[..cut].trim_end())
}
