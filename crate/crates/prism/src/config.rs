//! The JSON run configuration.

use std::path::{Path, PathBuf};

use prism_core::embed::BackendConfig;
use prism_core::eval::FailurePolicy;
use prism_core::generate::{PromptConfig, Strategy};
use prism_core::retrieve::{Perspective, PerspectiveId, RetrievalConfig};
use prism_core::select::{LogisticConfig, ParameterSharing, TrainMode};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}:{column}: at `{field}`: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, field: String, message: String },
    #[error("{}: unknown key `{key}` in {section}", path.display())]
    UnknownKey { path: PathBuf, key: String, section: String },
    #[error("referenced path does not exist: {}", .0.display())]
    MissingPath(PathBuf),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_globs() -> Vec<String> {
    ["**/*.java", "**/*.py", "**/*.js", "**/*.ts", "**/*.go", "**/*.rs", "**/*.c", "**/*.cpp", "**/*.cs"]
        .map(String::from)
        .to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    pub path: PathBuf,
    #[serde(default = "default_globs")]
    pub include: Vec<String>,
    /// Defaults to the directory name.
    #[serde(default)]
    pub repo_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_frac: f64,
    pub val_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_frac: 0.10, val_frac: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkConfig {
    pub window: usize,
    pub stride: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig { window: 20, stride: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub random_lines_per_file: usize,
    pub function_bodies: bool,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig { random_lines_per_file: 3, function_bodies: true }
    }
}

fn default_strategies() -> Vec<Strategy> {
    let mut out = vec![Strategy::Base];
    out.extend(Perspective::defaults().map(Strategy::Single));
    out.extend([Strategy::Single(Perspective::BM25), Strategy::Union, Strategy::MaxSim, Strategy::Logistic, Strategy::LinUcb]);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub strategies: Vec<Strategy>,
    pub alpha: f64,
    pub passes: usize,
    pub sharing: ParameterSharing,
    pub mode: TrainMode,
    pub logistic: LogisticConfig,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            strategies: default_strategies(),
            alpha: 0.1,
            passes: 1,
            sharing: ParameterSharing::Disjoint,
            mode: TrainMode::OnPolicy,
            logistic: LogisticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub repeat: usize,
    pub failure_policy: FailurePolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { repeat: 1, failure_policy: FailurePolicy::Count }
    }
}

fn default_perspectives() -> Vec<Perspective> {
    Perspective::defaults().to_vec()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Vec<CorpusSource>,
    /// Embedding backend; also generates unless `generator` is set.
    pub backend: BackendConfig,
    #[serde(default)]
    pub generator: Option<BackendConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub chunking: ChunkConfig,
    #[serde(default)]
    pub tasks: TaskConfig,
    /// Selector arms, in order. Written as `"lexical"` or `"summary#6"`.
    #[serde(default = "default_perspectives", with = "perspective_names")]
    pub perspectives: Vec<Perspective>,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub selector: SelectorConfig,
    #[serde(default)]
    pub prompt: PromptConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

pub fn parse_perspective(s: &str) -> Option<Perspective> {
    let (name, template) = match s.split_once('#') {
        Some((n, t)) => (n, Some(t.parse::<u8>().ok()?)),
        None => (s, None),
    };
    let id = PerspectiveId::parse(name)?;
    match template {
        Some(t) => Perspective::new(id, t).ok(),
        None => Some(Perspective::default_for(id)),
    }
}

pub fn perspective_name(p: &Perspective) -> String {
    if *p == Perspective::default_for(p.id) {
        p.id.to_string()
    } else {
        p.key()
    }
}

mod perspective_names {
    use super::*;

    pub fn serialize<S: Serializer>(ps: &[Perspective], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(ps.iter().map(perspective_name))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Perspective>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|n| parse_perspective(n).ok_or_else(|| serde::de::Error::custom(format!("unknown perspective {n:?}"))))
            .collect()
    }
}

impl RunConfig {
    /// A config over one corpus directory with every default applied.
    pub fn minimal(corpus: impl Into<PathBuf>, backend: BackendConfig) -> Self {
        let text = serde_json::json!({ "corpus": [{ "path": corpus.into() }], "backend": backend });
        serde_json::from_value(text).expect("minimal config is valid")
    }

    pub fn generator_backend(&self) -> &BackendConfig {
        self.generator.as_ref().unwrap_or(&self.backend)
    }

    /// Makes relative paths absolute with respect to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                let joined = base.join(&*p);
                *p = std::path::absolute(&joined).unwrap_or(joined);
            }
        };
        for c in &mut self.corpus {
            fix(&mut c.path);
        }
        fix(&mut self.output_dir);
        for b in std::iter::once(&mut self.backend).chain(self.generator.as_mut()) {
            if let Some(script) = &b.script_path {
                let mut p = PathBuf::from(script);
                fix(&mut p);
                b.script_path = Some(p.to_string_lossy().into_owned());
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.corpus.is_empty() {
            return invalid("`corpus` lists no sources".into());
        }
        for c in &self.corpus {
            if !c.path.exists() {
                return Err(ConfigError::MissingPath(c.path.clone()));
            }
            if c.include.is_empty() {
                return invalid(format!("corpus source {} has no include globs", c.path.display()));
            }
        }
        for b in std::iter::once(&self.backend).chain(self.generator.as_ref()) {
            b.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if let Some(script) = &b.script_path {
                if !Path::new(script).exists() {
                    return Err(ConfigError::MissingPath(script.into()));
                }
            }
        }
        if self.chunking.window == 0 || self.chunking.stride == 0 || self.chunking.stride > self.chunking.window {
            return invalid(format!("chunking needs 1 <= stride <= window, got {:?}", self.chunking));
        }
        let frac_ok = |f: f64| (0.0..1.0).contains(&f);
        if !frac_ok(self.split.test_frac) || !frac_ok(self.split.val_frac) || self.split.test_frac + self.split.val_frac >= 1.0 {
            return invalid(format!("split fractions out of range: {:?}", self.split));
        }
        if self.perspectives.len() < 2 {
            return invalid("at least two perspectives are needed as selector arms".into());
        }
        for (i, p) in self.perspectives.iter().enumerate() {
            if self.perspectives[..i].contains(p) {
                return invalid(format!("perspective {} listed twice", p.key()));
            }
        }
        if self.retrieval.k == 0 {
            return invalid("retrieval.k must be at least 1".into());
        }
        if !(self.selector.alpha >= 0.0 && self.selector.alpha.is_finite()) {
            return invalid(format!("selector.alpha must be a non-negative number, got {}", self.selector.alpha));
        }
        if self.selector.passes == 0 || self.eval.repeat == 0 {
            return invalid("selector.passes and eval.repeat must be at least 1".into());
        }
        self.prompt.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

/// Parses a config document. Relative paths are resolved against `base`.
pub fn parse_config(text: &str, path: &Path, base: &Path) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.inner();
        let message = inner.to_string();
        match unknown_field(&message) {
            Some(key) => {
                let section = field.strip_suffix(key.as_str()).unwrap_or(&field).trim_end_matches('.');
                let section = if section.is_empty() { "top level" } else { section }.to_string();
                ConfigError::UnknownKey { path: path.into(), key, section }
            }
            None => ConfigError::Parse { path: path.into(), line: inner.line(), column: inner.column(), field, message },
        }
    })?;
    cfg.resolve_paths(base);
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.into(), source: e })?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let cfg = parse_config(&text, path, base)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perspective_names_round_trip() {
        for name in ["lexical", "hypo_line", "summary", "bm25", "lexical#2", "summary#6", "hypo_line#4"] {
            assert_eq!(perspective_name(&parse_perspective(name).unwrap()), name);
        }
        assert_eq!(parse_perspective("summary#5"), Some(Perspective::SUMMARY));
        assert!(parse_perspective("lexical#7").is_none());
        assert!(parse_perspective("visual").is_none());
    }

    #[test]
    fn unknown_key_is_named_with_its_section() {
        let text = r#"{"corpus": [{"path": "."}], "backend": {"kind": "local"}, "selector": {"alpah": 0.2}}"#;
        match parse_config(text, Path::new("c.json"), Path::new(".")) {
            Err(ConfigError::UnknownKey { key, section, .. }) => {
                assert_eq!(key, "alpah");
                assert_eq!(section, "selector");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_errors_carry_position_and_field() {
        let text = "{\"corpus\": [{\"path\": \".\"}],\n \"backend\": {\"kind\": \"local\", \"dim\": \"wide\"}}";
        match parse_config(text, Path::new("c.json"), Path::new(".")) {
            Err(ConfigError::Parse { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "backend.dim");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_catches_bad_values() {
        let dir = std::env::temp_dir();
        let good = RunConfig::minimal(&dir, BackendConfig::local(32));
        good.validate().unwrap();
        let mut bad = good.clone();
        bad.chunking.stride = 30;
        assert!(matches!(bad.validate(), Err(ConfigError::Invalid(_))));
        let mut bad = good.clone();
        bad.selector.alpha = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.perspectives = vec![Perspective::LEXICAL, Perspective::LEXICAL];
        assert!(bad.validate().is_err());
        let mut bad = good;
        bad.corpus[0].path = dir.join("definitely-not-here-4242");
        assert!(matches!(bad.validate(), Err(ConfigError::MissingPath(_))));
    }
}
