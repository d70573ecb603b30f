//! The `ingest`, `index`, `train`, `run`, `complete` and `report` steps.
//! Each step reads the previous steps' artifacts from the output directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use prism_core::corpus::{CodeSnippet, CompletionTask, FileRef, TaskKind};
use prism_core::embed::Embedder;
use prism_core::eval::{aggregate_report, combine_repeats, EvalRecord, FailurePolicy, Report};
use prism_core::generate::{complete_task, logistic_samples, Pipeline, PipelineEnv, Strategy};
use prism_core::index::{bm25_build_index, DenseIndex, IndexError, DEFAULT_B, DEFAULT_K1};
use prism_core::retrieve::{snippet_representation, Perspective, PerspectiveId, PerspectiveIndex, RetrieveError, SnippetStore};
use prism_core::select::{LinUcbState, LogisticModel, SelectError, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{EmbedBackend, GenerateBackend};
use crate::config::{perspective_name, RunConfig};
use crate::error::PrismError;
use crate::ingest::{build_dataset, ingest_sources};
use crate::store::{self, DirCache};

/// Artifact locations under the output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Artifacts { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn snippets(&self) -> PathBuf {
        self.root.join("snippets.jsonl")
    }
    pub fn tasks(&self) -> PathBuf {
        self.root.join("tasks.jsonl")
    }
    pub fn validation_tasks(&self) -> PathBuf {
        self.root.join("validation_tasks.jsonl")
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split.json")
    }
    /// `index-lexical-1.pdix`, `index-summary-6.pdix`, ... or `index-bm25.json`.
    pub fn index(&self, p: &Perspective) -> PathBuf {
        match p.id {
            PerspectiveId::Bm25 => self.root.join("index-bm25.json"),
            _ => self.root.join(format!("index-{}-{}.pdix", p.id, p.template_no)),
        }
    }
    pub fn selector(&self) -> PathBuf {
        self.root.join("selector.json")
    }
    pub fn logistic(&self) -> PathBuf {
        self.root.join("logistic.json")
    }
    pub fn train_log(&self) -> PathBuf {
        self.root.join("train-log.json")
    }
    pub fn records(&self) -> PathBuf {
        self.root.join("records.jsonl")
    }
    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }
    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }
    pub fn plot_data(&self) -> PathBuf {
        self.root.join("plot-data.json")
    }
    pub fn resolved_config(&self) -> PathBuf {
        self.root.join("resolved-config.json")
    }
    pub fn cache(&self) -> PathBuf {
        self.root.join("cache")
    }

    fn require(&self, path: PathBuf, step: &'static str) -> Result<PathBuf, PrismError> {
        if path.exists() {
            Ok(path)
        } else {
            Err(PrismError::MissingArtifact { path, step })
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub strategies: Option<Vec<Strategy>>,
    pub repeat: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = std::path::absolute(out).unwrap_or_else(|_| out.clone());
        }
        if let Some(s) = &self.strategies {
            cfg.selector.strategies = s.clone();
        }
        if let Some(r) = self.repeat {
            cfg.eval.repeat = r;
        }
    }
}

pub fn artifacts(cfg: &RunConfig) -> Artifacts {
    Artifacts::new(&cfg.output_dir)
}

fn echo_config(cfg: &RunConfig) -> Result<(), PrismError> {
    store::write_json(&artifacts(cfg).resolved_config(), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub files: usize,
    pub retrieval_files: usize,
    pub validation_files: usize,
    pub test_files: usize,
    pub snippets: usize,
    pub test_tasks: usize,
    pub validation_tasks: usize,
    pub skipped_functions: usize,
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} files ({} retrieval / {} validation / {} test), {} snippets, {} test tasks, {} validation tasks",
            self.files, self.retrieval_files, self.validation_files, self.test_files, self.snippets, self.test_tasks, self.validation_tasks
        )?;
        if self.skipped_functions > 0 {
            write!(f, ", {} functions skipped", self.skipped_functions)?;
        }
        Ok(())
    }
}

pub fn ingest(cfg: &RunConfig) -> Result<IngestSummary, PrismError> {
    let files = ingest_sources(cfg)?;
    let dataset = build_dataset(&files, cfg)?;
    let out = artifacts(cfg);
    store::ensure_dir(out.root())?;
    store::write_jsonl(&out.snippets(), &dataset.snippets)?;
    store::write_jsonl(&out.tasks(), &dataset.test_tasks)?;
    store::write_jsonl(&out.validation_tasks(), &dataset.validation_tasks)?;
    store::write_json(&out.split(), &dataset.split)?;
    echo_config(cfg)?;
    Ok(IngestSummary {
        files: files.len(),
        retrieval_files: dataset.split.retrieval_files.len(),
        validation_files: dataset.split.validation_files.len(),
        test_files: dataset.split.test_files.len(),
        snippets: dataset.snippets.len(),
        test_tasks: dataset.test_tasks.len(),
        validation_tasks: dataset.validation_tasks.len(),
        skipped_functions: dataset.skipped_functions,
    })
}

/// Selector arms first, then BM25 and any other perspective a `single:`
/// strategy asks for.
pub fn indexed_perspectives(cfg: &RunConfig) -> Vec<Perspective> {
    let mut out = cfg.perspectives.clone();
    let singles = cfg.selector.strategies.iter().filter_map(|s| match s {
        Strategy::Single(p) => Some(*p),
        _ => None,
    });
    for p in std::iter::once(Perspective::BM25).chain(singles) {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub indexes: Vec<(String, usize)>,
    pub cache_entries: usize,
}

impl fmt::Display for IndexSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indexes.iter().map(|(p, n)| format!("{p}: {n}")).collect();
        write!(f, "indexed {} ({} cached embeddings)", parts.join(", "), self.cache_entries)
    }
}

/// Dense index over `snippets`, embedding in parallel through the cache.
pub fn build_dense(
    snippets: &[CodeSnippet],
    p: &Perspective,
    embedder: &dyn Embedder,
    generator: &dyn prism_core::embed::Generator,
    cache: &DirCache,
    cfg: &RunConfig,
) -> Result<DenseIndex, PrismError> {
    if snippets.is_empty() {
        return Err(RetrieveError::EmptyCorpus.into());
    }
    let rows = snippets
        .par_iter()
        .map(|s| snippet_representation(p, s, embedder, Some(generator), cache, &cfg.retrieval))
        .collect::<Result<Vec<_>, _>>()?;
    let mut index = DenseIndex::new(embedder.dim());
    for (s, v) in snippets.iter().zip(&rows) {
        index.add(&s.snippet_id, v)?;
    }
    Ok(index)
}

pub fn index(cfg: &RunConfig) -> Result<IndexSummary, PrismError> {
    let out = artifacts(cfg);
    let snippets: Vec<CodeSnippet> = store::read_jsonl(&out.require(out.snippets(), "ingest")?)?;
    let embedder = EmbedBackend::from_config(&cfg.backend)?;
    let generator = GenerateBackend::from_config(cfg.generator_backend())?;
    let cache = DirCache::new(out.cache());
    let mut built = Vec::new();
    for p in indexed_perspectives(cfg) {
        p.validate()?;
        if p.id == PerspectiveId::Bm25 {
            let index = bm25_build_index(&snippets, DEFAULT_K1, DEFAULT_B)?;
            store::save_sparse(&out.index(&p), &index)?;
        } else {
            let index = build_dense(&snippets, &p, &embedder, &generator, &cache, cfg)?;
            store::save_dense(&out.index(&p), &index, &snippets)?;
        }
        built.push((perspective_name(&p), snippets.len()));
    }
    echo_config(cfg)?;
    Ok(IndexSummary { indexes: built, cache_entries: cache.entry_count() })
}

/// Loaded artifacts and backends, ready to build pipelines.
pub struct Engine {
    cfg: RunConfig,
    store: SnippetStore,
    arms: Vec<Perspective>,
    arm_indexes: Vec<PerspectiveIndex>,
    extra: Vec<(Vec<Perspective>, Vec<PerspectiveIndex>)>,
    embedder: EmbedBackend,
    generator: GenerateBackend,
    linucb: Option<LinUcbState>,
    logistic: Option<LogisticModel>,
}

fn load_index(out: &Artifacts, p: &Perspective, dim: usize) -> Result<PerspectiveIndex, PrismError> {
    let path = out.require(out.index(p), "index")?;
    if p.id == PerspectiveId::Bm25 {
        return Ok(PerspectiveIndex::Sparse(store::load_sparse(&path)?));
    }
    let index = store::load_dense(&path)?;
    if index.dim() != dim {
        return Err(IndexError::DimMismatch { expected: dim, actual: index.dim() }.into());
    }
    Ok(PerspectiveIndex::Dense(index))
}

impl Engine {
    /// Loads the arm indexes, plus indexes for `single:` strategies outside
    /// the arms and any trained selectors when `for_evaluation` is set.
    pub fn load(cfg: &RunConfig, for_evaluation: bool) -> Result<Self, PrismError> {
        let out = artifacts(cfg);
        let snippets: Vec<CodeSnippet> = store::read_jsonl(&out.require(out.snippets(), "ingest")?)?;
        let embedder = EmbedBackend::from_config(&cfg.backend)?;
        let generator = GenerateBackend::from_config(cfg.generator_backend())?;
        let dim = embedder.dim();
        let arm_indexes = cfg.perspectives.iter().map(|p| load_index(&out, p, dim)).collect::<Result<Vec<_>, _>>()?;
        let mut engine = Engine {
            cfg: cfg.clone(),
            store: SnippetStore::new(snippets),
            arms: cfg.perspectives.clone(),
            arm_indexes,
            extra: Vec::new(),
            embedder,
            generator,
            linucb: None,
            logistic: None,
        };
        if for_evaluation {
            for s in &cfg.selector.strategies {
                if let Strategy::Single(p) = s {
                    if !engine.arms.contains(p) && !engine.extra.iter().any(|(ps, _)| ps[0] == *p) {
                        engine.extra.push((vec![*p], vec![load_index(&out, p, dim)?]));
                    }
                }
            }
            if out.selector().exists() {
                engine.linucb = Some(store::read_json(&out.selector())?);
            }
            if out.logistic().exists() {
                engine.logistic = Some(store::read_json(&out.logistic())?);
            }
        }
        Ok(engine)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn backends_are_local(&self) -> bool {
        self.embedder.is_local() && self.generator.is_local()
    }

    pub fn arm_pipeline(&self) -> Pipeline<'_> {
        Pipeline {
            perspectives: &self.arms,
            indexes: &self.arm_indexes,
            store: &self.store,
            embedder: &self.embedder,
            generator: &self.generator,
            retrieval: &self.cfg.retrieval,
            prompt: &self.cfg.prompt,
            linucb: self.linucb.as_ref(),
            logistic: self.logistic.as_ref(),
        }
    }

    /// The arm pipeline, or a one-perspective pipeline for a `single:`
    /// strategy whose perspective is not an arm.
    pub fn pipeline_for(&self, strategy: &Strategy) -> Pipeline<'_> {
        let base = self.arm_pipeline();
        if let Strategy::Single(p) = strategy {
            if let Some((ps, idx)) = self.extra.iter().find(|(ps, _)| ps[0] == *p) {
                return Pipeline { perspectives: ps, indexes: idx, ..base };
            }
        }
        base
    }

    /// Completes one task, timing it when a remote backend is involved.
    pub fn complete(&self, task: &CompletionTask, strategy: &Strategy) -> Result<EvalRecord, PrismError> {
        let started = Instant::now();
        let mut record = complete_task(&self.pipeline_for(strategy), task, strategy)?;
        if !self.backends_are_local() {
            record.elapsed_ms = started.elapsed().as_millis() as u64;
        }
        Ok(record)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub validation_tasks: usize,
    pub pass_accuracy: Vec<f64>,
    pub skipped: usize,
    /// Why no logistic model was written, if none was.
    pub logistic_note: Option<String>,
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let acc: Vec<String> = self.pass_accuracy.iter().map(|a| format!("{:.1}%", a * 100.0)).collect();
        write!(f, "trained on {} validation tasks; per-pass reward rate [{}]", self.validation_tasks, acc.join(", "))?;
        if self.skipped > 0 {
            write!(f, "; {} failed rounds skipped", self.skipped)?;
        }
        if let Some(note) = &self.logistic_note {
            write!(f, "; logistic model not written: {note}")?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct TrainLogFile<'a> {
    linucb: &'a prism_core::select::TrainLog,
    logistic_samples: usize,
}

pub fn train(cfg: &RunConfig) -> Result<TrainSummary, PrismError> {
    let out = artifacts(cfg);
    let tasks: Vec<CompletionTask> = store::read_jsonl(&out.require(out.validation_tasks(), "ingest")?)?;
    if tasks.is_empty() {
        return Err(PrismError::NoTasks("validation"));
    }
    let engine = Engine::load(cfg, false)?;
    let pipeline = engine.arm_pipeline();

    let mut state = LinUcbState::with_sharing(cfg.perspectives.len(), 2, cfg.selector.alpha, cfg.selector.sharing)?;
    let train_cfg = TrainConfig { passes: cfg.selector.passes, shuffle_seed: cfg.seed, mode: cfg.selector.mode };
    let log = prism_core::select::train_linucb(&mut state, &tasks, &mut PipelineEnv::new(pipeline), &train_cfg)?;
    store::write_json(&out.selector(), &state)?;

    let mut logistic_note = None;
    let mut n_samples = 0;
    if cfg.selector.strategies.contains(&Strategy::Logistic) {
        let samples = logistic_samples(&pipeline, &tasks)?;
        n_samples = samples.len();
        match LogisticModel::train(&samples, &cfg.selector.logistic) {
            Ok(model) => store::write_json(&out.logistic(), &model)?,
            Err(e @ (SelectError::DegenerateData | SelectError::EmptyInput)) => {
                let _ = std::fs::remove_file(out.logistic());
                logistic_note = Some(e.to_string());
            }
            Err(e) => return Err(e.into()),
        }
    }
    store::write_json(&out.train_log(), &TrainLogFile { linucb: &log, logistic_samples: n_samples })?;
    echo_config(cfg)?;
    Ok(TrainSummary { validation_tasks: tasks.len(), pass_accuracy: log.pass_accuracy, skipped: log.skipped, logistic_note })
}

fn write_report(out: &Artifacts, report: &Report) -> Result<(), PrismError> {
    store::write_atomic(&out.report_csv(), report.to_csv().as_bytes())?;
    store::write_json(&out.report_json(), report)?;
    store::write_json(&out.plot_data(), &report.plot_data())
}

/// Splits records into repeats: the n-th record of each (task, strategy) pair
/// belongs to repeat n.
pub fn split_repeats(records: &[EvalRecord]) -> Vec<Vec<EvalRecord>> {
    let mut seen: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut repeats: Vec<Vec<EvalRecord>> = Vec::new();
    for r in records {
        let n = seen.entry((&r.task_id, &r.strategy)).or_default();
        if repeats.len() <= *n {
            repeats.push(Vec::new());
        }
        repeats[*n].push(r.clone());
        *n += 1;
    }
    repeats
}

pub fn report_from_records(records: &[EvalRecord], policy: FailurePolicy) -> Result<Report, PrismError> {
    let reports = split_repeats(records).iter().map(|r| aggregate_report(r, policy)).collect::<Result<Vec<_>, _>>()?;
    Ok(if reports.len() == 1 { reports.into_iter().next().unwrap() } else { combine_repeats(&reports)? })
}

/// A finished evaluation, plus strategies that were requested but had no
/// trained model to run with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: Report,
    pub skipped: Vec<(Strategy, String)>,
}

pub fn run(cfg: &RunConfig) -> Result<RunOutcome, PrismError> {
    let out = artifacts(cfg);
    let tasks: Vec<CompletionTask> = store::read_jsonl(&out.require(out.tasks(), "ingest")?)?;
    if tasks.is_empty() {
        return Err(PrismError::NoTasks("test"));
    }
    if cfg.selector.strategies.is_empty() {
        return Err(PrismError::Usage("no strategies to run".into()));
    }
    let engine = Engine::load(cfg, true)?;
    let mut strategies = cfg.selector.strategies.clone();
    let mut skipped = Vec::new();
    if engine.logistic.is_none() && out.train_log().exists() && strategies.contains(&Strategy::Logistic) {
        strategies.retain(|s| *s != Strategy::Logistic);
        skipped.push((Strategy::Logistic, "training produced no usable logistic model".to_string()));
    }
    if strategies.is_empty() {
        return Err(PrismError::Usage("no runnable strategies".into()));
    }
    let mut records = Vec::with_capacity(tasks.len() * strategies.len() * cfg.eval.repeat);
    for _ in 0..cfg.eval.repeat {
        for strategy in &strategies {
            let batch = tasks.par_iter().map(|t| engine.complete(t, strategy)).collect::<Result<Vec<_>, _>>()?;
            records.extend(batch);
        }
    }
    store::write_jsonl(&out.records(), &records)?;
    let report = report_from_records(&records, cfg.eval.failure_policy)?;
    write_report(&out, &report)?;
    echo_config(cfg)?;
    Ok(RunOutcome { report, skipped })
}

/// Aggregates an existing records file into the report artifacts under `out`.
pub fn report(records_path: &Path, out: &Artifacts, policy: FailurePolicy) -> Result<Report, PrismError> {
    if !records_path.exists() {
        return Err(PrismError::MissingArtifact { path: records_path.to_path_buf(), step: "run" });
    }
    let records: Vec<EvalRecord> = store::read_jsonl(records_path)?;
    let report = report_from_records(&records, policy)?;
    write_report(out, &report)?;
    Ok(report)
}

/// One ad-hoc completion. `file_name` decides the language.
pub fn complete(
    cfg: &RunConfig,
    prefix: &str,
    suffix: &str,
    file_name: &str,
    kind: TaskKind,
    strategy: &Strategy,
) -> Result<EvalRecord, PrismError> {
    let mut cfg = cfg.clone();
    cfg.selector.strategies = vec![*strategy];
    let engine = Engine::load(&cfg, true)?;
    let task = CompletionTask {
        task_id: format!("adhoc/{file_name}"),
        kind,
        prefix: prefix.replace("\r\n", "\n"),
        suffix: suffix.replace("\r\n", "\n"),
        ground_truth: String::new(),
        source_file: FileRef { repo_id: "adhoc".into(), rel_path: file_name.into() },
        hole_start_line: prefix.matches('\n').count() + 1,
    };
    let record = engine.complete(&task, strategy)?;
    if let Some(e) = &record.error {
        return Err(PrismError::Completion(e.clone()));
    }
    Ok(record)
}
