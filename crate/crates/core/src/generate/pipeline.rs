use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{assemble_augmented_prompt, truncate_generation, GenerateError, PromptConfig};
use crate::corpus::CompletionTask;
use crate::embed::{prompt_hash, Embedder, Generator};
use crate::eval::{edit_similarity, exact_match, EvalRecord};
use crate::retrieve::{query_perspective, Perspective, PerspectiveId, PerspectiveIndex, RetrievalConfig, RetrievalResult, SnippetStore};
use crate::select::{build_arm_features, max_similarity_select, union_context, ArmFeatures, LinUcbState, LogisticModel, Reward, SelectError, SelectionEnv};

/// How the retrieval context for a task is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Plain fill-in-the-middle, no retrieval.
    Base,
    Single(Perspective),
    Union,
    MaxSim,
    Logistic,
    LinUcb,
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Base => String::from("base"),
            Strategy::Single(p) if *p == Perspective::default_for(p.id) => alloc::format!("single:{}", p.id),
            Strategy::Single(p) => alloc::format!("single:{}", p.key()),
            Strategy::Union => String::from("union"),
            Strategy::MaxSim => String::from("maxsim"),
            Strategy::Logistic => String::from("logistic"),
            Strategy::LinUcb => String::from("linucb"),
        }
    }

    pub fn needs_retrieval(&self) -> bool {
        !matches!(self, Strategy::Base)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Strategy {
    type Err = GenerateError;

    /// Accepts `base`, `union`, `maxsim`, `logistic`, `linucb` and
    /// `single:<perspective>[#<template>]`.
    fn from_str(s: &str) -> Result<Self, GenerateError> {
        let unknown = || GenerateError::UnknownStrategy(String::from(s));
        Ok(match s.trim() {
            "base" => Strategy::Base,
            "union" => Strategy::Union,
            "maxsim" | "max_sim" => Strategy::MaxSim,
            "logistic" => Strategy::Logistic,
            "linucb" => Strategy::LinUcb,
            other => {
                let perspective_text = other.strip_prefix("single:").ok_or_else(unknown)?;
                let (name, template) = match perspective_text.split_once('#') {
                    Some((n, t)) => (n, Some(t.parse::<u8>().map_err(|_| unknown())?)),
                    None => (perspective_text, None),
                };
                let id = PerspectiveId::parse(name).ok_or_else(unknown)?;
                match template {
                    Some(t) => Strategy::Single(Perspective::new(id, t).map_err(|_| unknown())?),
                    None => Strategy::Single(Perspective::default_for(id)),
                }
            }
        })
    }
}

impl Serialize for Strategy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything needed to complete a task: active perspectives with their
/// indexes (same order, which is also the selector arm order), backends,
/// and trained selectors.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub perspectives: &'a [Perspective],
    pub indexes: &'a [PerspectiveIndex],
    pub store: &'a SnippetStore,
    pub embedder: &'a dyn Embedder,
    /// Used both for completions and for the generative perspectives.
    pub generator: &'a dyn Generator,
    pub retrieval: &'a RetrievalConfig,
    pub prompt: &'a PromptConfig,
    pub linucb: Option<&'a LinUcbState>,
    pub logistic: Option<&'a LogisticModel>,
}

fn perspective_slot(pipeline: &Pipeline<'_>, p: &Perspective) -> Result<usize, GenerateError> {
    pipeline.perspectives.iter().position(|q| q == p).ok_or_else(|| GenerateError::InactivePerspective(p.key()))
}

fn query_one(pipeline: &Pipeline<'_>, slot: usize, task: &CompletionTask) -> Result<Vec<RetrievalResult>, GenerateError> {
    Ok(query_perspective(
        &pipeline.perspectives[slot],
        task,
        &pipeline.indexes[slot],
        pipeline.store,
        pipeline.embedder,
        Some(pipeline.generator),
        pipeline.retrieval,
        pipeline.retrieval.k,
    )?)
}

/// Results of every active perspective, in arm order.
pub fn retrieve_all(pipeline: &Pipeline<'_>, task: &CompletionTask) -> Result<Vec<Vec<RetrievalResult>>, GenerateError> {
    if pipeline.indexes.len() != pipeline.perspectives.len() {
        return Err(GenerateError::SelectorMismatch { expected: pipeline.perspectives.len(), actual: pipeline.indexes.len() });
    }
    (0..pipeline.perspectives.len()).map(|slot| query_one(pipeline, slot, task)).collect()
}

fn check_arms(expected: usize, pipeline: &Pipeline<'_>) -> Result<(), GenerateError> {
    if expected != pipeline.perspectives.len() {
        return Err(GenerateError::SelectorMismatch { expected, actual: pipeline.perspectives.len() });
    }
    Ok(())
}

/// Picks the context for `task` under `strategy`: `(arm, snippets)`.
fn choose_context(
    pipeline: &Pipeline<'_>,
    task: &CompletionTask,
    strategy: &Strategy,
) -> Result<(Option<usize>, Vec<RetrievalResult>), GenerateError> {
    match strategy {
        Strategy::Base => Ok((None, Vec::new())),
        Strategy::Single(p) => {
            let slot = perspective_slot(pipeline, p)?;
            Ok((Some(slot), query_one(pipeline, slot, task)?))
        }
        Strategy::Union => Ok((None, union_context(&retrieve_all(pipeline, task)?, true))),
        Strategy::MaxSim => {
            let mut all = retrieve_all(pipeline, task)?;
            let arm = max_similarity_select(&all);
            Ok((Some(arm), core::mem::take(&mut all[arm])))
        }
        Strategy::Logistic => {
            let model = pipeline.logistic.ok_or(GenerateError::MissingSelector("logistic"))?;
            check_arms(model.n_arms(), pipeline)?;
            let mut all = retrieve_all(pipeline, task)?;
            let arm = model.select(&build_arm_features(&all))?;
            Ok((Some(arm), core::mem::take(&mut all[arm])))
        }
        Strategy::LinUcb => {
            let state = pipeline.linucb.ok_or(GenerateError::MissingSelector("linucb"))?;
            check_arms(state.n_arms(), pipeline)?;
            let mut all = retrieve_all(pipeline, task)?;
            let arm = state.select(&build_arm_features(&all))?;
            Ok((Some(arm), core::mem::take(&mut all[arm])))
        }
    }
}

fn failed_record(task: &CompletionTask, strategy: &str, arm: Option<usize>, error: &GenerateError) -> EvalRecord {
    EvalRecord {
        task_id: task.task_id.clone(),
        kind: task.kind,
        strategy: String::from(strategy),
        arm,
        retrieval_ids: Vec::new(),
        prompt_hash: String::new(),
        generation: String::new(),
        em: 0,
        es: edit_similarity("", task.ground_truth.trim()),
        gen_len: 0,
        elapsed_ms: 0,
        error: Some(error.to_string()),
    }
}

fn try_complete(
    pipeline: &Pipeline<'_>,
    task: &CompletionTask,
    strategy: &str,
    arm: Option<usize>,
    context: &[RetrievalResult],
) -> Result<EvalRecord, GenerateError> {
    let texts: Vec<&str> = context.iter().map(|r| r.snippet_text.as_str()).collect();
    let prompt = assemble_augmented_prompt(pipeline.prompt, task.language(), &texts, &task.prefix, &task.suffix);
    let raw = pipeline.generator.generate(&prompt, pipeline.prompt.max_gen_tokens)?;
    let generation = truncate_generation(task.kind, task.language(), &raw, pipeline.prompt);
    Ok(EvalRecord {
        task_id: task.task_id.clone(),
        kind: task.kind,
        strategy: String::from(strategy),
        arm,
        retrieval_ids: context.iter().map(|r| r.snippet_id.clone()).collect(),
        prompt_hash: prompt_hash(&prompt),
        em: exact_match(&generation, &task.ground_truth),
        es: edit_similarity(generation.trim(), task.ground_truth.trim()),
        gen_len: generation.chars().count(),
        generation,
        elapsed_ms: 0,
        error: None,
    })
}

/// Completes `task` with an already chosen context. A generation failure
/// yields a record with `error` set.
pub fn complete_with_context(
    pipeline: &Pipeline<'_>,
    task: &CompletionTask,
    strategy: &str,
    arm: Option<usize>,
    context: &[RetrievalResult],
) -> EvalRecord {
    try_complete(pipeline, task, strategy, arm, context).unwrap_or_else(|e| failed_record(task, strategy, arm, &e))
}

/// Runs one task end to end. Backend and retrieval failures produce a record
/// with `error` set; missing or mismatched selectors are returned as errors.
pub fn complete_task(pipeline: &Pipeline<'_>, task: &CompletionTask, strategy: &Strategy) -> Result<EvalRecord, GenerateError> {
    let name = strategy.name();
    match choose_context(pipeline, task, strategy) {
        Ok((arm, context)) => Ok(complete_with_context(pipeline, task, &name, arm, &context)),
        Err(e @ (GenerateError::Retrieve(_) | GenerateError::Backend(_))) => Ok(failed_record(task, &name, None, &e)),
        Err(e) => Err(e),
    }
}

/// Bandit environment over real tasks: features from every perspective's
/// top hit, reward from exact match of the completion using one arm's context.
pub struct PipelineEnv<'a> {
    pipeline: Pipeline<'a>,
    last: Option<(String, Vec<Vec<RetrievalResult>>)>,
}

impl<'a> PipelineEnv<'a> {
    pub fn new(pipeline: Pipeline<'a>) -> Self {
        PipelineEnv { pipeline, last: None }
    }

    fn results(&mut self, task: &CompletionTask) -> Result<&[Vec<RetrievalResult>], GenerateError> {
        if self.last.as_ref().map(|l| &l.0) != Some(&task.task_id) {
            let all = retrieve_all(&self.pipeline, task)?;
            self.last = Some((task.task_id.clone(), all));
        }
        Ok(&self.last.as_ref().unwrap().1)
    }
}

impl SelectionEnv for PipelineEnv<'_> {
    type Task = CompletionTask;
    type Error = GenerateError;

    fn arm_features(&mut self, task: &CompletionTask) -> Result<ArmFeatures, GenerateError> {
        Ok(build_arm_features(self.results(task)?))
    }

    fn reward(&mut self, task: &CompletionTask, arm: usize) -> Result<Reward, GenerateError> {
        let pipeline = self.pipeline;
        let context = self.results(task)?.get(arm).cloned().ok_or(SelectError::ArmOutOfRange { arm, n_arms: pipeline.perspectives.len() })?;
        let record = try_complete(&pipeline, task, "train", Some(arm), &context)?;
        Ok(Reward::from(record.em == 1))
    }
}

/// Logistic-regression training samples: each task's features and the first
/// arm whose context yields an exact match. Failed tasks are skipped.
pub fn logistic_samples(pipeline: &Pipeline<'_>, tasks: &[CompletionTask]) -> Result<Vec<(ArmFeatures, Option<usize>)>, GenerateError> {
    let mut env = PipelineEnv::new(*pipeline);
    let mut out = Vec::with_capacity(tasks.len());
    'tasks: for task in tasks {
        let feats = match env.arm_features(task) {
            Ok(f) => f,
            Err(GenerateError::Retrieve(_) | GenerateError::Backend(_)) => continue,
            Err(e) => return Err(e),
        };
        let mut winner = None;
        for arm in 0..feats.n_arms() {
            match env.reward(task, arm) {
                Ok(r) if r.is_hit() => {
                    winner = Some(arm);
                    break;
                }
                Ok(_) => {}
                Err(_) => continue 'tasks,
            }
        }
        out.push((feats, winner));
    }
    Ok(out)
}
