//! Seeded synthetic environments with known optimal behaviour, used to check
//! selectors and the end-to-end pipeline without a real model.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CodeSnippet, CompletionTask, FileRef, TaskKind};
use crate::embed::ScriptedGenerator;
use crate::generate::{assemble_augmented_prompt, PromptConfig};
use crate::retrieve::{query_prompt, snippet_prompt, Perspective, PerspectiveId, RetrievalConfig};
use crate::select::{ArmFeatures, Reward, SelectError, SelectionEnv, TrainLog};

/// One bandit round: per-arm `[cosine, jaccard]`, the arm with the highest
/// cosine, and whether the observed reward is flipped.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditTask {
    pub features: ArmFeatures,
    pub optimal: usize,
    pub flipped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditConfig {
    pub n_arms: usize,
    pub label_noise: f64,
    /// Cosine range of the optimal arm.
    pub optimal_cosine: (f64, f64),
    /// Cosine range of every other arm.
    pub other_cosine: (f64, f64),
    pub optimal_jaccard: (f64, f64),
    pub other_jaccard: (f64, f64),
}

impl Default for BanditConfig {
    fn default() -> Self {
        BanditConfig {
            n_arms: 3,
            label_noise: 0.1,
            optimal_cosine: (0.6, 1.0),
            other_cosine: (0.0, 0.5),
            optimal_jaccard: (0.3, 0.4),
            other_jaccard: (0.25, 0.35),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    range.0 + (range.1 - range.0) * rng.random::<f64>()
}

/// Rounds where the reward is 1 iff the chosen arm has the largest cosine,
/// with each round's label flipped with probability `label_noise`.
pub fn bandit_tasks(n: usize, cfg: &BanditConfig, seed: u64) -> Vec<BanditTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let optimal = rng.random_range(0..cfg.n_arms);
            let rows = (0..cfg.n_arms)
                .map(|a| {
                    if a == optimal {
                        alloc::vec![uniform(&mut rng, cfg.optimal_cosine), uniform(&mut rng, cfg.optimal_jaccard)]
                    } else {
                        alloc::vec![uniform(&mut rng, cfg.other_cosine), uniform(&mut rng, cfg.other_jaccard)]
                    }
                })
                .collect();
            let flipped = rng.random::<f64>() < cfg.label_noise;
            BanditTask { features: ArmFeatures::new(rows).expect("finite features"), optimal, flipped }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BanditEnv;

impl SelectionEnv for BanditEnv {
    type Task = BanditTask;
    type Error = SelectError;

    fn arm_features(&mut self, task: &BanditTask) -> Result<ArmFeatures, SelectError> {
        Ok(task.features.clone())
    }

    fn reward(&mut self, task: &BanditTask, arm: usize) -> Result<Reward, SelectError> {
        Ok(Reward::from((arm == task.optimal) != task.flipped))
    }
}

/// Cumulative expected regret after each round. A suboptimal choice costs
/// `(1 - noise) - noise`, the gap in expected reward.
pub fn cumulative_regret(log: &TrainLog, tasks: &[BanditTask], label_noise: f64) -> Vec<f64> {
    let gap = 1.0 - 2.0 * label_noise;
    let mut total = 0.0;
    log.rounds
        .iter()
        .map(|r| {
            if r.arm != tasks[r.task_index].optimal {
                total += gap;
            }
            total
        })
        .collect()
}

/// A retrieval benchmark where every task is solvable through exactly one
/// perspective: that perspective retrieves the snippet holding the answer,
/// the others retrieve a decoy. The scripted generator answers from the first
/// snippet in its prompt's context.
#[derive(Debug, Clone)]
pub struct VennBenchmark {
    pub snippets: Vec<CodeSnippet>,
    pub validation: Vec<CompletionTask>,
    pub test: Vec<CompletionTask>,
    pub generator: ScriptedGenerator,
    /// Perspective that solves each task, by task id.
    pub solvable_by: BTreeMap<String, PerspectiveId>,
}

/// Embedding width that keeps hashed-feature collisions between the
/// benchmark's snippets negligible.
pub const VENN_EMBED_DIM: usize = 1024;

pub const VENN_PERSPECTIVES: [PerspectiveId; 3] = [PerspectiveId::Lexical, PerspectiveId::HypoLine, PerspectiveId::Summary];

struct Words {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Words {
    fn next(&mut self) -> String {
        const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
        const VOWELS: &[u8] = b"aeiou";
        loop {
            let mut w = String::new();
            for _ in 0..3 {
                w.push(char::from(CONSONANTS[self.rng.random_range(0..CONSONANTS.len())]));
                w.push(char::from(VOWELS[self.rng.random_range(0..VOWELS.len())]));
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn many(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.next()).collect()
    }
}

/// Opening of a small method using eight identifiers.
fn method_head(w: &[String]) -> String {
    format!("void {}() {{\n    {}.{}({});\n    {}.{}({}, {});\n", w[0], w[1], w[2], w[3], w[4], w[5], w[6], w[7])
}

fn method(w: &[String], last: &str) -> String {
    format!("{}    {last}\n}}\n", method_head(w))
}

/// Builds `n_test + n_validation` tasks (each a multiple of three), split
/// evenly across the three perspectives.
pub fn venn_benchmark(seed: u64, n_test: usize, n_validation: usize, retrieval: &RetrievalConfig, prompt: &PromptConfig) -> VennBenchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = Words { rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed), used: BTreeSet::new() };
    let total = n_test + n_validation;
    let mut groups: Vec<PerspectiveId> = (0..total).map(|i| VENN_PERSPECTIVES[i % 3]).collect();
    groups[..n_test].shuffle(&mut rng);
    groups[n_test..].shuffle(&mut rng);

    let mut generator = ScriptedGenerator::new();
    let mut snippets = Vec::new();
    let mut tasks = Vec::new();
    let mut solvable_by = BTreeMap::new();
    let hypo = Perspective::HYPO_LINE;
    let summary = Perspective::SUMMARY;

    for (i, &group) in groups.iter().enumerate() {
        let ctx = words.many(8);
        let answer = words.many(2);
        let ground_truth = format!("    return {}.{}();", answer[0], answer[1]);
        let prefix = method_head(&ctx);
        let rel_path = format!("Task{i}.java");
        let task = CompletionTask {
            task_id: format!("venn/{rel_path}:4:rl"),
            kind: TaskKind::RandomLine,
            prefix: prefix.clone(),
            suffix: String::from("\n}\n"),
            ground_truth: ground_truth.clone(),
            source_file: FileRef { repo_id: String::from("venn"), rel_path: rel_path.clone() },
            hole_start_line: 4,
        };

        // The answer snippet copies the task for lexical tasks and is unrelated otherwise;
        // the decoy shares part of the task's vocabulary.
        let key_text = if group == PerspectiveId::Lexical {
            method(&ctx, ground_truth.trim())
        } else {
            method(&words.many(8), ground_truth.trim())
        };
        let mut filler = words.many(7);
        let wrong_name = filler.pop().unwrap();
        let decoy_words: Vec<String> = ctx[..2].iter().cloned().chain(filler).collect();
        let decoy_text = method(&decoy_words, &format!("return {wrong_name}();"));
        let key = CodeSnippet::new("venn", format!("lib/Key{i}.java"), 1, 5, key_text);
        let decoy = CodeSnippet::new("venn", format!("lib/Decoy{i}.java"), 1, 5, decoy_text);

        // Generative perspectives: the task's query generation matches the answer
        // snippet's generation for its own perspective and half-matches the decoy's otherwise.
        for p in [hypo, summary] {
            let key_words = words.many(4);
            let decoy_words = words.many(4);
            generator.script(&snippet_prompt(&p, &key).expect("dense perspective"), key_words.join(" "));
            generator.script(&snippet_prompt(&p, &decoy).expect("dense perspective"), decoy_words.join(" "));
            let query = if p.id == group {
                key_words.join(" ")
            } else {
                let fresh = words.many(2);
                format!("{} {} {} {}", decoy_words[0], decoy_words[1], fresh[0], fresh[1])
            };
            generator.script(&query_prompt(&p, &task, retrieval).expect("dense perspective"), query);
        }

        // Completion: answer from the first context snippet.
        let wrong = format!("    return {wrong_name}();");
        let lang = task.language();
        let complete = |ctx: &[&str]| assemble_augmented_prompt(prompt, lang, ctx, &task.prefix, &task.suffix);
        generator.script(&complete(&[&key.text]), ground_truth.clone());
        generator.script(&complete(&[&decoy.text]), wrong.clone());
        generator.script(&complete(&[&key.text, &decoy.text]), ground_truth.clone());
        generator.script(&complete(&[&decoy.text, &key.text]), wrong);

        solvable_by.insert(task.task_id.clone(), group);
        snippets.push(key);
        snippets.push(decoy);
        tasks.push(task);
    }
    let validation = tasks.split_off(n_test);
    VennBenchmark { snippets, validation, test: tasks, generator, solvable_by }
}
