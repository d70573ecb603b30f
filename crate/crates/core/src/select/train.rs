use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArmFeatures, LinUcbState, Reward, SelectError};

/// Source of contexts and rewards for selector training.
pub trait SelectionEnv {
    type Task;
    type Error: From<SelectError>;

    fn arm_features(&mut self, task: &Self::Task) -> Result<ArmFeatures, Self::Error>;

    /// Reward for answering `task` with `arm`'s retrieval. An error marks the
    /// task as failed; training skips it and counts it.
    fn reward(&mut self, task: &Self::Task, arm: usize) -> Result<Reward, Self::Error>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Update only the selected arm with its observed reward.
    #[default]
    OnPolicy,
    /// Evaluate every arm on every task and update all of them.
    FullInformation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub passes: usize,
    pub shuffle_seed: u64,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { passes: 1, shuffle_seed: 0, mode: TrainMode::OnPolicy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub pass: usize,
    /// Position of the task in the caller's slice.
    pub task_index: usize,
    pub arm: usize,
    /// `None` when the task failed and was skipped.
    pub reward: Option<Reward>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rounds: Vec<Round>,
    pub skipped: usize,
    /// Fraction of non-skipped selections per pass that earned reward 1.
    pub pass_accuracy: Vec<f64>,
}

/// Sequential bandit training over `tasks`, reshuffled with a seeded RNG each pass.
pub fn train_linucb<E: SelectionEnv>(
    state: &mut LinUcbState,
    tasks: &[E::Task],
    env: &mut E,
    cfg: &TrainConfig,
) -> Result<TrainLog, E::Error> {
    if tasks.is_empty() {
        return Err(SelectError::EmptyInput.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    for pass in 0..cfg.passes {
        order.shuffle(&mut rng);
        let (mut hits, mut seen) = (0usize, 0usize);
        for &i in &order {
            let feats = env.arm_features(&tasks[i])?;
            let arm = state.select(&feats)?;
            let reward = match cfg.mode {
                TrainMode::OnPolicy => match env.reward(&tasks[i], arm) {
                    Ok(r) => {
                        state.update(arm, feats.arm(arm), r)?;
                        Some(r)
                    }
                    Err(_) => None,
                },
                TrainMode::FullInformation => {
                    let rewards: Vec<Option<Reward>> = (0..feats.n_arms()).map(|a| env.reward(&tasks[i], a).ok()).collect();
                    for (a, r) in rewards.iter().enumerate() {
                        if let Some(r) = r {
                            state.update(a, feats.arm(a), *r)?;
                        }
                    }
                    rewards[arm]
                }
            };
            match reward {
                Some(r) => {
                    seen += 1;
                    hits += usize::from(r.is_hit());
                }
                None => log.skipped += 1,
            }
            log.rounds.push(Round { pass, task_index: i, arm, reward });
        }
        log.pass_accuracy.push(if seen == 0 { 0.0 } else { hits as f64 / seen as f64 });
    }
    Ok(log)
}
