//! Choosing which perspective's retrieval to use for a query.

mod linucb;
mod logistic;
mod train;

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieve::RetrievalResult;

pub use linucb::{LinUcbState, ParameterSharing};
pub use logistic::{LogisticConfig, LogisticModel};
pub use train::{train_linucb, SelectionEnv, TrainConfig, TrainLog, TrainMode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("invalid parameter: {0}")]
    InvalidParam(&'static str),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("arm {arm} out of range for {n_arms} arms")]
    ArmOutOfRange { arm: usize, n_arms: usize },
    #[error("feature values must be finite")]
    NonFinite,
    #[error("no arm has both positive and negative samples")]
    DegenerateData,
    #[error("no input")]
    EmptyInput,
}

/// One feature vector per arm, in arm order. The similarity features are
/// `[cosine, jaccard]` of the arm's top retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmFeatures {
    rows: Vec<Vec<f64>>,
}

impl ArmFeatures {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, SelectError> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(SelectError::DimMismatch { expected: d, actual: bad.len() });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SelectError::NonFinite);
        }
        Ok(ArmFeatures { rows })
    }

    pub fn n_arms(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn arm(&self, a: usize) -> &[f64] {
        &self.rows[a]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Bandit reward: 1 on an exact match, else 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reward(u8);

impl Reward {
    pub const ZERO: Reward = Reward(0);
    pub const ONE: Reward = Reward(1);

    pub fn value(self) -> f64 {
        f64::from(self.0)
    }

    pub fn is_hit(self) -> bool {
        self.0 == 1
    }
}

impl From<bool> for Reward {
    fn from(hit: bool) -> Self {
        Reward(u8::from(hit))
    }
}

/// `[top-1 cosine, top-1 jaccard]` per arm; an empty arm gives `[0, 0]`.
pub fn build_arm_features(results_per_arm: &[Vec<RetrievalResult>]) -> ArmFeatures {
    let rows = results_per_arm
        .iter()
        .map(|rs| rs.first().map_or(alloc::vec![0.0, 0.0], |r| alloc::vec![r.cosine, r.jaccard]))
        .collect();
    ArmFeatures::new(rows).unwrap_or_else(|_| ArmFeatures { rows: Vec::new() })
}

/// Arm whose top result has the highest cosine; empty arms never win unless
/// every arm is empty. Ties go to the lowest index.
pub fn max_similarity_select(results_per_arm: &[Vec<RetrievalResult>]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (a, rs) in results_per_arm.iter().enumerate() {
        let score = rs.first().map_or(f64::NEG_INFINITY, |r| r.cosine);
        if score > best_score {
            best = a;
            best_score = score;
        }
    }
    best
}

/// All arms' results concatenated in arm order, optionally keeping only the
/// first occurrence of each snippet.
pub fn union_context(results_per_arm: &[Vec<RetrievalResult>], dedup: bool) -> Vec<RetrievalResult> {
    let mut seen = BTreeSet::new();
    results_per_arm
        .iter()
        .flatten()
        .filter(|r| !dedup || seen.insert(r.snippet_id.clone()))
        .cloned()
        .collect()
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
