use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{argmax, ArmFeatures, Reward, SelectError};

/// Whether each arm keeps its own `A`, `b` or all arms share one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterSharing {
    #[default]
    Disjoint,
    Shared,
}

/// LinUCB over `n_arms` arms with `d`-dimensional contexts. `A` matrices are
/// stored row-major. In shared mode every arm holds the same copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawState")]
pub struct LinUcbState {
    n_arms: usize,
    d: usize,
    alpha: f64,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    update_count: u64,
    #[serde(default)]
    sharing: ParameterSharing,
}

#[derive(Deserialize)]
struct RawState {
    n_arms: usize,
    d: usize,
    alpha: f64,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    update_count: u64,
    #[serde(default)]
    sharing: ParameterSharing,
}

impl TryFrom<RawState> for LinUcbState {
    type Error = SelectError;

    fn try_from(raw: RawState) -> Result<Self, SelectError> {
        let mut state = LinUcbState::with_sharing(raw.n_arms, raw.d, raw.alpha, raw.sharing)?;
        if raw.a.len() != raw.n_arms || raw.b.len() != raw.n_arms {
            return Err(SelectError::InvalidParam("per-arm parameter count differs from n_arms"));
        }
        for (a, b) in raw.a.iter().zip(&raw.b) {
            if a.len() != raw.d * raw.d {
                return Err(SelectError::DimMismatch { expected: raw.d * raw.d, actual: a.len() });
            }
            if b.len() != raw.d {
                return Err(SelectError::DimMismatch { expected: raw.d, actual: b.len() });
            }
            if a.iter().chain(b).any(|v| !v.is_finite()) {
                return Err(SelectError::NonFinite);
            }
            if DMatrix::from_row_slice(raw.d, raw.d, a).cholesky().is_none() {
                return Err(SelectError::InvalidParam("A is not positive definite"));
            }
        }
        state.a = raw.a;
        state.b = raw.b;
        state.update_count = raw.update_count;
        Ok(state)
    }
}

impl LinUcbState {
    pub const DEFAULT_ALPHA: f64 = 0.1;

    pub fn new(n_arms: usize, d: usize, alpha: f64) -> Result<Self, SelectError> {
        Self::with_sharing(n_arms, d, alpha, ParameterSharing::Disjoint)
    }

    pub fn with_sharing(n_arms: usize, d: usize, alpha: f64, sharing: ParameterSharing) -> Result<Self, SelectError> {
        if n_arms < 2 {
            return Err(SelectError::InvalidParam("n_arms must be at least 2"));
        }
        if d < 1 {
            return Err(SelectError::InvalidParam("d must be at least 1"));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(SelectError::InvalidParam("alpha must be finite and non-negative"));
        }
        let mut identity = vec![0.0; d * d];
        for i in 0..d {
            identity[i * d + i] = 1.0;
        }
        Ok(LinUcbState {
            n_arms,
            d,
            alpha,
            a: vec![identity; n_arms],
            b: vec![vec![0.0; d]; n_arms],
            update_count: 0,
            sharing,
        })
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<(), SelectError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(SelectError::InvalidParam("alpha must be finite and non-negative"));
        }
        self.alpha = alpha;
        Ok(())
    }

    pub fn sharing(&self) -> ParameterSharing {
        self.sharing
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    /// Row-major `A` of one arm.
    pub fn a_matrix(&self, arm: usize) -> &[f64] {
        &self.a[arm]
    }

    pub fn b_vector(&self, arm: usize) -> &[f64] {
        &self.b[arm]
    }

    fn factor(&self, arm: usize) -> nalgebra::Cholesky<f64, nalgebra::Dyn> {
        DMatrix::from_row_slice(self.d, self.d, &self.a[arm])
            .cholesky()
            .expect("A stays positive definite under rank-one updates")
    }

    /// `theta = A^-1 b` for one arm.
    pub fn theta(&self, arm: usize) -> Vec<f64> {
        self.factor(arm).solve(&DVector::from_column_slice(&self.b[arm])).iter().copied().collect()
    }

    fn check(&self, feats: &ArmFeatures) -> Result<(), SelectError> {
        if feats.n_arms() != self.n_arms {
            return Err(SelectError::DimMismatch { expected: self.n_arms, actual: feats.n_arms() });
        }
        if feats.dim() != self.d {
            return Err(SelectError::DimMismatch { expected: self.d, actual: feats.dim() });
        }
        Ok(())
    }

    /// `theta_a . x_a + alpha * sqrt(x_a^T A_a^-1 x_a)` for every arm.
    pub fn score(&self, feats: &ArmFeatures) -> Result<Vec<f64>, SelectError> {
        self.check(feats)?;
        Ok((0..self.n_arms)
            .map(|arm| {
                let chol = self.factor(arm);
                let x = DVector::from_column_slice(feats.arm(arm));
                let theta = chol.solve(&DVector::from_column_slice(&self.b[arm]));
                let spread = x.dot(&chol.solve(&x)).max(0.0);
                theta.dot(&x) + self.alpha * libm::sqrt(spread)
            })
            .collect())
    }

    pub fn select(&self, feats: &ArmFeatures) -> Result<usize, SelectError> {
        Ok(argmax(&self.score(feats)?))
    }

    /// `A += x x^T`, `b += r x` for the chosen arm (every arm when shared).
    pub fn update(&mut self, arm: usize, x: &[f64], reward: Reward) -> Result<(), SelectError> {
        if arm >= self.n_arms {
            return Err(SelectError::ArmOutOfRange { arm, n_arms: self.n_arms });
        }
        if x.len() != self.d {
            return Err(SelectError::DimMismatch { expected: self.d, actual: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SelectError::NonFinite);
        }
        let arms = match self.sharing {
            ParameterSharing::Disjoint => arm..arm + 1,
            ParameterSharing::Shared => 0..self.n_arms,
        };
        let r = reward.value();
        for a in arms {
            for i in 0..self.d {
                for j in 0..self.d {
                    self.a[a][i * self.d + j] += x[i] * x[j];
                }
                self.b[a][i] += r * x[i];
            }
        }
        self.update_count += 1;
        Ok(())
    }
}
