use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{argmax, ArmFeatures, SelectError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { learning_rate: 0.1, epochs: 500, l2: 1e-4 }
    }
}

/// One-vs-rest logistic regression: arm `a` predicts its own success from its
/// own feature row. Arms whose training labels were all one class keep a
/// constant `prior` (the class rate) instead of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    #[serde(default)]
    pub prior: Vec<Option<f64>>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

impl LogisticModel {
    /// Trains on `(features, winning arm)` samples; `None` means no arm succeeded.
    pub fn train(samples: &[(ArmFeatures, Option<usize>)], cfg: &LogisticConfig) -> Result<Self, SelectError> {
        let first = samples.first().ok_or(SelectError::EmptyInput)?;
        let (n_arms, d) = (first.0.n_arms(), first.0.dim());
        for (f, winner) in samples {
            if f.n_arms() != n_arms || f.dim() != d {
                return Err(SelectError::DimMismatch { expected: n_arms * d, actual: f.n_arms() * f.dim() });
            }
            if let Some(w) = *winner {
                if w >= n_arms {
                    return Err(SelectError::ArmOutOfRange { arm: w, n_arms });
                }
            }
        }
        let mut model = LogisticModel { weights: vec![vec![0.0; d]; n_arms], bias: vec![0.0; n_arms], prior: vec![None; n_arms] };
        let n = samples.len() as f64;
        for arm in 0..n_arms {
            let positives = samples.iter().filter(|s| s.1 == Some(arm)).count();
            if positives == 0 || positives == samples.len() {
                model.prior[arm] = Some(positives as f64 / n);
                continue;
            }
            let (mut w, mut b) = (vec![0.0; d], 0.0);
            for _ in 0..cfg.epochs {
                let (gw, gb) = Self::gradient(samples, arm, &w, b, cfg.l2);
                for (wi, gi) in w.iter_mut().zip(&gw) {
                    *wi -= cfg.learning_rate * gi;
                }
                b -= cfg.learning_rate * gb;
            }
            model.weights[arm] = w;
            model.bias[arm] = b;
        }
        if model.prior.iter().all(Option::is_some) {
            return Err(SelectError::DegenerateData);
        }
        Ok(model)
    }

    /// Mean log-loss of arm `arm` plus `l2 / 2 * |w|^2`.
    pub fn objective(samples: &[(ArmFeatures, Option<usize>)], arm: usize, w: &[f64], b: f64, l2: f64) -> f64 {
        let n = samples.len() as f64;
        let loss: f64 = samples
            .iter()
            .map(|(f, winner)| {
                let z = dot(w, f.arm(arm)) + b;
                // log(1 + e^z) - y z, computed stably
                let softplus = if z > 0.0 { z + libm::log1p(libm::exp(-z)) } else { libm::log1p(libm::exp(z)) };
                softplus - if *winner == Some(arm) { z } else { 0.0 }
            })
            .sum();
        loss / n + 0.5 * l2 * dot(w, w)
    }

    /// Gradient of [`LogisticModel::objective`] with respect to `(w, b)`.
    pub fn gradient(samples: &[(ArmFeatures, Option<usize>)], arm: usize, w: &[f64], b: f64, l2: f64) -> (Vec<f64>, f64) {
        let n = samples.len() as f64;
        let mut gw = vec![0.0; w.len()];
        let mut gb = 0.0;
        for (f, winner) in samples {
            let x = f.arm(arm);
            let y = if *winner == Some(arm) { 1.0 } else { 0.0 };
            let err = sigmoid(dot(w, x) + b) - y;
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += err * xi;
            }
            gb += err;
        }
        for (g, wi) in gw.iter_mut().zip(w) {
            *g = *g / n + l2 * wi;
        }
        (gw, gb / n)
    }

    pub fn n_arms(&self) -> usize {
        self.bias.len()
    }

    /// Predicted success probability per arm.
    pub fn predict(&self, feats: &ArmFeatures) -> Result<Vec<f64>, SelectError> {
        if feats.n_arms() != self.n_arms() {
            return Err(SelectError::DimMismatch { expected: self.n_arms(), actual: feats.n_arms() });
        }
        Ok((0..self.n_arms())
            .map(|arm| match self.prior.get(arm).copied().flatten() {
                Some(p) => p,
                None => sigmoid(dot(&self.weights[arm], feats.arm(arm)) + self.bias[arm]),
            })
            .collect())
    }

    pub fn select(&self, feats: &ArmFeatures) -> Result<usize, SelectError> {
        Ok(argmax(&self.predict(feats)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separable_fixture_is_learned() {
        // arm 0 succeeds iff its cosine exceeds 0.5; otherwise arm 1 is credited
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<_> = (0..400)
            .map(|_| {
                let rows: Vec<Vec<f64>> = (0..2).map(|_| vec![rng.random::<f64>(), rng.random::<f64>() * 0.3]).collect();
                let winner = if rows[0][0] > 0.5 { Some(0) } else { Some(1) };
                (ArmFeatures::new(rows).unwrap(), winner)
            })
            .collect();
        let model = LogisticModel::train(&data, &LogisticConfig { epochs: 3000, learning_rate: 1.0, ..LogisticConfig::default() }).unwrap();
        let correct = data
            .iter()
            .filter(|(f, w)| (model.predict(f).unwrap()[0] > 0.5) == (*w == Some(0)))
            .count();
        assert!(correct as f64 / data.len() as f64 >= 0.95, "accuracy {correct}/400");
    }

    #[test]
    fn symmetric_data_ties_to_arm_zero() {
        let f = ArmFeatures::new(vec![vec![0.5, 0.1], vec![0.5, 0.1]]).unwrap();
        let g = ArmFeatures::new(vec![vec![0.2, 0.0], vec![0.2, 0.0]]).unwrap();
        let data = vec![(f.clone(), Some(0)), (f.clone(), Some(1)), (g.clone(), None), (g, None)];
        let model = LogisticModel::train(&data, &LogisticConfig::default()).unwrap();
        assert_eq!(model.weights[0], model.weights[1]);
        assert_eq!(model.select(&f).unwrap(), 0);
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // noisy labels keep the optimum finite
        let data: Vec<_> = (0..200)
            .map(|_| {
                let rows: Vec<Vec<f64>> = (0..2).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
                let p = rows[0][0];
                let winner = if rng.random::<f64>() < p { Some(0) } else { Some(1) };
                (ArmFeatures::new(rows).unwrap(), winner)
            })
            .collect();
        let cfg = LogisticConfig { epochs: 20000, learning_rate: 1.0, l2: 1e-4 };
        let model = LogisticModel::train(&data, &cfg).unwrap();
        let (w, b) = (&model.weights[0], model.bias[0]);
        let h = 1e-5;
        let f = |w: &[f64], b: f64| LogisticModel::objective(&data, 0, w, b, cfg.l2);
        for i in 0..w.len() {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (f(&up, b) - f(&down, b)) / (2.0 * h);
            assert!(fd.abs() < 1e-4, "d/dw{i} = {fd}");
        }
        let fd_b = (f(w, b + h) - f(w, b - h)) / (2.0 * h);
        assert!(fd_b.abs() < 1e-4, "d/db = {fd_b}");
        // analytic gradient agrees with finite differences at an arbitrary point
        let (gw, gb) = LogisticModel::gradient(&data, 1, &[0.3, -0.7], 0.2, cfg.l2);
        let g = |w: &[f64], b: f64| LogisticModel::objective(&data, 1, w, b, cfg.l2);
        assert!(((g(&[0.3 + h, -0.7], 0.2) - g(&[0.3 - h, -0.7], 0.2)) / (2.0 * h) - gw[0]).abs() < 1e-7);
        assert!(((g(&[0.3, -0.7], 0.2 + h) - g(&[0.3, -0.7], 0.2 - h)) / (2.0 * h) - gb).abs() < 1e-7);
    }

    #[test]
    fn degenerate_arms_use_class_rate() {
        let f = ArmFeatures::new(vec![vec![0.9, 0.1], vec![0.1, 0.1], vec![0.4, 0.0]]).unwrap();
        let g = ArmFeatures::new(vec![vec![0.1, 0.1], vec![0.2, 0.1], vec![0.4, 0.0]]).unwrap();
        let data = vec![(f.clone(), Some(0)), (g, None)];
        let model = LogisticModel::train(&data, &LogisticConfig::default()).unwrap();
        assert_eq!(model.prior, vec![None, Some(0.0), Some(0.0)]);
        let none_learnable = vec![(f, None)];
        assert_eq!(LogisticModel::train(&none_learnable, &LogisticConfig::default()), Err(SelectError::DegenerateData));
        assert_eq!(LogisticModel::train(&[], &LogisticConfig::default()), Err(SelectError::EmptyInput));
    }
}
