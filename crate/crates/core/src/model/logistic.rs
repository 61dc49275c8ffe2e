//! L2-regularized logistic regression on the flattened W*F vector.
//!
//! Exists so explainer correctness can be tested against an analytically
//! understood black box. Zero-initialized and trained by full-batch Adam, so
//! the fit is deterministic regardless of seed.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{cross_entropy, sigmoid, Adam, ModelKind, Predictor, PredictorDescriptor, TrainConfig};

const L2_PENALTY: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFlat {
    weeks: usize,
    features: usize,
    seed: u64,
    threshold: f64,
    /// Coefficients followed by the intercept (length W*F + 1).
    weights: Vec<f64>,
}

impl LogisticFlat {
    pub fn fit(
        weeks: usize,
        features: usize,
        xs: &[Vec<f64>],
        ys: &[f64],
        config: &TrainConfig,
    ) -> Result<LogisticFlat> {
        let dim = weeks * features;
        let n = xs.len();
        let mut weights = vec![0.0; dim + 1];
        let mut adam = Adam::new(weights.len(), config.learning_rate.max(0.05));
        let mut grad = vec![0.0; weights.len()];
        let mut best = (f64::INFINITY, weights.clone());
        for _ in 0..config.max_epochs.max(200) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut probs = Vec::with_capacity(n);
            for (x, y) in xs.iter().zip(ys) {
                let mut z = weights[dim];
                for d in 0..dim {
                    z += weights[d] * x[d];
                }
                let p = sigmoid(z);
                probs.push(p);
                let err = (p - y) / n as f64;
                for d in 0..dim {
                    grad[d] += err * x[d];
                }
                grad[dim] += err;
            }
            let mut loss = cross_entropy(&probs, ys);
            for d in 0..dim {
                grad[d] += 2.0 * L2_PENALTY * weights[d] / n as f64;
                loss += L2_PENALTY * weights[d] * weights[d] / n as f64;
            }
            if loss < best.0 {
                best = (loss, weights.clone());
            }
            adam.step(&mut weights, &grad);
        }
        Ok(LogisticFlat {
            weeks,
            features,
            seed: config.seed,
            threshold: config.threshold,
            weights: best.1,
        })
    }

    pub fn descriptor(&self) -> PredictorDescriptor {
        PredictorDescriptor {
            kind: ModelKind::LogisticFlat,
            weeks: self.weeks,
            features: self.features,
            seed: self.seed,
            threshold: self.threshold,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.weights[..self.weeks * self.features]
    }
}

impl Predictor for LogisticFlat {
    fn dim(&self) -> usize {
        self.weeks * self.features
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let dim = self.dim();
        Ok(rows
            .iter()
            .map(|x| {
                let mut z = self.weights[dim];
                for d in 0..dim {
                    z += self.weights[d] * x[d];
                }
                sigmoid(z)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_fit() -> LogisticFlat {
        // One week, two features; class is decided by feature 0.
        let xs = vec![
            vec![0.9, 0.1],
            vec![0.8, 0.7],
            vec![0.7, 0.3],
            vec![0.2, 0.6],
            vec![0.1, 0.2],
            vec![0.3, 0.9],
        ];
        let ys = vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        LogisticFlat::fit(1, 2, &xs, &ys, &TrainConfig::default()).unwrap()
    }

    #[test]
    fn separable_toy_data_is_fit() {
        let model = toy_fit();
        let p = model
            .predict(&[vec![0.95, 0.5], vec![0.05, 0.5]])
            .unwrap();
        assert!(p[0] > 0.8, "pass-side prob {}", p[0]);
        assert!(p[1] < 0.2, "fail-side prob {}", p[1]);
        // Feature 0 dominates the fit.
        assert!(model.coefficients()[0] > model.coefficients()[1].abs());
    }

    #[test]
    fn fit_and_predict_are_deterministic() {
        let a = toy_fit();
        let b = toy_fit();
        assert_eq!(a, b);
        let rows = vec![vec![0.4, 0.4]];
        assert_eq!(a.predict(&rows).unwrap(), b.predict(&rows).unwrap());
    }

    #[test]
    fn outputs_in_unit_interval() {
        let model = toy_fit();
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i as f64) * 0.7 - 10.0, 17.0 - i as f64])
            .collect();
        for p in model.predict(&rows).unwrap() {
            assert!((0.0..=1.0).contains(&p) && p.is_finite());
        }
    }
}
