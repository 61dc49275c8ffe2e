//! The opaque predictor contract, reference trainable models, stratified
//! splitting, and balanced accuracy.

mod logistic;
mod recurrent;

pub use logistic::LogisticFlat;
pub use recurrent::RecurrentNet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clickstream::StudentLabel;
use crate::error::{CoreError, Result};
use crate::features::FeatureMatrix;

/// A pass-probability function over flattened per-student week-major feature
/// rows. This is the explainers' only view of a model: outputs lie in [0,1],
/// prediction is pure and deterministic.
pub trait Predictor: Send + Sync {
    /// Input dimension per row (W * F for course models).
    fn dim(&self) -> usize;

    /// One probability per input row. Rows must have length `dim()`.
    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>>;
}

/// Predict with an explicit shape check, one probability per student row.
pub fn predict(model: &dyn Predictor, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != model.dim() {
            return Err(CoreError::ShapeMismatch(format!(
                "row {i} has {} dims, predictor expects {}",
                row.len(),
                model.dim()
            )));
        }
    }
    model.predict(rows)
}

/// Adapter exposing a plain function as a [`Predictor`]; used to build
/// analytically-understood black boxes in tests and experiments.
pub struct FnPredictor<F: Fn(&[f64]) -> f64 + Send + Sync> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnPredictor<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnPredictor { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Predictor for FnPredictor<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(rows.iter().map(|r| (self.f)(r)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticFlat,
    RecurrentNet,
}

/// Training hyperparameters. Defaults follow the reference recurrent
/// architecture (hidden sizes 32 and 64 in layer order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub hidden: (usize, usize),
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::RecurrentNet,
            hidden: (32, 64),
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return Err(CoreError::invalid("hidden sizes must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::invalid("learning_rate must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(CoreError::invalid("max_epochs must be positive"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CoreError::invalid("threshold must be in [0,1]"));
        }
        Ok(())
    }
}

/// Train/test split parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Stratified split over pass/fail labels: the training side receives
/// `round(fraction * n)` students of each class, chosen by seeded shuffle.
/// Returned id lists are sorted; their union is exactly the label set.
pub fn stratified_split(
    labels: &[StudentLabel],
    spec: &SplitSpec,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(CoreError::invalid("train_fraction must be in (0,1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [true, false] {
        let mut members: Vec<&str> = labels
            .iter()
            .filter(|l| l.passed == class)
            .map(|l| l.student_id.as_str())
            .collect();
        if members.len() < 2 {
            return Err(CoreError::invalid(format!(
                "class passed={class} has {} member(s); need at least 2",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n_train = (spec.train_fraction * members.len() as f64).round() as usize;
        for (i, id) in members.into_iter().enumerate() {
            if i < n_train {
                train.push(id.to_string());
            } else {
                test.push(id.to_string());
            }
        }
    }
    train.sort();
    test.sort();
    Ok((train, test))
}

/// Mean of true-positive and true-negative rate at the given threshold
/// (predicted positive iff probability >= threshold).
pub fn balanced_accuracy(probabilities: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    balanced_accuracy_with(probabilities, labels, |p| p >= threshold)
}

/// Balanced accuracy under an arbitrary decision rule. Exposed so complement
/// symmetry (1-p with flipped threshold semantics) can be tested exactly.
pub fn balanced_accuracy_with(
    probabilities: &[f64],
    labels: &[bool],
    decide_positive: impl Fn(f64) -> bool,
) -> Result<f64> {
    if probabilities.len() != labels.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "{} probabilities vs {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fng, mut tn, mut fp) = (0u64, 0u64, 0u64, 0u64);
    for (p, y) in probabilities.iter().zip(labels) {
        match (decide_positive(*p), *y) {
            (true, true) => tp += 1,
            (false, true) => fng += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
        }
    }
    if tp + fng == 0 || tn + fp == 0 {
        return Err(CoreError::invalid(
            "balanced accuracy needs both classes present",
        ));
    }
    let tpr = tp as f64 / (tp + fng) as f64;
    let tnr = tn as f64 / (tn + fp) as f64;
    Ok((tpr + tnr) / 2.0)
}

/// A trained model with its descriptor; implements [`Predictor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainedModel {
    Logistic(LogisticFlat),
    Recurrent(RecurrentNet),
}

/// Descriptor header carried by every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorDescriptor {
    pub kind: ModelKind,
    pub weeks: usize,
    pub features: usize,
    pub seed: u64,
    pub threshold: f64,
}

/// Versioned JSON checkpoint: descriptor header plus weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub descriptor: PredictorDescriptor,
    pub model: TrainedModel,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl TrainedModel {
    pub fn descriptor(&self) -> PredictorDescriptor {
        match self {
            TrainedModel::Logistic(m) => m.descriptor(),
            TrainedModel::Recurrent(m) => m.descriptor(),
        }
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        let checkpoint = Checkpoint {
            version: CHECKPOINT_VERSION,
            descriptor: self.descriptor(),
            model: self.clone(),
        };
        Ok(serde_json::to_string(&checkpoint)?)
    }

    pub fn from_checkpoint_json(json: &str) -> Result<TrainedModel> {
        let checkpoint: Checkpoint = serde_json::from_str(json)?;
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(CoreError::invalid(format!(
                "unsupported checkpoint version {}",
                checkpoint.version
            )));
        }
        Ok(checkpoint.model)
    }

    pub fn threshold(&self) -> f64 {
        self.descriptor().threshold
    }
}

impl Predictor for TrainedModel {
    fn dim(&self) -> usize {
        match self {
            TrainedModel::Logistic(m) => m.dim(),
            TrainedModel::Recurrent(m) => m.dim(),
        }
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Logistic(m) => m.predict(rows),
            TrainedModel::Recurrent(m) => m.predict(rows),
        }
    }
}

/// Fit a model on the training students of a normalized, imputed matrix.
pub fn train(
    matrix: &FeatureMatrix,
    labels: &[StudentLabel],
    train_ids: &[String],
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if matrix.has_nan() {
        return Err(CoreError::invalid("train requires an imputed matrix"));
    }
    let mut xs = Vec::with_capacity(train_ids.len());
    let mut ys = Vec::with_capacity(train_ids.len());
    for id in train_ids {
        let s = matrix
            .student_index(id)
            .ok_or_else(|| CoreError::invalid(format!("unknown student {id}")))?;
        let label = labels
            .iter()
            .find(|l| &l.student_id == id)
            .ok_or_else(|| CoreError::invalid(format!("no label for {id}")))?;
        xs.push(matrix.student_row(s));
        ys.push(if label.passed { 1.0 } else { 0.0 });
    }
    if ys.iter().all(|y| *y == 1.0) || ys.iter().all(|y| *y == 0.0) {
        return Err(CoreError::invalid(
            "degenerate single-class training set",
        ));
    }
    match config.kind {
        ModelKind::LogisticFlat => Ok(TrainedModel::Logistic(LogisticFlat::fit(
            matrix.weeks,
            matrix.n_features(),
            &xs,
            &ys,
            config,
        )?)),
        ModelKind::RecurrentNet => Ok(TrainedModel::Recurrent(RecurrentNet::fit(
            matrix.weeks,
            matrix.n_features(),
            &xs,
            &ys,
            config,
        )?)),
    }
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy with clamped probabilities.
pub(crate) fn cross_entropy(probs: &[f64], ys: &[f64]) -> f64 {
    let mut loss = 0.0;
    for (p, y) in probs.iter().zip(ys) {
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    loss / probs.len() as f64
}

/// Full-batch Adam with the usual bias correction; deterministic.
pub(crate) struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub(crate) fn new(n: usize, lr: f64) -> Adam {
        Adam {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}
