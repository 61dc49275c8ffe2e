//! Instance-level attribution methods over a shared [`Predictor`]: local
//! surrogate (LIME style), Shapley values (exact enumeration and KernelSHAP),
//! and the deliberately sign-flipped counterfactual confounder, plus score
//! normalization, week aggregation, and the representative-student sampler.
//!
//! All explainers operate on the flattened week-major W*F space and are
//! deterministic given (predictor, instance, seed). Per-student substream
//! seeds come from [`student_seed`] so concurrent fan-out cannot change
//! results.

mod confounder;
mod lime;
mod shapley;

pub use confounder::{
    counterfactual_confounder, counterfactual_importance, ConfounderConfig, CounterfactualSearch,
};
pub use lime::{lime_explain, LimeConfig};
pub use shapley::{exact_shapley, kernel_shap, EXACT_SHAPLEY_MAX_DIMS};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::features::FeatureMatrix;
use crate::fnv1a64;

/// Attribution method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lime,
    Shap,
    ExactShapley,
    Confounder,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Lime => "lime",
            Method::Shap => "shap",
            Method::ExactShapley => "exact_shapley",
            Method::Confounder => "confounder",
        }
    }

    pub fn from_str(s: &str) -> Option<Method> {
        Some(match s {
            "lime" => Method::Lime,
            "shap" => Method::Shap,
            "exact_shapley" => Method::ExactShapley,
            "confounder" => Method::Confounder,
            _ => return None,
        })
    }
}

/// Non-fatal conditions attached to an explanation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationFlag {
    /// The WLS system was singular; solved with a 1e-6 ridge fallback.
    RegularizedSolve,
    /// The counterfactual search hit max_iters without flipping the class.
    BoundaryNotCrossed,
}

/// Signed per-dimension attribution for one student, with max-abs normalized
/// magnitudes and separated signs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub student_id: String,
    pub method: Method,
    /// Signed raw attributions, indexed week-major: `week * F + feature`
    /// (or one per feature after [`aggregate_weeks`]).
    pub raw: Vec<f64>,
    /// Magnitudes scaled into [0,1] by the largest |raw|; all zero when every
    /// raw score is zero.
    pub normalized: Vec<f64>,
    /// Elementwise sign of `raw`: -1, 0, or +1.
    pub signs: Vec<i8>,
    /// Reference prediction v(empty set); Shapley family only.
    pub base_value: Option<f64>,
    pub flags: Vec<ExplanationFlag>,
}

impl Explanation {
    pub fn from_raw(
        student_id: impl Into<String>,
        method: Method,
        raw: Vec<f64>,
        base_value: Option<f64>,
    ) -> Result<Explanation> {
        let (normalized, signs) = normalize_scores(&raw)?;
        Ok(Explanation {
            student_id: student_id.into(),
            method,
            raw,
            normalized,
            signs,
            base_value,
            flags: Vec::new(),
        })
    }

    pub fn with_flag(mut self, flag: ExplanationFlag) -> Explanation {
        self.flags.push(flag);
        self
    }

    /// Count of nonzero raw attributions (LIME sparsity is measured here).
    pub fn nonzero_dims(&self) -> usize {
        self.raw.iter().filter(|v| **v != 0.0).count()
    }
}

/// Max-abs scaling: magnitudes in [0,1] with the sign split off. All-zero
/// input stays all-zero. Errors on non-finite entries.
pub fn normalize_scores(raw: &[f64]) -> Result<(Vec<f64>, Vec<i8>)> {
    if let Some(bad) = raw.iter().find(|v| !v.is_finite()) {
        return Err(CoreError::Numeric(format!(
            "cannot normalize non-finite score {bad}"
        )));
    }
    let max_abs = raw.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let normalized = if max_abs > 0.0 {
        raw.iter().map(|v| v.abs() / max_abs).collect()
    } else {
        vec![0.0; raw.len()]
    };
    let signs = raw
        .iter()
        .map(|v| {
            if *v > 0.0 {
                1
            } else if *v < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect();
    Ok((normalized, signs))
}

/// Collapse a W*F explanation to per-feature scores: the signed mean over
/// weeks, renormalized.
pub fn aggregate_weeks(explanation: &Explanation, weeks: usize, features: usize) -> Result<Explanation> {
    if explanation.raw.len() != weeks * features {
        return Err(CoreError::ShapeMismatch(format!(
            "scores have {} dims, expected {}x{}",
            explanation.raw.len(),
            weeks,
            features
        )));
    }
    let mut per_feature = vec![0.0; features];
    for w in 0..weeks {
        for f in 0..features {
            per_feature[f] += explanation.raw[w * features + f];
        }
    }
    for v in &mut per_feature {
        *v /= weeks as f64;
    }
    let mut out = Explanation::from_raw(
        explanation.student_id.clone(),
        explanation.method,
        per_feature,
        explanation.base_value,
    )?;
    out.flags = explanation.flags.clone();
    Ok(out)
}

/// Per-dimension reference statistics of the (normalized) training matrix:
/// the mean plays "feature removed" in the Shapley value function and the
/// standard deviation scales LIME perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Background {
    /// Flattened W*F means and population standard deviations over the given
    /// (training) students.
    pub fn from_matrix(matrix: &FeatureMatrix, train_ids: &[String]) -> Result<Background> {
        if matrix.has_nan() {
            return Err(CoreError::invalid("background requires an imputed matrix"));
        }
        if train_ids.is_empty() {
            return Err(CoreError::invalid("background needs at least one student"));
        }
        let dim = matrix.dims_per_student();
        let mut rows = Vec::with_capacity(train_ids.len());
        for id in train_ids {
            let s = matrix
                .student_index(id)
                .ok_or_else(|| CoreError::invalid(format!("unknown student {id}")))?;
            rows.push(matrix.student_row(s));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in &rows {
            for d in 0..dim {
                mean[d] += row[d];
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = vec![0.0; dim];
        for row in &rows {
            for d in 0..dim {
                std[d] += (row[d] - mean[d]).powi(2);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
        }
        Ok(Background { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn check_dim(&self, instance: &[f64]) -> Result<()> {
        if instance.len() != self.dim() {
            return Err(CoreError::ShapeMismatch(format!(
                "instance has {} dims, background has {}",
                instance.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Deterministic per-student RNG substream seed.
pub fn student_seed(base_seed: u64, student_id: &str) -> u64 {
    base_seed ^ fnv1a64(student_id)
}

/// Probability-ordered uniform sampling of representative students.
///
/// Per class, members are sorted by predicted probability (ties by position)
/// and picked at evenly spaced ranks `floor(i*(N-1)/(k-1))`, which always
/// includes the least- and most-confident members. Failing students come
/// first in the result, then passing, matching the study protocol.
pub fn sample_students(
    probabilities: &[f64],
    labels: &[bool],
    student_ids: &[String],
    n_per_class: usize,
) -> Result<Vec<String>> {
    if probabilities.len() != labels.len() || labels.len() != student_ids.len() {
        return Err(CoreError::ShapeMismatch(
            "probabilities, labels, and ids must align".into(),
        ));
    }
    if n_per_class == 0 {
        return Err(CoreError::invalid("n_per_class must be positive"));
    }
    let mut out = Vec::new();
    for class in [false, true] {
        let mut members: Vec<(f64, usize)> = probabilities
            .iter()
            .zip(labels)
            .enumerate()
            .filter(|(_, (_, y))| **y == class)
            .map(|(i, (p, _))| (*p, i))
            .collect();
        if members.is_empty() {
            return Err(CoreError::invalid(format!(
                "class passed={class} is empty"
            )));
        }
        members.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let n = members.len();
        let k = n_per_class.min(n);
        let picks: Vec<usize> = if k == n {
            (0..n).collect()
        } else if k == 1 {
            vec![0]
        } else {
            (0..k).map(|i| i * (n - 1) / (k - 1)).collect()
        };
        for i in picks {
            out.push(student_ids[members[i].1].clone());
        }
    }
    Ok(out)
}

/// Long CSV serialization of W*F explanations:
/// `student_id,method,feature,week,raw,normalized,sign`.
pub fn explanations_to_csv(
    explanations: &[Explanation],
    weeks: usize,
    features: &[String],
) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["student_id", "method", "feature", "week", "raw", "normalized", "sign"])?;
    for e in explanations {
        if e.raw.len() != weeks * features.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "explanation for {} has {} dims, expected {}",
                e.student_id,
                e.raw.len(),
                weeks * features.len()
            )));
        }
        for w in 0..weeks {
            for (f, feature) in features.iter().enumerate() {
                let d = w * features.len() + f;
                wtr.write_record([
                    e.student_id.as_str(),
                    e.method.as_str(),
                    feature.as_str(),
                    &w.to_string(),
                    &e.raw[d].to_string(),
                    &e.normalized[d].to_string(),
                    &i32::from(e.signs[d]).to_string(),
                ])?;
            }
        }
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| CoreError::invalid(format!("csv flush: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CoreError::invalid(format!("csv utf8: {e}")))
}

/// Rebuild explanations from the long CSV (inverse of [`explanations_to_csv`];
/// normalized/sign columns are recomputed from raw and must agree).
pub fn explanations_from_csv(
    csv_text: &str,
    weeks: usize,
    features: &[String],
) -> Result<Vec<Explanation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(csv_text.as_bytes());
    let dim = weeks * features.len();
    // (student, method) -> raw vector, in first-seen order.
    let mut order: Vec<(String, Method)> = Vec::new();
    let mut raws: std::collections::HashMap<(String, Method), Vec<f64>> =
        std::collections::HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let student = record.get(0).unwrap_or("").to_string();
        let method = Method::from_str(record.get(1).unwrap_or(""))
            .ok_or_else(|| CoreError::parse(line, "unknown method"))?;
        let feature = record.get(2).unwrap_or("");
        let f = features
            .iter()
            .position(|x| x == feature)
            .ok_or_else(|| CoreError::parse(line, format!("unknown feature {feature}")))?;
        let w: usize = record
            .get(3)
            .unwrap_or("")
            .parse()
            .map_err(|_| CoreError::parse(line, "bad week"))?;
        if w >= weeks {
            return Err(CoreError::parse(line, "week out of range"));
        }
        let raw: f64 = record
            .get(4)
            .unwrap_or("")
            .parse()
            .map_err(|_| CoreError::parse(line, "bad raw score"))?;
        let key = (student.clone(), method);
        let entry = raws.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            vec![f64::NAN; dim]
        });
        entry[w * features.len() + f] = raw;
    }
    let mut out = Vec::new();
    for key in order {
        let raw = raws.remove(&key).unwrap();
        if raw.iter().any(|v| v.is_nan()) {
            return Err(CoreError::invalid(format!(
                "incomplete explanation for {}",
                key.0
            )));
        }
        out.push(Explanation::from_raw(key.0, key.1, raw, None)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_hand_case() {
        let (norm, signs) = normalize_scores(&[0.5, -1.0, 0.25]).unwrap();
        assert_eq!(norm, vec![0.5, 1.0, 0.25]);
        assert_eq!(signs, vec![1, -1, 1]);
    }

    #[test]
    fn normalize_all_zeros_stays_zero() {
        let (norm, signs) = normalize_scores(&[0.0, 0.0]).unwrap();
        assert_eq!(norm, vec![0.0, 0.0]);
        assert_eq!(signs, vec![0, 0]);
    }

    #[test]
    fn normalize_rejects_non_finite() {
        assert!(normalize_scores(&[1.0, f64::NAN]).is_err());
        assert!(normalize_scores(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn aggregate_weeks_mean_and_identity() {
        let e = Explanation::from_raw("s", Method::Shap, vec![0.2, 0.4, 0.6, 0.8], Some(0.1)).unwrap();
        let agg = aggregate_weeks(&e, 2, 2).unwrap();
        assert_eq!(agg.raw, vec![0.4, 0.6000000000000001]);

        let single = Explanation::from_raw("s", Method::Shap, vec![0.3, -0.7], None).unwrap();
        let agg = aggregate_weeks(&single, 1, 2).unwrap();
        assert_eq!(agg.raw, single.raw);
    }

    #[test]
    fn aggregate_weeks_sign_cancellation() {
        let e = Explanation::from_raw("s", Method::Lime, vec![1.0, 0.0, -1.0, 0.0], None).unwrap();
        let agg = aggregate_weeks(&e, 2, 2).unwrap();
        assert_eq!(agg.raw[0], 0.0);
        assert_eq!(agg.signs[0], 0);
    }

    #[test]
    fn sampler_spacing_formula() {
        // 10 failing students, k=4 -> ranked indices {0,3,6,9}.
        let probs: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let labels = vec![false; 10];
        let ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let picked = sample_students(&probs, &labels, &ids, 4).unwrap();
        assert_eq!(picked, vec!["s0", "s3", "s6", "s9"]);
    }

    #[test]
    fn sampler_small_class_takes_all() {
        let probs = vec![0.9, 0.1, 0.5];
        let labels = vec![true, true, true];
        let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let err = sample_students(&probs, &labels, &ids, 2);
        assert!(err.is_err(), "failing class empty");
        let labels = vec![true, false, true];
        let picked = sample_students(&probs, &labels, &ids, 50).unwrap();
        // Failing first, then passing ordered by probability.
        assert_eq!(picked, vec!["b", "c", "a"]);
    }

    #[test]
    fn explanation_csv_round_trip() {
        let features = vec!["f1".to_string(), "f2".to_string()];
        let e1 = Explanation::from_raw("s1", Method::Lime, vec![0.1, -0.2, 0.0, 0.4], None).unwrap();
        let e2 = Explanation::from_raw("s2", Method::Lime, vec![-1.5, 0.0, 0.25, 0.125], None).unwrap();
        let csv = explanations_to_csv(&[e1.clone(), e2.clone()], 2, &features).unwrap();
        let back = explanations_from_csv(&csv, 2, &features).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].raw, e1.raw);
        assert_eq!(back[0].normalized, e1.normalized);
        assert_eq!(back[1].raw, e2.raw);
        assert_eq!(back[1].signs, e2.signs);
    }
}
