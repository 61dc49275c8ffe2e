//! The 22 weekly behavioral features, the student×week×feature tensor,
//! NaN-min imputation, and train-split min-max normalization.

mod extract;
mod io;

pub use extract::{extract_features, ExtractOptions};
pub use io::{matrix_from_csv_long, matrix_to_csv_long, FeatureMatrixMeta};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Self-regulated-learning dimension a feature belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimension {
    Effort,
    Regularity,
    Proactivity,
    Control,
}

/// Registry entry for one behavioral feature.
#[derive(Debug, Clone)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub dimension: Dimension,
    pub definition: &'static str,
    /// Whether the raw value can be undefined (NaN) for some weeks.
    pub nan_possible: bool,
}

pub const FEATURE_COUNT: usize = 22;

/// The canonical feature registry, in fixed order: five effort, five
/// regularity, five proactivity, seven control features.
pub fn feature_specs() -> &'static [FeatureSpec; FEATURE_COUNT] {
    use Dimension::*;
    static SPECS: [FeatureSpec; FEATURE_COUNT] = [
        FeatureSpec { name: "check-check-check-quiz", dimension: Effort, definition: "count of three consecutive quiz submissions within one session (sliding window)", nan_possible: false },
        FeatureSpec { name: "correct-time-quiz", dimension: Effort, definition: "active quiz time divided by the number of correct submissions", nan_possible: true },
        FeatureSpec { name: "distinct-probs-quiz", dimension: Effort, definition: "number of distinct quizzes submitted", nan_possible: false },
        FeatureSpec { name: "num-submit-quiz", dimension: Effort, definition: "submissions per distinct quiz", nan_possible: true },
        FeatureSpec { name: "total-time-vid", dimension: Effort, definition: "cumulative active video time up to and including this week", nan_possible: false },
        FeatureSpec { name: "active-participation-weekly-vid", dimension: Regularity, definition: "videos watched fully over videos loaded this week", nan_possible: true },
        FeatureSpec { name: "attendance-rate", dimension: Regularity, definition: "distinct released videos ever played over videos released so far", nan_possible: true },
        FeatureSpec { name: "hourly-freq-regular", dimension: Regularity, definition: "mean pairwise cosine similarity of hour-of-day histograms across active days", nan_possible: true },
        FeatureSpec { name: "watch-ratio-vid", dimension: Regularity, definition: "mean watched-time share of videos opened this week (capped at 1)", nan_possible: true },
        FeatureSpec { name: "std-time-session", dimension: Regularity, definition: "standard deviation of session durations", nan_possible: true },
        FeatureSpec { name: "eager-view-vid", dimension: Proactivity, definition: "mean earliness (scheduled minus first-view week over W) of videos first viewed this week, on time or early", nan_possible: true },
        FeatureSpec { name: "timely-view-vid", dimension: Proactivity, definition: "fraction of this week's scheduled videos first viewed exactly this week", nan_possible: true },
        FeatureSpec { name: "eager-view-quiz", dimension: Proactivity, definition: "quiz analogue of eager-view-vid", nan_possible: true },
        FeatureSpec { name: "ratio-clicks-weekend", dimension: Proactivity, definition: "weekend clicks over weekday clicks", nan_possible: true },
        FeatureSpec { name: "std-correct-time-quiz", dimension: Proactivity, definition: "standard deviation over quizzes of per-quiz time over correct count", nan_possible: true },
        FeatureSpec { name: "avg-len-seek-vid", dimension: Control, definition: "mean absolute seek length in seconds", nan_possible: true },
        FeatureSpec { name: "freq-pause-vid", dimension: Control, definition: "pause events per hour of active video time", nan_possible: true },
        FeatureSpec { name: "freq-play-vid", dimension: Control, definition: "play events per hour of session time", nan_possible: true },
        FeatureSpec { name: "play-stop-play-vid", dimension: Control, definition: "count of consecutive play, stop, play triples", nan_possible: false },
        // Implements the name (play -> pause -> load); the prose description
        // of the source table says "plays again" instead, which contradicts it.
        FeatureSpec { name: "play-pause-load-vid", dimension: Control, definition: "count of consecutive play, pause, load triples", nan_possible: false },
        FeatureSpec { name: "pause-speedchange-play-vid", dimension: Control, definition: "count of consecutive pause, speed-change, play triples", nan_possible: false },
        FeatureSpec { name: "speed-vid", dimension: Control, definition: "mean playback speed over speed-change events; 1.0 with video activity but no speed changes", nan_possible: true },
    ];
    &SPECS
}

/// Canonical names in registry order.
pub fn feature_names() -> Vec<String> {
    feature_specs().iter().map(|s| s.name.to_string()).collect()
}

pub fn feature_index(name: &str) -> Option<usize> {
    feature_specs().iter().position(|s| s.name == name)
}

/// Students × weeks × features tensor with an imputation mask.
///
/// Raw matrices (straight out of extraction) may contain NaN and have an
/// empty `per_feature_min`; [`impute_nan`] fills NaN cells with the
/// per-feature minimum and records which cells were touched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub students: Vec<String>,
    pub weeks: usize,
    pub features: Vec<String>,
    values: Vec<f64>,
    nan_mask: Vec<bool>,
    /// Imputation value per feature; empty until imputation has run.
    pub per_feature_min: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new_raw(students: Vec<String>, weeks: usize, features: Vec<String>) -> FeatureMatrix {
        let len = students.len() * weeks * features.len();
        FeatureMatrix {
            students,
            weeks,
            features,
            values: vec![f64::NAN; len],
            nan_mask: vec![false; len],
            per_feature_min: Vec::new(),
        }
    }

    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Flattened per-student dimension count (W*F), the explainer input space.
    pub fn dims_per_student(&self) -> usize {
        self.weeks * self.features.len()
    }

    fn idx(&self, student: usize, week: usize, feature: usize) -> usize {
        debug_assert!(student < self.students.len());
        debug_assert!(week < self.weeks);
        debug_assert!(feature < self.features.len());
        (student * self.weeks + week) * self.features.len() + feature
    }

    pub fn get(&self, student: usize, week: usize, feature: usize) -> f64 {
        self.values[self.idx(student, week, feature)]
    }

    pub fn set(&mut self, student: usize, week: usize, feature: usize, value: f64) {
        let i = self.idx(student, week, feature);
        self.values[i] = value;
    }

    pub fn imputed(&self, student: usize, week: usize, feature: usize) -> bool {
        self.nan_mask[self.idx(student, week, feature)]
    }

    pub fn student_index(&self, student_id: &str) -> Option<usize> {
        self.students.iter().position(|s| s == student_id)
    }

    /// One student's W*F values flattened week-major: index = week*F + feature.
    pub fn student_row(&self, student: usize) -> Vec<f64> {
        let f = self.features.len();
        let base = student * self.weeks * f;
        self.values[base..base + self.weeks * f].to_vec()
    }

    pub fn has_nan(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    fn set_mask(&mut self, student: usize, week: usize, feature: usize, imputed: bool) {
        let i = self.idx(student, week, feature);
        self.nan_mask[i] = imputed;
    }
}

/// Replace every NaN cell with the minimum defined raw value of its feature,
/// computed globally over all students and weeks. A feature with no defined
/// values at all falls back to 0. Idempotent.
pub fn impute_nan(raw: &FeatureMatrix) -> FeatureMatrix {
    let mut out = raw.clone();
    let n_f = raw.features.len();
    let mut mins = vec![f64::INFINITY; n_f];
    for s in 0..raw.n_students() {
        for w in 0..raw.weeks {
            for f in 0..n_f {
                let v = raw.get(s, w, f);
                if !v.is_nan() && v < mins[f] {
                    mins[f] = v;
                }
            }
        }
    }
    for m in &mut mins {
        if !m.is_finite() {
            *m = 0.0;
        }
    }
    for s in 0..raw.n_students() {
        for w in 0..raw.weeks {
            for f in 0..n_f {
                if raw.get(s, w, f).is_nan() {
                    out.set(s, w, f, mins[f]);
                    out.set_mask(s, w, f, true);
                }
            }
        }
    }
    out.per_feature_min = mins;
    out
}

/// Per-feature min/max over the training split, used for normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub features: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Compute per-feature min/max over the given (training) students only.
pub fn training_stats(matrix: &FeatureMatrix, train_ids: &[String]) -> Result<FeatureStats> {
    if matrix.has_nan() {
        return Err(CoreError::invalid(
            "training_stats requires an imputed matrix",
        ));
    }
    let n_f = matrix.features.len();
    let mut min = vec![f64::INFINITY; n_f];
    let mut max = vec![f64::NEG_INFINITY; n_f];
    for id in train_ids {
        let s = matrix
            .student_index(id)
            .ok_or_else(|| CoreError::invalid(format!("unknown student {id}")))?;
        for w in 0..matrix.weeks {
            for f in 0..n_f {
                let v = matrix.get(s, w, f);
                min[f] = min[f].min(v);
                max[f] = max[f].max(v);
            }
        }
    }
    if min.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::invalid("training_stats needs at least one student"));
    }
    Ok(FeatureStats {
        features: matrix.features.clone(),
        min,
        max,
    })
}

/// Min-max scale each feature to [0,1] using training statistics. Constant
/// features map to 0; out-of-range (test) values are clipped into [0,1].
pub fn normalize_features(matrix: &FeatureMatrix, stats: &FeatureStats) -> Result<FeatureMatrix> {
    if stats.features != matrix.features {
        return Err(CoreError::ShapeMismatch(format!(
            "stats cover {} features, matrix has {}",
            stats.features.len(),
            matrix.features.len()
        )));
    }
    if matrix.has_nan() {
        return Err(CoreError::invalid(
            "normalize_features requires an imputed matrix",
        ));
    }
    let mut out = matrix.clone();
    let n_f = matrix.features.len();
    for s in 0..matrix.n_students() {
        for w in 0..matrix.weeks {
            for f in 0..n_f {
                let (lo, hi) = (stats.min[f], stats.max[f]);
                let v = matrix.get(s, w, f);
                let scaled = if hi > lo {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                out.set(s, w, f, scaled);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col_matrix(values: &[f64]) -> FeatureMatrix {
        // One feature, one week, one student per value.
        let students = (0..values.len()).map(|i| format!("s{i}")).collect();
        let mut m = FeatureMatrix::new_raw(students, 1, vec!["f".into()]);
        for (i, v) in values.iter().enumerate() {
            m.set(i, 0, 0, *v);
        }
        m
    }

    #[test]
    fn registry_has_22_unique_names() {
        let names = feature_names();
        assert_eq!(names.len(), 22);
        let set: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(set.len(), 22);
        let effort = feature_specs()
            .iter()
            .filter(|s| s.dimension == Dimension::Effort)
            .count();
        let control = feature_specs()
            .iter()
            .filter(|s| s.dimension == Dimension::Control)
            .count();
        assert_eq!((effort, control), (5, 7));
    }

    #[test]
    fn impute_min_rule_by_hand() {
        let m = col_matrix(&[2.0, f64::NAN, 5.0]);
        let imputed = impute_nan(&m);
        assert_eq!(imputed.get(0, 0, 0), 2.0);
        assert_eq!(imputed.get(1, 0, 0), 2.0);
        assert_eq!(imputed.get(2, 0, 0), 5.0);
        assert!(!imputed.imputed(0, 0, 0));
        assert!(imputed.imputed(1, 0, 0));
        assert!(!imputed.imputed(2, 0, 0));
        assert_eq!(imputed.per_feature_min, vec![2.0]);
    }

    #[test]
    fn impute_no_nans_is_identity() {
        let m = col_matrix(&[1.0, 4.0]);
        let imputed = impute_nan(&m);
        assert_eq!(imputed.get(0, 0, 0), 1.0);
        assert_eq!(imputed.get(1, 0, 0), 4.0);
        assert!(!imputed.imputed(0, 0, 0) && !imputed.imputed(1, 0, 0));
    }

    #[test]
    fn impute_all_nan_feature_falls_back_to_zero() {
        let m = col_matrix(&[f64::NAN, f64::NAN]);
        let imputed = impute_nan(&m);
        assert_eq!(imputed.get(0, 0, 0), 0.0);
        assert_eq!(imputed.get(1, 0, 0), 0.0);
        assert!(imputed.imputed(0, 0, 0) && imputed.imputed(1, 0, 0));
    }

    #[test]
    fn impute_is_idempotent() {
        let m = col_matrix(&[2.0, f64::NAN, 5.0]);
        let once = impute_nan(&m);
        let twice = impute_nan(&once);
        assert_eq!(once, twice);
    }

    #[test]
    fn normalize_min_max_and_constant() {
        let m = col_matrix(&[0.0, 5.0, 10.0]);
        let stats = training_stats(&m, &["s0".into(), "s1".into(), "s2".into()]).unwrap();
        let n = normalize_features(&m, &stats).unwrap();
        assert_eq!(
            (n.get(0, 0, 0), n.get(1, 0, 0), n.get(2, 0, 0)),
            (0.0, 0.5, 1.0)
        );

        let c = col_matrix(&[3.0, 3.0]);
        let stats = training_stats(&c, &["s0".into(), "s1".into()]).unwrap();
        let n = normalize_features(&c, &stats).unwrap();
        assert_eq!((n.get(0, 0, 0), n.get(1, 0, 0)), (0.0, 0.0));
    }

    #[test]
    fn normalize_clips_test_values() {
        let m = col_matrix(&[0.0, 10.0, 12.0]);
        // Train on the first two students only; s2 exceeds the training max.
        let stats = training_stats(&m, &["s0".into(), "s1".into()]).unwrap();
        let n = normalize_features(&m, &stats).unwrap();
        assert_eq!(n.get(2, 0, 0), 1.0);
    }

    #[test]
    fn normalize_rejects_mismatched_stats() {
        let m = col_matrix(&[1.0]);
        let stats = FeatureStats {
            features: vec!["other".into()],
            min: vec![0.0],
            max: vec![1.0],
        };
        assert!(normalize_features(&m, &stats).is_err());
    }
}
