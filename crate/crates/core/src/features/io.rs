//! FeatureMatrix serialization: CSV long format plus a JSON sidecar.
//!
//! CSV header: `student_id,week,feature,value,imputed` with one row per cell
//! in (student, week, feature) order; `imputed` is 0/1. The sidecar records
//! `{students, weeks, features, per_feature_min}`.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::features::FeatureMatrix;

/// JSON sidecar accompanying the long-format CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrixMeta {
    pub students: Vec<String>,
    pub weeks: usize,
    pub features: Vec<String>,
    pub per_feature_min: Vec<f64>,
}

impl FeatureMatrixMeta {
    pub fn of(matrix: &FeatureMatrix) -> FeatureMatrixMeta {
        FeatureMatrixMeta {
            students: matrix.students.clone(),
            weeks: matrix.weeks,
            features: matrix.features.clone(),
            per_feature_min: matrix.per_feature_min.clone(),
        }
    }
}

/// Serialize an (imputed) matrix to the long CSV format.
pub fn matrix_to_csv_long(matrix: &FeatureMatrix) -> Result<String> {
    if matrix.has_nan() {
        return Err(CoreError::invalid(
            "serialize an imputed matrix; raw matrices contain NaN",
        ));
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["student_id", "week", "feature", "value", "imputed"])?;
    for (s, student) in matrix.students.iter().enumerate() {
        for w in 0..matrix.weeks {
            for (f, feature) in matrix.features.iter().enumerate() {
                wtr.write_record([
                    student.as_str(),
                    &w.to_string(),
                    feature.as_str(),
                    &matrix.get(s, w, f).to_string(),
                    if matrix.imputed(s, w, f) { "1" } else { "0" },
                ])?;
            }
        }
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| CoreError::invalid(format!("csv flush: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CoreError::invalid(format!("csv utf8: {e}")))
}

/// Rebuild a matrix from the long CSV and its sidecar.
pub fn matrix_from_csv_long(csv_text: &str, meta: &FeatureMatrixMeta) -> Result<FeatureMatrix> {
    let mut matrix = FeatureMatrix::new_raw(
        meta.students.clone(),
        meta.weeks,
        meta.features.clone(),
    );
    matrix.per_feature_min = meta.per_feature_min.clone();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(csv_text.as_bytes());
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let get = |j: usize| -> Result<&str> {
            record
                .get(j)
                .ok_or_else(|| CoreError::parse(line, format!("missing column {j}")))
        };
        let student = get(0)?;
        let s = matrix
            .student_index(student)
            .ok_or_else(|| CoreError::parse(line, format!("unknown student {student}")))?;
        let w: usize = get(1)?
            .parse()
            .map_err(|_| CoreError::parse(line, "bad week"))?;
        let feature = get(2)?;
        let f = matrix
            .features
            .iter()
            .position(|x| x == feature)
            .ok_or_else(|| CoreError::parse(line, format!("unknown feature {feature}")))?;
        if w >= matrix.weeks {
            return Err(CoreError::parse(line, format!("week {w} out of range")));
        }
        let value: f64 = get(3)?
            .parse()
            .map_err(|_| CoreError::parse(line, "bad value"))?;
        let imputed = match get(4)? {
            "0" => false,
            "1" => true,
            other => return Err(CoreError::parse(line, format!("bad imputed flag {other}"))),
        };
        matrix.set(s, w, f, value);
        matrix.set_mask(s, w, f, imputed);
    }
    if matrix.has_nan() {
        return Err(CoreError::invalid("CSV does not cover every cell"));
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::impute_nan;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut m = FeatureMatrix::new_raw(
            vec!["a".into(), "b".into()],
            2,
            vec!["x".into(), "y".into()],
        );
        for s in 0..2 {
            for w in 0..2 {
                m.set(s, w, 0, 0.1 + s as f64 + w as f64 / 3.0);
            }
        }
        // y stays NaN for student b week 1 to exercise the mask.
        m.set(0, 0, 1, 5.0);
        m.set(0, 1, 1, 7.0);
        m.set(1, 0, 1, 9.0);
        m.set(1, 1, 1, f64::NAN);
        let imputed = impute_nan(&m);
        let csv = matrix_to_csv_long(&imputed).unwrap();
        let meta = FeatureMatrixMeta::of(&imputed);
        let back = matrix_from_csv_long(&csv, &meta).unwrap();
        assert_eq!(back, imputed);
    }

    #[test]
    fn raw_matrix_refuses_to_serialize() {
        let m = FeatureMatrix::new_raw(vec!["a".into()], 1, vec!["x".into()]);
        assert!(matrix_to_csv_long(&m).is_err());
    }
}
