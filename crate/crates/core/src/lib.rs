//! Core library for explaining black-box student-success predictors.
//!
//! The pipeline runs in five stages, each backed by one module:
//!
//! 1. [`clickstream`] — event-log data model, parsing, sessionization, and a
//!    seeded synthetic course generator with controllable pass/fail contrasts.
//! 2. [`features`] — the 22 weekly behavioral features (effort, regularity,
//!    proactivity, control), NaN-min imputation, and min-max normalization.
//! 3. [`model`] — the opaque [`model::Predictor`] contract, a flat logistic
//!    baseline, a bidirectional recurrent network, stratified splitting, and
//!    balanced accuracy.
//! 4. [`explainers`] — instance-level attribution: local surrogate (LIME
//!    style), Shapley values (exact enumeration and KernelSHAP), and a
//!    deliberately sign-flipped counterfactual confounder.
//! 5. [`compare`] — agreement statistics between explanations (Spearman rank
//!    correlation, top-k Jaccard), cross-method/cross-course matrices, course
//!    pair insights, and Cohen's kappa.
//!
//! [`report`] renders comparison matrices and per-course feature-importance
//! heatmaps as deterministic SVG.

pub mod clickstream;
pub mod compare;
pub mod error;
pub mod explainers;
pub mod features;
pub mod model;
pub mod report;

pub use error::CoreError;

/// FNV-1a 64-bit hash. Used wherever a stable, platform-independent hash of a
/// string is needed (per-student RNG substreams must not depend on process
/// state the way `std`'s randomly keyed hasher does).
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::fnv1a64;

    #[test]
    fn fnv_reference_values() {
        // Reference vectors from the FNV specification.
        assert_eq!(fnv1a64(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64("a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64("foobar"), 0x85944171f73967e8);
    }
}
