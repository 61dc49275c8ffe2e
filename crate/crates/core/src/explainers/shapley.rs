//! Shapley-value attribution with interventional feature removal: a dimension
//! "absent" from a coalition is replaced by the background mean. [`exact_shapley`]
//! enumerates all 2^D coalitions and is the oracle; [`kernel_shap`] estimates
//! the same values by weighted least squares over (sampled) coalitions with
//! the Shapley kernel, with the empty and full coalitions enforced as
//! constraints so efficiency holds exactly.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::explainers::{Background, Explanation, ExplanationFlag, Method};
use crate::model::Predictor;

/// Enumeration budget: 2^15 value-function evaluations.
pub const EXACT_SHAPLEY_MAX_DIMS: usize = 15;

const PREDICT_CHUNK: usize = 4096;

/// Evaluate v(S) for every mask in `masks`: dims in S come from the instance,
/// the rest from the background mean.
fn coalition_values(
    predictor: &dyn Predictor,
    instance: &[f64],
    background: &Background,
    masks: &[u64],
) -> Result<Vec<f64>> {
    let d = instance.len();
    let mut values = Vec::with_capacity(masks.len());
    for chunk in masks.chunks(PREDICT_CHUNK) {
        let rows: Vec<Vec<f64>> = chunk
            .iter()
            .map(|mask| {
                (0..d)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            instance[i]
                        } else {
                            background.mean[i]
                        }
                    })
                    .collect()
            })
            .collect();
        values.extend(predictor.predict(&rows)?);
    }
    Ok(values)
}

/// Exact Shapley values by full coalition enumeration (D <= 15).
///
/// phi_d = sum over S not containing d of |S|!(D-|S|-1)!/D! * (v(S+d) - v(S)).
pub fn exact_shapley(
    predictor: &dyn Predictor,
    student_id: &str,
    instance: &[f64],
    background: &Background,
) -> Result<Explanation> {
    background.check_dim(instance)?;
    let d = instance.len();
    if d == 0 || d > EXACT_SHAPLEY_MAX_DIMS {
        return Err(CoreError::invalid(format!(
            "exact Shapley supports 1..={EXACT_SHAPLEY_MAX_DIMS} dims, got {d}"
        )));
    }
    let n_masks = 1usize << d;
    let masks: Vec<u64> = (0..n_masks as u64).collect();
    let values = coalition_values(predictor, instance, background, &masks)?;

    // |S|!(D-|S|-1)!/D! per coalition size.
    let factorial = |n: usize| -> f64 { (1..=n).map(|x| x as f64).product() };
    let weight: Vec<f64> = (0..d)
        .map(|s| factorial(s) * factorial(d - s - 1) / factorial(d))
        .collect();

    let mut phi = vec![0.0; d];
    for mask in 0..n_masks {
        let size = (mask as u64).count_ones() as usize;
        for dim in 0..d {
            if mask >> dim & 1 == 0 {
                let with = mask | (1 << dim);
                phi[dim] += weight[size] * (values[with] - values[mask]);
            }
        }
    }
    Explanation::from_raw(student_id, Method::ExactShapley, phi, Some(values[0]))
}

/// Shapley kernel weight for a coalition of size k out of d.
fn kernel_weight(d: usize, k: usize) -> f64 {
    let binom = binomial(d, k);
    (d - 1) as f64 / (binom * (k * (d - k)) as f64)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r *= (n - i) as f64;
        r /= (i + 1) as f64;
    }
    r
}

/// Total kernel mass of one coalition size: binom(d,k) * pi(k).
fn size_mass(d: usize, k: usize) -> f64 {
    (d - 1) as f64 / (k * (d - k)) as f64
}

/// Pick the coalitions entering the regression, with their WLS weights.
///
/// If the budget covers 2^D the enumeration is exhaustive with exact kernel
/// weights. Otherwise sizes are enumerated fully from the extremes inward
/// while they fit; the remaining budget is spent on complement-paired uniform
/// subset samples whose total weight equals the unenumerated kernel mass.
fn choose_coalitions(d: usize, n_coalitions: usize, seed: u64) -> Vec<(u64, f64)> {
    let full_count = if d < 63 { 1u64 << d } else { u64::MAX };
    if (n_coalitions as u64) >= full_count {
        let mut out = Vec::with_capacity((full_count - 2) as usize);
        for mask in 1..full_count - 1 {
            let k = mask.count_ones() as usize;
            out.push((mask, kernel_weight(d, k)));
        }
        return out;
    }

    let mut budget = n_coalitions.saturating_sub(2);
    let mut out = Vec::with_capacity(budget);
    let mut enumerated = vec![false; d];

    // Paired sizes from the extremes inward: (1, d-1), (2, d-2), ...
    let mut size_pairs: Vec<Vec<usize>> = Vec::new();
    for k in 1..=(d - 1) / 2 {
        size_pairs.push(vec![k, d - k]);
    }
    if d % 2 == 0 {
        size_pairs.push(vec![d / 2]);
    }
    'outer: for pair in &size_pairs {
        let count: f64 = pair.iter().map(|k| binomial(d, *k)).sum();
        if count > budget as f64 {
            break 'outer;
        }
        for &k in pair {
            let w = kernel_weight(d, k);
            // Enumerate all subsets of size k (Gosper's hack).
            let mut mask: u64 = (1 << k) - 1;
            let limit: u64 = 1 << d;
            while mask < limit {
                out.push((mask, w));
                let c = mask & mask.wrapping_neg();
                let r = mask + c;
                if r >= limit || c == 0 {
                    break;
                }
                mask = r | (((mask ^ r) >> 2) / c);
            }
            enumerated[k] = true;
        }
        budget -= count as usize;
    }

    let remaining_sizes: Vec<usize> = (1..d).filter(|k| !enumerated[*k]).collect();
    if remaining_sizes.is_empty() || budget == 0 {
        return out;
    }
    let remaining_mass: f64 = remaining_sizes.iter().map(|k| size_mass(d, *k)).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled: Vec<u64> = Vec::with_capacity(budget);
    let mut indices: Vec<usize> = (0..d).collect();
    while sampled.len() + 1 < budget.max(2) && sampled.len() < budget {
        // Size drawn proportionally to its kernel mass among remaining sizes.
        let mut roll = rng.gen::<f64>() * remaining_mass;
        let mut size = remaining_sizes[0];
        for &k in &remaining_sizes {
            roll -= size_mass(d, k);
            if roll <= 0.0 {
                size = k;
                break;
            }
        }
        // Uniform subset of that size via partial Fisher-Yates.
        for i in 0..size {
            let j = rng.gen_range(i..d);
            indices.swap(i, j);
        }
        let mut mask = 0u64;
        for &i in indices.iter().take(size) {
            mask |= 1 << i;
        }
        sampled.push(mask);
        // Complement pairing halves the variance of the estimate.
        if sampled.len() < budget {
            sampled.push(!mask & ((1 << d) - 1));
        }
    }
    let per_sample = remaining_mass / sampled.len() as f64;
    out.extend(sampled.into_iter().map(|m| (m, per_sample)));
    out
}

/// KernelSHAP: weighted least squares over coalitions with Shapley kernel
/// weights. The empty and full coalitions are eliminated into the system as
/// hard constraints, so `sum(raw) = f(x) - v(empty)` holds exactly.
/// Exhaustive when `n_coalitions >= 2^D`; deterministic given the seed.
pub fn kernel_shap(
    predictor: &dyn Predictor,
    student_id: &str,
    instance: &[f64],
    background: &Background,
    n_coalitions: usize,
    seed: u64,
) -> Result<Explanation> {
    background.check_dim(instance)?;
    let d = instance.len();
    if d == 0 {
        return Err(CoreError::invalid("kernel_shap needs at least one dim"));
    }
    if d > 63 {
        return Err(CoreError::invalid("kernel_shap supports at most 63 dims"));
    }
    let exhaustive = d < 63 && (n_coalitions as u64) >= (1u64 << d);
    if !exhaustive && n_coalitions < 2 * d + 2 {
        return Err(CoreError::invalid(format!(
            "n_coalitions must be >= 2D+2 = {}, got {n_coalitions}",
            2 * d + 2
        )));
    }

    let endpoints = coalition_values(
        predictor,
        instance,
        background,
        &[0, ((1u128 << d) - 1) as u64],
    )?;
    let (v0, fx) = (endpoints[0], endpoints[1]);

    if d == 1 {
        return Explanation::from_raw(student_id, Method::Shap, vec![fx - v0], Some(v0));
    }

    let coalitions = choose_coalitions(d, n_coalitions, seed);
    let masks: Vec<u64> = coalitions.iter().map(|(m, _)| *m).collect();
    let values = coalition_values(predictor, instance, background, &masks)?;

    // Eliminate the last dimension: with z in {0,1}^D,
    //   v(S) - v0 - z_last (fx - v0) = sum_{j<D-1} phi_j (z_j - z_last).
    let p = d - 1;
    let mut ata = DMatrix::<f64>::zeros(p, p);
    let mut atb = DVector::<f64>::zeros(p);
    let mut g = vec![0.0; p];
    for ((mask, weight), value) in coalitions.iter().zip(&values) {
        let z_last = (mask >> p & 1) as f64;
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = (mask >> j & 1) as f64 - z_last;
        }
        let target = value - v0 - z_last * (fx - v0);
        for i in 0..p {
            if g[i] == 0.0 {
                continue;
            }
            atb[i] += weight * g[i] * target;
            for j in i..p {
                ata[(i, j)] += weight * g[i] * g[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
    }

    let mut flags = Vec::new();
    let solution = match Cholesky::new(ata.clone()) {
        Some(chol) => chol.solve(&atb),
        None => {
            // Singular system: ridge fallback, reported on the explanation.
            flags.push(ExplanationFlag::RegularizedSolve);
            let mut reg = ata;
            for i in 0..p {
                reg[(i, i)] += 1e-6;
            }
            Cholesky::new(reg)
                .ok_or_else(|| {
                    CoreError::Numeric("kernel SHAP system singular even with ridge".into())
                })?
                .solve(&atb)
        }
    };

    let mut phi = vec![0.0; d];
    let mut partial = 0.0;
    for j in 0..p {
        phi[j] = solution[j];
        partial += solution[j];
    }
    phi[p] = (fx - v0) - partial;

    let mut explanation = Explanation::from_raw(student_id, Method::Shap, phi, Some(v0))?;
    explanation.flags = flags;
    Ok(explanation)
}
