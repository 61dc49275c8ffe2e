//! Bidirectional recurrent success predictor.
//!
//! Two stacked bidirectional LSTM layers (hidden sizes from the config, the
//! reference being 32 then 64) over the W-step feature sequence, then a single
//! sigmoid output unit on the concatenated final states of the second layer.
//! Trained full-batch by Adam on cross-entropy with early stopping on a
//! held-out tenth of the training students. Backpropagation is hand-derived
//! and verified against central finite differences in the test suite.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{cross_entropy, sigmoid, Adam, ModelKind, Predictor, PredictorDescriptor, TrainConfig};

/// Gate blocks within the 4H pre-activation vector: input, forget, cell, output.
const GATES: usize = 4;

fn dir_param_count(input: usize, hidden: usize) -> usize {
    GATES * hidden * (input + hidden + 1)
}

/// One LSTM direction's view into the flat parameter vector:
/// `[W (4H x I), U (4H x H), b (4H)]`.
#[derive(Clone, Copy)]
struct DirLayout {
    offset: usize,
    input: usize,
    hidden: usize,
}

impl DirLayout {
    fn w(&self, r: usize, i: usize) -> usize {
        self.offset + r * self.input + i
    }
    fn u(&self, r: usize, j: usize) -> usize {
        self.offset + GATES * self.hidden * self.input + r * self.hidden + j
    }
    fn b(&self, r: usize) -> usize {
        self.offset + GATES * self.hidden * (self.input + self.hidden) + r
    }
}

/// Per-step forward cache for one direction, in processing order.
struct DirCache {
    /// Activated gates (i,f,g,o concatenated; 4H per step).
    gates: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
    hs: Vec<Vec<f64>>,
}

fn dir_forward(params: &[f64], lay: DirLayout, xs: &[&[f64]]) -> DirCache {
    let h_n = lay.hidden;
    let mut cache = DirCache {
        gates: Vec::with_capacity(xs.len()),
        cs: Vec::with_capacity(xs.len()),
        hs: Vec::with_capacity(xs.len()),
    };
    let mut h = vec![0.0; h_n];
    let mut c = vec![0.0; h_n];
    for x in xs {
        let mut gates = vec![0.0; GATES * h_n];
        for r in 0..GATES * h_n {
            let mut z = params[lay.b(r)];
            for (i, xi) in x.iter().enumerate() {
                z += params[lay.w(r, i)] * xi;
            }
            for (j, hj) in h.iter().enumerate() {
                z += params[lay.u(r, j)] * hj;
            }
            gates[r] = z;
        }
        let (mut i_g, mut f_g, mut g_g, mut o_g) =
            (vec![0.0; h_n], vec![0.0; h_n], vec![0.0; h_n], vec![0.0; h_n]);
        for k in 0..h_n {
            i_g[k] = sigmoid(gates[k]);
            f_g[k] = sigmoid(gates[h_n + k]);
            g_g[k] = gates[2 * h_n + k].tanh();
            o_g[k] = sigmoid(gates[3 * h_n + k]);
        }
        let mut c_new = vec![0.0; h_n];
        let mut h_new = vec![0.0; h_n];
        for k in 0..h_n {
            c_new[k] = f_g[k] * c[k] + i_g[k] * g_g[k];
            h_new[k] = o_g[k] * c_new[k].tanh();
        }
        let mut acts = i_g;
        acts.extend(f_g);
        acts.extend(g_g);
        acts.extend(o_g);
        cache.gates.push(acts);
        cache.cs.push(c_new.clone());
        cache.hs.push(h_new.clone());
        c = c_new;
        h = h_new;
    }
    cache
}

/// Backward through one direction. `dh_ext[k]` is the external gradient into
/// the hidden state at processing step k. Accumulates parameter gradients
/// into `grad` and returns input gradients per processing step.
fn dir_backward(
    params: &[f64],
    lay: DirLayout,
    xs: &[&[f64]],
    cache: &DirCache,
    dh_ext: &[Vec<f64>],
    grad: &mut [f64],
) -> Vec<Vec<f64>> {
    let h_n = lay.hidden;
    let steps = xs.len();
    let mut dxs = vec![vec![0.0; lay.input]; steps];
    let mut dh_next = vec![0.0; h_n];
    let mut dc_next = vec![0.0; h_n];
    for k in (0..steps).rev() {
        let acts = &cache.gates[k];
        let (i_g, rest) = acts.split_at(h_n);
        let (f_g, rest) = rest.split_at(h_n);
        let (g_g, o_g) = rest.split_at(h_n);
        let zeros = vec![0.0; h_n];
        let c_prev = if k > 0 { &cache.cs[k - 1] } else { &zeros };
        let h_prev = if k > 0 { &cache.hs[k - 1] } else { &zeros };

        let mut dz = vec![0.0; GATES * h_n];
        let mut dc_cur = vec![0.0; h_n];
        for j in 0..h_n {
            let dh = dh_ext[k][j] + dh_next[j];
            let tc = cache.cs[k][j].tanh();
            let d_o = dh * tc;
            let dc = dc_next[j] + dh * o_g[j] * (1.0 - tc * tc);
            let d_i = dc * g_g[j];
            let d_g = dc * i_g[j];
            let d_f = dc * c_prev[j];
            dc_cur[j] = dc * f_g[j];
            dz[j] = d_i * i_g[j] * (1.0 - i_g[j]);
            dz[h_n + j] = d_f * f_g[j] * (1.0 - f_g[j]);
            dz[2 * h_n + j] = d_g * (1.0 - g_g[j] * g_g[j]);
            dz[3 * h_n + j] = d_o * o_g[j] * (1.0 - o_g[j]);
        }
        dc_next = dc_cur;
        dh_next = vec![0.0; h_n];
        for r in 0..GATES * h_n {
            let dzr = dz[r];
            if dzr == 0.0 {
                continue;
            }
            grad[lay.b(r)] += dzr;
            for (i, xi) in xs[k].iter().enumerate() {
                grad[lay.w(r, i)] += dzr * xi;
                dxs[k][i] += params[lay.w(r, i)] * dzr;
            }
            for j in 0..h_n {
                grad[lay.u(r, j)] += dzr * h_prev[j];
                dh_next[j] += params[lay.u(r, j)] * dzr;
            }
        }
    }
    dxs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentNet {
    weeks: usize,
    features: usize,
    hidden: (usize, usize),
    seed: u64,
    threshold: f64,
    params: Vec<f64>,
}

impl RecurrentNet {
    fn layouts(&self) -> [DirLayout; 4] {
        layouts_for(self.features, self.hidden)
    }

    /// Randomly initialized, untrained network.
    pub fn init(weeks: usize, features: usize, hidden: (usize, usize), seed: u64, threshold: f64) -> RecurrentNet {
        let lays = layouts_for(features, hidden);
        let dense = 2 * hidden.1 + 1;
        let total = lays.iter().map(|l| dir_param_count(l.input, l.hidden)).sum::<usize>() + dense;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; total];
        for lay in lays {
            let scale = (6.0 / (lay.input + lay.hidden) as f64).sqrt();
            for r in 0..GATES * lay.hidden {
                for i in 0..lay.input {
                    params[lay.w(r, i)] = rng.gen_range(-scale..scale);
                }
                for j in 0..lay.hidden {
                    params[lay.u(r, j)] = rng.gen_range(-scale..scale);
                }
                // Forget-gate biases start at 1 so early gradients flow.
                params[lay.b(r)] = if (lay.hidden..2 * lay.hidden).contains(&r) { 1.0 } else { 0.0 };
            }
        }
        let dense_off = total - dense;
        let scale = (1.0 / (2 * hidden.1) as f64).sqrt();
        for p in params.iter_mut().skip(dense_off).take(dense - 1) {
            *p = rng.gen_range(-scale..scale);
        }
        RecurrentNet {
            weeks,
            features,
            hidden,
            seed,
            threshold,
            params,
        }
    }

    fn dense_offset(&self) -> usize {
        self.params.len() - (2 * self.hidden.1 + 1)
    }

    /// Forward pass for one flattened week-major row; optionally returns the
    /// caches needed by backprop.
    fn forward_one(&self, row: &[f64], keep: bool) -> (f64, Option<ForwardState>) {
        let steps = self.weeks;
        let f_n = self.features;
        let [l1f, l1b, l2f, l2b] = self.layouts();
        let xs1: Vec<&[f64]> = (0..steps).map(|t| &row[t * f_n..(t + 1) * f_n]).collect();
        let xs1_rev: Vec<&[f64]> = xs1.iter().rev().copied().collect();
        let c1f = dir_forward(&self.params, l1f, &xs1);
        let c1b = dir_forward(&self.params, l1b, &xs1_rev);

        let h1 = self.hidden.0;
        let mut seq2 = vec![vec![0.0; 2 * h1]; steps];
        for t in 0..steps {
            seq2[t][..h1].copy_from_slice(&c1f.hs[t]);
            seq2[t][h1..].copy_from_slice(&c1b.hs[steps - 1 - t]);
        }
        let xs2: Vec<&[f64]> = seq2.iter().map(|v| v.as_slice()).collect();
        let xs2_rev: Vec<&[f64]> = xs2.iter().rev().copied().collect();
        let c2f = dir_forward(&self.params, l2f, &xs2);
        let c2b = dir_forward(&self.params, l2b, &xs2_rev);

        let h2 = self.hidden.1;
        let dense = self.dense_offset();
        let mut logit = self.params[dense + 2 * h2];
        for k in 0..h2 {
            logit += self.params[dense + k] * c2f.hs[steps - 1][k];
            logit += self.params[dense + h2 + k] * c2b.hs[steps - 1][k];
        }
        let p = sigmoid(logit);
        let state = keep.then(|| ForwardState {
            seq2,
            c1f,
            c1b,
            c2f,
            c2b,
        });
        (p, state)
    }

    /// Mean cross-entropy and its gradient over a batch.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[f64]) -> (f64, Vec<f64>) {
        let n = xs.len();
        let steps = self.weeks;
        let f_n = self.features;
        let (h1, h2) = self.hidden;
        let [l1f, l1b, l2f, l2b] = self.layouts();
        let dense = self.dense_offset();
        let mut grad = vec![0.0; self.params.len()];
        let mut probs = Vec::with_capacity(n);

        for (row, y) in xs.iter().zip(ys) {
            let (p, state) = self.forward_one(row, true);
            probs.push(p);
            let state = state.unwrap();
            let dlogit = (p - y) / n as f64;

            // Dense layer.
            let mut dv = vec![0.0; 2 * h2];
            for k in 0..h2 {
                dv[k] = self.params[dense + k] * dlogit;
                dv[h2 + k] = self.params[dense + h2 + k] * dlogit;
                grad[dense + k] += state.c2f.hs[steps - 1][k] * dlogit;
                grad[dense + h2 + k] += state.c2b.hs[steps - 1][k] * dlogit;
            }
            grad[dense + 2 * h2] += dlogit;

            // Layer 2: external gradient lands on the final processing step
            // of each direction.
            let mut dh2f = vec![vec![0.0; h2]; steps];
            let mut dh2b = vec![vec![0.0; h2]; steps];
            dh2f[steps - 1].copy_from_slice(&dv[..h2]);
            dh2b[steps - 1].copy_from_slice(&dv[h2..]);
            let xs2: Vec<&[f64]> = state.seq2.iter().map(|v| v.as_slice()).collect();
            let xs2_rev: Vec<&[f64]> = xs2.iter().rev().copied().collect();
            let dx2f = dir_backward(&self.params, l2f, &xs2, &state.c2f, &dh2f, &mut grad);
            let dx2b = dir_backward(&self.params, l2b, &xs2_rev, &state.c2b, &dh2b, &mut grad);

            // Merge into gradients for layer-1 hidden sequences.
            let mut dh1f = vec![vec![0.0; h1]; steps];
            let mut dh1b = vec![vec![0.0; h1]; steps];
            for t in 0..steps {
                // dseq2 at original position t: fwd processed it at step t,
                // bwd at step steps-1-t.
                let mut dseq = dx2f[t].clone();
                for (a, b) in dseq.iter_mut().zip(&dx2b[steps - 1 - t]) {
                    *a += b;
                }
                dh1f[t].copy_from_slice(&dseq[..h1]);
                dh1b[steps - 1 - t].copy_from_slice(&dseq[h1..]);
            }
            let xs1: Vec<&[f64]> = (0..steps).map(|t| &row[t * f_n..(t + 1) * f_n]).collect();
            let xs1_rev: Vec<&[f64]> = xs1.iter().rev().copied().collect();
            dir_backward(&self.params, l1f, &xs1, &state.c1f, &dh1f, &mut grad);
            dir_backward(&self.params, l1b, &xs1_rev, &state.c1b, &dh1b, &mut grad);
        }
        (cross_entropy(&probs, ys), grad)
    }

    pub fn fit(
        weeks: usize,
        features: usize,
        xs: &[Vec<f64>],
        ys: &[f64],
        config: &TrainConfig,
    ) -> Result<RecurrentNet> {
        if weeks == 0 || features == 0 {
            return Err(CoreError::invalid("empty input shape"));
        }
        let mut net = RecurrentNet::init(weeks, features, config.hidden, config.seed, config.threshold);

        // Stratified 10% holdout for early stopping; never strip a class bare.
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut holdout = Vec::new();
        for class in [1.0, 0.0] {
            let mut idx: Vec<usize> = (0..ys.len()).filter(|i| ys[*i] == class).collect();
            if idx.len() < 2 {
                continue;
            }
            idx.shuffle(&mut rng);
            let take = ((0.1 * idx.len() as f64).round() as usize)
                .max(1)
                .min(idx.len() - 1);
            holdout.extend(idx.into_iter().take(take));
        }
        holdout.sort_unstable();
        let is_held = |i: usize| holdout.binary_search(&i).is_ok();
        let fit_xs: Vec<Vec<f64>> = xs
            .iter()
            .enumerate()
            .filter(|(i, _)| !is_held(*i))
            .map(|(_, x)| x.clone())
            .collect();
        let fit_ys: Vec<f64> = ys
            .iter()
            .enumerate()
            .filter(|(i, _)| !is_held(*i))
            .map(|(_, y)| *y)
            .collect();
        let val_xs: Vec<Vec<f64>> = holdout.iter().map(|i| xs[*i].clone()).collect();
        let val_ys: Vec<f64> = holdout.iter().map(|i| ys[*i]).collect();

        let mut adam = Adam::new(net.params.len(), config.learning_rate);
        let mut best_loss = f64::INFINITY;
        let mut best_params = net.params.clone();
        let mut bad_epochs = 0usize;
        for _ in 0..config.max_epochs {
            let (_, grad) = net.loss_and_grad(&fit_xs, &fit_ys);
            adam.step(&mut net.params, &grad);
            let monitor_xs = if val_xs.is_empty() { &fit_xs } else { &val_xs };
            let monitor_ys = if val_xs.is_empty() { &fit_ys } else { &val_ys };
            let probs: Vec<f64> = monitor_xs
                .iter()
                .map(|x| net.forward_one(x, false).0)
                .collect();
            let loss = cross_entropy(&probs, monitor_ys);
            if loss < best_loss - 1e-9 {
                best_loss = loss;
                best_params.copy_from_slice(&net.params);
                bad_epochs = 0;
            } else {
                bad_epochs += 1;
                if bad_epochs > config.patience {
                    break;
                }
            }
        }
        if !best_loss.is_finite() {
            return Err(CoreError::Numeric("recurrent training diverged".into()));
        }
        net.params = best_params;
        Ok(net)
    }

    pub fn descriptor(&self) -> PredictorDescriptor {
        PredictorDescriptor {
            kind: ModelKind::RecurrentNet,
            weeks: self.weeks,
            features: self.features,
            seed: self.seed,
            threshold: self.threshold,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}

fn layouts_for(features: usize, hidden: (usize, usize)) -> [DirLayout; 4] {
    let (h1, h2) = hidden;
    let s1 = dir_param_count(features, h1);
    let s2 = dir_param_count(2 * h1, h2);
    [
        DirLayout { offset: 0, input: features, hidden: h1 },
        DirLayout { offset: s1, input: features, hidden: h1 },
        DirLayout { offset: 2 * s1, input: 2 * h1, hidden: h2 },
        DirLayout { offset: 2 * s1 + s2, input: 2 * h1, hidden: h2 },
    ]
}

struct ForwardState {
    seq2: Vec<Vec<f64>>,
    c1f: DirCache,
    c1b: DirCache,
    c2f: DirCache,
    c2b: DirCache,
}

impl Predictor for RecurrentNet {
    fn dim(&self) -> usize {
        self.weeks * self.features
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|row| {
                if row.len() != self.dim() {
                    return Err(CoreError::ShapeMismatch(format!(
                        "row has {} dims, expected {}",
                        row.len(),
                        self.dim()
                    )));
                }
                Ok(self.forward_one(row, false).0)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Normalized relative error used by the gradient check: exact relative
    /// error for large entries, absolute for sub-unit ones.
    pub(crate) fn grad_rel_err(analytic: f64, fd: f64) -> f64 {
        (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1.0)
    }

    fn tiny_batch() -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs = vec![
            vec![0.2, 0.8, 0.5, 0.1],
            vec![0.9, 0.3, 0.7, 0.6],
            vec![0.0, 1.0, 0.4, 0.2],
        ];
        let ys = vec![1.0, 0.0, 1.0];
        (xs, ys)
    }

    #[test]
    fn gradients_match_central_differences() {
        // Tiny configuration: W=2, F=2, hidden 2.
        let (xs, ys) = tiny_batch();
        let mut net = RecurrentNet::init(2, 2, (2, 2), 42, 0.5);
        let (_, grad) = net.loss_and_grad(&xs, &ys);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for p in 0..net.params.len() {
            let orig = net.params[p];
            net.params[p] = orig + h;
            let (lp, _) = (net.loss_and_grad(&xs, &ys).0, ());
            net.params[p] = orig - h;
            let lm = net.loss_and_grad(&xs, &ys).0;
            net.params[p] = orig;
            let fd = (lp - lm) / (2.0 * h);
            worst = worst.max(grad_rel_err(grad[p], fd));
        }
        assert!(worst <= 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn fit_is_deterministic() {
        let (xs, ys) = tiny_batch();
        let cfg = TrainConfig {
            hidden: (2, 2),
            max_epochs: 30,
            ..TrainConfig::default()
        };
        let a = RecurrentNet::fit(2, 2, &xs, &ys, &cfg).unwrap();
        let b = RecurrentNet::fit(2, 2, &xs, &ys, &cfg).unwrap();
        assert_eq!(a, b);
        let rows = vec![vec![0.3, 0.3, 0.3, 0.3]];
        assert_eq!(a.predict(&rows).unwrap(), b.predict(&rows).unwrap());
    }

    #[test]
    fn outputs_stay_in_unit_interval() {
        let net = RecurrentNet::init(3, 4, (3, 2), 7, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        for p in net.predict(&rows).unwrap() {
            assert!(p.is_finite() && (0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        // Class decided by the mean of the first feature across weeks.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..24 {
            let hi = i % 2 == 0;
            let row: Vec<f64> = (0..6)
                .map(|d| {
                    if d % 2 == 0 {
                        if hi { 0.8 + 0.2 * rng.gen::<f64>() } else { 0.2 * rng.gen::<f64>() }
                    } else {
                        rng.gen::<f64>()
                    }
                })
                .collect();
            xs.push(row);
            ys.push(if hi { 1.0 } else { 0.0 });
        }
        let cfg = TrainConfig {
            hidden: (4, 4),
            max_epochs: 150,
            learning_rate: 0.02,
            ..TrainConfig::default()
        };
        let net = RecurrentNet::fit(3, 2, &xs, &ys, &cfg).unwrap();
        let probs = net.predict(&xs).unwrap();
        let correct = probs
            .iter()
            .zip(&ys)
            .filter(|(p, y)| (**p >= 0.5) == (**y == 1.0))
            .count();
        assert!(correct >= 22, "only {correct}/24 correct");
    }
}
