//! The differentiable stand-in for the tree penalty: a small MLP trained to
//! predict the true average path length from the regularized parameter
//! subset.
//!
//! The buffer collects one (theta, APL) pair per optimizer step, keeps at
//! most `capacity` entries, and drops anything older than `window` steps.
//! Retraining minimizes `sum_j (APL_j - net(theta_j))^2 + epsilon * ||xi||^2`
//! by Adam, optionally over extra samples drawn from the convex hull of the
//! buffer (Dirichlet weights) whose true APLs come from a caller-supplied
//! oracle.

use crate::autodiff::{glorot_uniform, AdamState, Matrix, NodeId, Tape};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AplSample {
    pub theta: Vec<f64>,
    pub true_apl: f64,
    pub step: u64,
}

/// One-hidden-layer tanh MLP with a linear scalar output. The output layer
/// starts at zero so an untrained surrogate predicts exactly 0 and
/// contributes no gradient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateNet {
    w1: Matrix, // D x H
    b1: Matrix, // 1 x H
    w2: Matrix, // H x 1
    b2: Matrix, // 1 x 1
}

impl SurrogateNet {
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SurrogateNet {
            w1: glorot_uniform(input_dim, hidden, &mut rng),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(hidden, 1),
            b2: Matrix::zeros(1, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    /// Raw (unclamped) prediction for one parameter vector.
    pub fn predict(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                context: "surrogate input",
                expected: self.input_dim(),
                actual: theta.len(),
            });
        }
        let h = self.hidden_dim();
        let mut out = self.b2.get(0, 0);
        for j in 0..h {
            let mut z = self.b1.get(0, j);
            for (i, &t) in theta.iter().enumerate() {
                z += t * self.w1.get(i, j);
            }
            out += z.tanh() * self.w2.get(j, 0);
        }
        Ok(out)
    }

    /// Differentiable forward pass from a D x 1 column node already on the
    /// tape (typically the model's regularized-subset node).
    pub fn forward_graph(&self, tape: &mut Tape, theta: NodeId) -> Result<NodeId> {
        let got = tape.value(theta).rows();
        if got != self.input_dim() || tape.value(theta).cols() != 1 {
            return Err(Error::LengthMismatch {
                context: "surrogate input node",
                expected: self.input_dim(),
                actual: got,
            });
        }
        let w1 = tape.leaf(self.w1.clone());
        let b1 = tape.leaf(self.b1.clone());
        let w2 = tape.leaf(self.w2.clone());
        let b2 = tape.leaf(self.b2.clone());
        let row = tape.transpose(theta); // 1 x D
        let z = tape.matmul(row, w1)?;
        let z = tape.add_row_bcast(z, b1)?;
        let h = tape.tanh(z);
        let out = tape.matmul(h, w2)?;
        tape.add(out, b2)
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for m in [&self.w1, &self.b1, &self.w2, &self.b2] {
            v.extend_from_slice(m.data());
        }
        v
    }

    fn set_params_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        let shapes = [
            self.w1.shape(),
            self.b1.shape(),
            self.w2.shape(),
            self.b2.shape(),
        ];
        let mut parts = Vec::new();
        for (r, c) in shapes {
            parts.push(Matrix::from_vec(r, c, values[offset..offset + r * c].to_vec()).unwrap());
            offset += r * c;
        }
        self.b2 = parts.pop().unwrap();
        self.w2 = parts.pop().unwrap();
        self.b1 = parts.pop().unwrap();
        self.w1 = parts.pop().unwrap();
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub step: u64,
    pub buffer_size: usize,
    pub augmented: usize,
    pub mean_mse: f64,
    pub max_mse: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateState {
    pub net: SurrogateNet,
    buffer: VecDeque<AplSample>,
    /// J: maximum buffer entries.
    pub capacity: usize,
    /// E: entries older than this many optimizer steps are evicted.
    pub window: u64,
    /// Ridge strength on the surrogate weights.
    pub epsilon: f64,
    pub train_epochs: usize,
    pub learning_rate: f64,
}

impl SurrogateState {
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        SurrogateState {
            net: SurrogateNet::new(input_dim, hidden, seed),
            buffer: VecDeque::new(),
            capacity: 100,
            window: 500,
            epsilon: 1e-4,
            train_epochs: 100,
            learning_rate: 1e-3,
        }
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn buffer(&self) -> impl Iterator<Item = &AplSample> {
        self.buffer.iter()
    }

    /// Prediction clamped at zero, for logging; gradients always use the raw
    /// network output.
    pub fn predict_clamped(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.net.predict(theta)?.max(0.0))
    }

    fn evict_stale(&mut self, now: u64) {
        while let Some(front) = self.buffer.front() {
            if front.step + self.window < now {
                self.buffer.pop_front();
            } else {
                break;
            }
        }
    }

    /// Append one on-trajectory sample: stale entries leave first, then the
    /// oldest makes room if the buffer is at capacity.
    pub fn record_sample(&mut self, theta: Vec<f64>, true_apl: f64, step: u64) {
        debug_assert!(true_apl >= 0.0 && true_apl.is_finite());
        self.evict_stale(step);
        while self.buffer.len() >= self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(AplSample {
            theta,
            true_apl,
            step,
        });
    }

    /// Draw `count` synthetic parameter vectors from the convex hull of the
    /// buffer: symmetric Dirichlet (alpha = 1) weights over the buffer
    /// entries, one convex combination per draw.
    pub fn draw_convex_hull(&self, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
        if self.buffer.is_empty() {
            return Err(Error::EmptyInput("convex-hull augmentation buffer"));
        }
        let dim = self.buffer[0].theta.len();
        let mut thetas: Vec<Vec<f64>> = Vec::with_capacity(count);
        for _ in 0..count {
            // Dirichlet(1, ..., 1): normalized unit exponentials.
            let mut weights: Vec<f64> = (0..self.buffer.len())
                .map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln())
                .collect();
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
            let mut theta = vec![0.0; dim];
            for (sample, &w) in self.buffer.iter().zip(&weights) {
                for (t, &v) in theta.iter_mut().zip(&sample.theta) {
                    *t += w * v;
                }
            }
            thetas.push(theta);
        }
        Ok(thetas)
    }

    /// Convex-hull draws labeled with the true-APL oracle. The results are
    /// training-only: they are not pushed into the buffer.
    pub fn augment_convex_hull(
        &self,
        count: usize,
        rng: &mut ChaCha8Rng,
        apl_oracle: impl Fn(&[f64]) -> f64 + Sync,
    ) -> Result<Vec<AplSample>> {
        let step = self.buffer.back().map(|s| s.step).unwrap_or(0);
        let thetas = self.draw_convex_hull(count, rng)?;
        Ok(thetas
            .into_par_iter()
            .map(|theta| {
                let true_apl = apl_oracle(&theta);
                AplSample {
                    theta,
                    true_apl,
                    step,
                }
            })
            .collect())
    }

    /// Fit the net to buffer plus augmentation. Returns `None` (holding the
    /// previous weights) when fewer than 10 samples are available.
    pub fn retrain(&mut self, augmented: &[AplSample], now: u64) -> Option<FitReport> {
        self.evict_stale(now);
        let n = self.buffer.len() + augmented.len();
        if n < 10 {
            log::warn!(
                "surrogate retrain skipped at step {now}: only {n} samples; keeping last weights"
            );
            return None;
        }
        let dim = self.net.input_dim();
        let mut x = Matrix::zeros(n, dim);
        let mut t = Matrix::zeros(n, 1);
        for (i, s) in self.buffer.iter().chain(augmented.iter()).enumerate() {
            x.row_mut(i).copy_from_slice(&s.theta);
            t.set(i, 0, s.true_apl);
        }

        let mut flat = self.net.params_flat();
        let mut adam = AdamState::new(flat.len(), self.learning_rate);
        for _ in 0..self.train_epochs {
            let mut tape = Tape::new();
            let w1 = tape.leaf(self.net.w1.clone());
            let b1 = tape.leaf(self.net.b1.clone());
            let w2 = tape.leaf(self.net.w2.clone());
            let b2 = tape.leaf(self.net.b2.clone());
            let xs = tape.leaf(x.clone());
            let targets = tape.leaf(t.clone());
            let z = tape.matmul(xs, w1).expect("shape");
            let z = tape.add_row_bcast(z, b1).expect("shape");
            let h = tape.tanh(z);
            let pred = tape.matmul(h, w2).expect("shape");
            let pred = tape.add_row_bcast(pred, b2).expect("shape");
            let diff = tape.sub(pred, targets).expect("shape");
            let sq = tape.mul(diff, diff).expect("shape");
            let mut loss = tape.sum_all(sq);
            if self.epsilon > 0.0 {
                let mut ridge: Option<NodeId> = None;
                for node in [w1, b1, w2, b2] {
                    let s = tape.mul(node, node).expect("shape");
                    let s = tape.sum_all(s);
                    ridge = Some(match ridge {
                        None => s,
                        Some(r) => tape.add(r, s).expect("shape"),
                    });
                }
                let scaled = tape.scale(ridge.expect("nonempty"), self.epsilon);
                loss = tape.add(loss, scaled).expect("shape");
            }
            tape.backward(loss).expect("scalar loss");
            let mut grads = Vec::with_capacity(flat.len());
            for node in [w1, b1, w2, b2] {
                grads.extend_from_slice(tape.grad(node).data());
            }
            adam.update(&mut flat, &grads).expect("lengths match");
            self.net.set_params_flat(&flat);
        }

        // In-sample fit quality after training.
        let mut mean = 0.0;
        let mut max: f64 = 0.0;
        for s in self.buffer.iter().chain(augmented.iter()) {
            let err = self.net.predict(&s.theta).expect("dim checked") - s.true_apl;
            let sq = err * err;
            mean += sq;
            max = max.max(sq);
        }
        mean /= n as f64;
        Some(FitReport {
            step: now,
            buffer_size: self.buffer.len(),
            augmented: augmented.len(),
            mean_mse: mean,
            max_mse: max,
        })
    }
}

/// Harvest (theta, APL) pairs from several independent short unregularized
/// runs; `harvest` receives the restart index and returns that trajectory's
/// samples.
pub fn restart_samples<F>(restart_count: usize, mut harvest: F) -> Vec<AplSample>
where
    F: FnMut(usize) -> Vec<AplSample>,
{
    let mut out = Vec::new();
    for r in 0..restart_count {
        out.extend(harvest(r));
    }
    out
}
