//! Hidden Markov model trained end-to-end by gradient descent.
//!
//! Prior and transition rows live as unconstrained logits mapped through
//! softmax, so plain SGD respects the simplex. Predictions are a logistic
//! head on the filtered belief vector: the normalized forward recursion
//! (predict with the transition, correct with the emission likelihood).

use crate::autodiff::{glorot_uniform, sigmoid, softplus, Matrix, NodeId, ParamVector, Tape};
use crate::error::{Error, Result};
use crate::models::TapedParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Emission {
    /// Independent per-feature Bernoulli probabilities, `sigmoid(logits)`.
    Bernoulli { logits: Matrix },
    /// Diagonal Gaussians with per-feature mean and log-variance.
    Gaussian { mean: Matrix, log_var: Matrix },
}

impl Emission {
    fn is_bernoulli(&self) -> bool {
        matches!(self, Emission::Bernoulli { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HmmModel {
    pub n_states: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    prior_logits: Matrix, // 1 x K
    trans_logits: Matrix, // K x K, row = from-state
    emission: Emission,
    head_w: Matrix, // K x Q
    head_b: Matrix, // 1 x Q
}

impl HmmModel {
    pub fn new_bernoulli(n_states: usize, input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HmmModel {
            n_states,
            input_dim,
            output_dim,
            prior_logits: Matrix::zeros(1, n_states),
            trans_logits: glorot_uniform(n_states, n_states, &mut rng),
            emission: Emission::Bernoulli {
                logits: glorot_uniform(n_states, input_dim, &mut rng),
            },
            head_w: glorot_uniform(n_states, output_dim, &mut rng),
            head_b: Matrix::zeros(1, output_dim),
        }
    }

    pub fn new_gaussian(n_states: usize, input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HmmModel {
            n_states,
            input_dim,
            output_dim,
            prior_logits: Matrix::zeros(1, n_states),
            trans_logits: glorot_uniform(n_states, n_states, &mut rng),
            emission: Emission::Gaussian {
                mean: glorot_uniform(n_states, input_dim, &mut rng),
                log_var: Matrix::zeros(n_states, input_dim),
            },
            head_w: glorot_uniform(n_states, output_dim, &mut rng),
            head_b: Matrix::zeros(1, output_dim),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn named(&self) -> Vec<(&'static str, &Matrix)> {
        let mut parts = vec![
            ("prior_logits", &self.prior_logits),
            ("trans_logits", &self.trans_logits),
        ];
        match &self.emission {
            Emission::Bernoulli { logits } => parts.push(("emit_logits", logits)),
            Emission::Gaussian { mean, log_var } => {
                parts.push(("emit_mean", mean));
                parts.push(("emit_log_var", log_var));
            }
        }
        parts.push(("head_w", &self.head_w));
        parts.push(("head_b", &self.head_b));
        parts
    }

    pub fn params(&self) -> ParamVector {
        ParamVector::from_named(&self.named())
    }

    pub fn head_params(&self) -> ParamVector {
        ParamVector::from_named(&[("head_w", &self.head_w), ("head_b", &self.head_b)])
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        let mut pv = self.params();
        pv.set_values(values)?;
        for (name, m) in pv.unflatten() {
            match name.as_str() {
                "prior_logits" => self.prior_logits = m,
                "trans_logits" => self.trans_logits = m,
                "emit_logits" => {
                    self.emission = Emission::Bernoulli { logits: m };
                }
                "emit_mean" => {
                    if let Emission::Gaussian { mean, .. } = &mut self.emission {
                        *mean = m;
                    }
                }
                "emit_log_var" => {
                    if let Emission::Gaussian { log_var, .. } = &mut self.emission {
                        *log_var = m;
                    }
                }
                "head_w" => self.head_w = m,
                "head_b" => self.head_b = m,
                other => panic!("unknown hmm segment {other}"),
            }
        }
        Ok(())
    }

    pub fn leaves(&self, tape: &mut Tape) -> TapedParams {
        self.leaves_prefixed(tape, "")
    }

    pub(crate) fn leaves_prefixed(&self, tape: &mut Tape, prefix: &str) -> TapedParams {
        let mut ids = Vec::new();
        let mut names = Vec::new();
        for (name, m) in self.named() {
            ids.push(tape.leaf(m.clone()));
            names.push(format!("{prefix}{name}"));
        }
        TapedParams { ids, names }
    }

    pub fn prior(&self) -> Vec<f64> {
        softmax_row(self.prior_logits.row(0))
    }

    pub fn transition(&self) -> Matrix {
        let k = self.n_states;
        let mut out = Matrix::zeros(k, k);
        for i in 0..k {
            let row = softmax_row(self.trans_logits.row(i));
            out.row_mut(i).copy_from_slice(&row);
        }
        out
    }

    /// Per-state log-likelihood of one observation row.
    fn log_likelihood_row(&self, x: &[f64]) -> Vec<f64> {
        let k = self.n_states;
        let mut out = vec![0.0; k];
        match &self.emission {
            Emission::Bernoulli { logits } => {
                for s in 0..k {
                    let mut acc = 0.0;
                    for (p, &xv) in x.iter().enumerate() {
                        let l = logits.get(s, p);
                        // log sigmoid(l) = -softplus(-l); log sigmoid(-l) = -softplus(l)
                        acc += -xv * softplus(-l) - (1.0 - xv) * softplus(l);
                    }
                    out[s] = acc;
                }
            }
            Emission::Gaussian { mean, log_var } => {
                for s in 0..k {
                    let mut acc = 0.0;
                    for (p, &xv) in x.iter().enumerate() {
                        let lv = log_var.get(s, p);
                        let d = xv - mean.get(s, p);
                        acc += -0.5 * (LN_2PI + lv + d * d * (-lv).exp());
                    }
                    out[s] = acc;
                }
            }
        }
        out
    }

    /// Filtered beliefs p(s_t | x_{0..=t}) for one sequence (T x K).
    ///
    /// Errors when the total likelihood at some timestep is zero, naming the
    /// timestep.
    pub fn filter(&self, seq: &Matrix) -> Result<Matrix> {
        if seq.rows() == 0 {
            return Err(Error::EmptyInput("hmm filter sequence"));
        }
        if seq.cols() != self.input_dim {
            return Err(Error::LengthMismatch {
                context: "hmm input dimension",
                expected: self.input_dim,
                actual: seq.cols(),
            });
        }
        let k = self.n_states;
        let prior = self.prior();
        let trans = self.transition();
        let mut beliefs = Matrix::zeros(seq.rows(), k);
        let mut prev = vec![0.0; k];
        for t in 0..seq.rows() {
            let loglik = self.log_likelihood_row(seq.row(t));
            let shift = loglik.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut pred = vec![0.0; k];
            if t == 0 {
                pred.copy_from_slice(&prior);
            } else {
                for (j, &b) in prev.iter().enumerate() {
                    if b == 0.0 {
                        continue;
                    }
                    for (s, p) in pred.iter_mut().enumerate() {
                        *p += b * trans.get(j, s);
                    }
                }
            }
            let mut total = 0.0;
            let row = beliefs.row_mut(t);
            for s in 0..k {
                let u = pred[s] * (loglik[s] - shift).exp();
                row[s] = u;
                total += u;
            }
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::ZeroLikelihood { timestep: t });
            }
            for v in row.iter_mut() {
                *v /= total;
            }
            prev.copy_from_slice(beliefs.row(t));
        }
        Ok(beliefs)
    }

    pub(crate) fn logits_from_belief(&self, b: &[f64]) -> Vec<f64> {
        let mut z = self.head_b.row(0).to_vec();
        for (s, &bv) in b.iter().enumerate() {
            for (o, &w) in z.iter_mut().zip(self.head_w.row(s)) {
                *o += bv * w;
            }
        }
        z
    }

    /// Per-timestep output probabilities for one sequence (T x Q).
    pub fn predict_seq(&self, seq: &Matrix) -> Result<Matrix> {
        let beliefs = self.filter(seq)?;
        let mut out = Matrix::zeros(seq.rows(), self.output_dim);
        for t in 0..seq.rows() {
            for (q, &z) in self.logits_from_belief(beliefs.row(t)).iter().enumerate() {
                out.set(t, q, sigmoid(z));
            }
        }
        Ok(out)
    }

    /// Taped per-state log-likelihoods for one aligned step (N x K).
    fn loglik_graph(
        &self,
        tape: &mut Tape,
        taped: &TapedParams,
        prefix: &str,
        x_t: &Matrix,
    ) -> Result<NodeId> {
        let n = x_t.rows();
        match &self.emission {
            Emission::Bernoulli { .. } => {
                let logits = taped.id(&format!("{prefix}emit_logits"));
                let x_node = tape.leaf(x_t.clone());
                let one_minus_x = tape.leaf(x_t.map(|v| 1.0 - v));
                let neg = tape.neg(logits);
                let log_on = tape.softplus(neg); // softplus(-l) = -log sigmoid(l)
                let log_on = tape.neg(log_on);
                let sp = tape.softplus(logits);
                let log_off = tape.neg(sp);
                let a = tape.matmul_nt(x_node, log_on)?;
                let b = tape.matmul_nt(one_minus_x, log_off)?;
                tape.add(a, b)
            }
            Emission::Gaussian { .. } => {
                let mean = taped.id(&format!("{prefix}emit_mean"));
                let log_var = taped.id(&format!("{prefix}emit_log_var"));
                let x_node = tape.leaf(x_t.clone());
                let x_sq = tape.leaf(x_t.map(|v| v * v));
                let inv_var = {
                    let neg = tape.neg(log_var);
                    tape.exp(neg)
                };
                // (x - mu)^2 / var = x^2*iv - 2*x*(mu*iv) + mu^2*iv
                let a = tape.matmul_nt(x_sq, inv_var)?;
                let mu_iv = tape.mul(mean, inv_var)?;
                let b = tape.matmul_nt(x_node, mu_iv)?;
                let b2 = tape.scale(b, -2.0);
                let mu2_iv = {
                    let mu2 = tape.mul(mean, mean)?;
                    tape.mul(mu2, inv_var)?
                };
                // Per-state constant: sum_p (mu^2*iv + log_var + ln 2pi)
                let lv_shift = tape.affine(log_var, 1.0, LN_2PI);
                let state_const = tape.add(mu2_iv, lv_shift)?;
                let state_const = tape.row_sum(state_const); // K x 1
                let state_const = tape.transpose(state_const); // 1 x K
                let quad = tape.add(a, b2)?;
                let quad = tape.add_row_bcast(quad, state_const)?;
                let _ = n;
                Ok(tape.scale(quad, -0.5))
            }
        }
    }

    /// Taped filtered beliefs for an aligned sequence batch; returns one
    /// N x K node per timestep.
    pub(crate) fn beliefs_graph(
        &self,
        tape: &mut Tape,
        taped: &TapedParams,
        prefix: &str,
        xs: &[Matrix],
    ) -> Result<Vec<NodeId>> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("hmm sequence batch"));
        }
        let n = xs[0].rows();
        let prior_node = {
            let logits = taped.id(&format!("{prefix}prior_logits"));
            tape.softmax_rows(logits)
        };
        let trans_node = {
            let logits = taped.id(&format!("{prefix}trans_logits"));
            tape.softmax_rows(logits)
        };
        let mut beliefs = Vec::with_capacity(xs.len());
        let mut prev: Option<NodeId> = None;
        for (t, x_t) in xs.iter().enumerate() {
            let loglik = self.loglik_graph(tape, taped, prefix, x_t)?;
            // Detached per-row shift: beliefs are invariant to it, so treating
            // the max as a constant leaf keeps gradients exact.
            let shift = {
                let v = tape.value(loglik);
                let m = Matrix::from_fn(v.rows(), 1, |i, _| {
                    -v.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                });
                tape.leaf(m)
            };
            let shifted = tape.add_col_bcast(loglik, shift)?;
            let e = tape.exp(shifted);
            let pred = match prev {
                None => tape.repeat_rows(prior_node, n)?,
                Some(b) => tape.matmul(b, trans_node)?,
            };
            let u = tape.mul(pred, e)?;
            let total = tape.row_sum(u);
            {
                let tv = tape.value(total);
                for i in 0..tv.rows() {
                    let s = tv.get(i, 0);
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::ZeroLikelihood { timestep: t });
                    }
                }
            }
            let b = tape.div_col_bcast(u, total)?;
            beliefs.push(b);
            prev = Some(b);
        }
        Ok(beliefs)
    }

    /// Per-step output logits for an aligned sequence batch.
    pub fn logits_graph(
        &self,
        tape: &mut Tape,
        taped: &TapedParams,
        xs: &[Matrix],
        prefix: &str,
    ) -> Result<Vec<NodeId>> {
        let beliefs = self.beliefs_graph(tape, taped, prefix, xs)?;
        let head_w = taped.id(&format!("{prefix}head_w"));
        let head_b = taped.id(&format!("{prefix}head_b"));
        let mut logits = Vec::with_capacity(beliefs.len());
        for b in beliefs {
            let z = tape.matmul(b, head_w)?;
            logits.push(tape.add_row_bcast(z, head_b)?);
        }
        Ok(logits)
    }

    /// Build a Bernoulli-emission model from explicit probabilities, mapping
    /// them back through the inverse link. Useful for tests and for seeding
    /// from a known generative process.
    pub fn from_probabilities(
        prior: &[f64],
        transition: &Matrix,
        emission_probs: &Matrix,
        head_w: Matrix,
        head_b: Matrix,
        output_dim: usize,
    ) -> Self {
        let k = prior.len();
        let clamp_ln = |p: f64| p.max(1e-12).ln();
        let prior_logits = Matrix::from_fn(1, k, |_, j| clamp_ln(prior[j]));
        let trans_logits = Matrix::from_fn(k, k, |i, j| clamp_ln(transition.get(i, j)));
        let emit_logits = emission_probs.map(|p| {
            let p = p.clamp(1e-9, 1.0 - 1e-9);
            (p / (1.0 - p)).ln()
        });
        HmmModel {
            n_states: k,
            input_dim: emission_probs.cols(),
            output_dim,
            prior_logits,
            trans_logits,
            emission: Emission::Bernoulli {
                logits: emit_logits,
            },
            head_w,
            head_b,
        }
    }

    pub fn emission(&self) -> &Emission {
        &self.emission
    }

    pub fn is_bernoulli(&self) -> bool {
        self.emission.is_bernoulli()
    }
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{testutil::gradcheck_loss, AnyModel, Batch};
    use rand::Rng;

    #[test]
    fn rows_sum_to_one() {
        let model = HmmModel::new_bernoulli(4, 3, 1, 5);
        let prior_sum: f64 = model.prior().iter().sum();
        assert!((prior_sum - 1.0).abs() < 1e-12);
        let trans = model.transition();
        for i in 0..4 {
            let s: f64 = trans.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_state_beliefs_are_one() {
        let model = HmmModel::new_bernoulli(1, 3, 1, 0);
        let seq = Matrix::from_fn(5, 3, |i, j| ((i + j) % 2) as f64);
        let beliefs = model.filter(&seq).unwrap();
        for &v in beliefs.data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_model_gives_uniform_beliefs() {
        // Uniform prior and transitions, emissions identical across states.
        let k = 4;
        let prior = vec![0.25; 4];
        let trans = Matrix::filled(k, k, 0.25);
        let emit = Matrix::filled(k, 3, 0.3);
        let model = HmmModel::from_probabilities(
            &prior,
            &trans,
            &emit,
            Matrix::zeros(k, 1),
            Matrix::zeros(1, 1),
            1,
        );
        let seq = Matrix::from_fn(6, 3, |i, j| ((i * j) % 2) as f64);
        let beliefs = model.filter(&seq).unwrap();
        for &v in beliefs.data() {
            assert!((v - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn beliefs_match_exhaustive_path_enumeration() {
        // K=2, T=2, hand-set probabilities: enumerate the joint over all
        // state paths and marginalize, then compare against the recursion.
        let prior = [0.7, 0.3];
        let trans = Matrix::from_vec(2, 2, vec![0.8, 0.2, 0.4, 0.6]).unwrap();
        let emit = Matrix::from_vec(2, 1, vec![0.9, 0.2]).unwrap();
        let model = HmmModel::from_probabilities(
            &prior,
            &trans,
            &emit,
            Matrix::zeros(2, 1),
            Matrix::zeros(1, 1),
            1,
        );
        let seq = Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let beliefs = model.filter(&seq).unwrap();

        let e = |s: usize, x: f64| -> f64 {
            let p = emit.get(s, 0);
            if x > 0.5 {
                p
            } else {
                1.0 - p
            }
        };
        // t = 0: b0(s) = prior(s) e(s, x0) / norm
        let mut b0 = [0.0; 2];
        for s in 0..2 {
            b0[s] = prior[s] * e(s, 1.0);
        }
        let n0: f64 = b0.iter().sum();
        // t = 1: b1(s1) = sum_s0 prior(s0) e(s0,x0) a(s0,s1) e(s1,x1) / norm
        let mut b1 = [0.0; 2];
        for s1 in 0..2 {
            for s0 in 0..2 {
                b1[s1] += prior[s0] * e(s0, 1.0) * trans.get(s0, s1) * e(s1, 0.0);
            }
        }
        let n1: f64 = b1.iter().sum();
        for s in 0..2 {
            assert!((beliefs.get(0, s) - b0[s] / n0).abs() < 1e-10);
            assert!((beliefs.get(1, s) - b1[s] / n1).abs() < 1e-10);
        }
        // Normalization at every step.
        for t in 0..2 {
            let s: f64 = beliefs.row(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_likelihood_names_the_timestep() {
        // Logits at +-800 underflow to exact zeros: state 0 cannot emit a 1,
        // state 1 cannot emit a 0, and state 0 can only transition to itself.
        // Feeding [0, 1] pins the chain in state 0 and then demands an
        // impossible observation at the second step.
        let prior = [1.0, 0.0];
        let trans = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let emit = Matrix::from_vec(2, 1, vec![0.5, 0.5]).unwrap();
        let mut model = HmmModel::from_probabilities(
            &prior,
            &trans,
            &emit,
            Matrix::zeros(2, 1),
            Matrix::zeros(1, 1),
            1,
        );
        let pv = model.params();
        let mut vals = pv.values().to_vec();
        let emit_range = pv.segment_range("emit_logits").unwrap();
        vals[emit_range.start] = -800.0;
        vals[emit_range.start + 1] = 800.0;
        let trans_range = pv.segment_range("trans_logits").unwrap();
        vals[trans_range.start + 1] = -800.0; // p(0 -> 1) underflows to 0
        model.set_params(&vals).unwrap();
        let seq = Matrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        match model.filter(&seq) {
            Err(Error::ZeroLikelihood { timestep }) => assert_eq!(timestep, 1),
            other => panic!("expected zero-likelihood error, got {other:?}"),
        }
    }

    #[test]
    fn taped_beliefs_match_fast_filter() {
        let model = HmmModel::new_bernoulli(3, 4, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seq = Matrix::from_fn(5, 4, |_, _| f64::from(rng.gen_range(0..2)));
        let fast = model.filter(&seq).unwrap();
        let xs: Vec<Matrix> = (0..5)
            .map(|t| Matrix::from_fn(1, 4, |_, j| seq.get(t, j)))
            .collect();
        let mut tape = Tape::new();
        let taped = model.leaves(&mut tape);
        let nodes = model.beliefs_graph(&mut tape, &taped, "", &xs).unwrap();
        for (t, &id) in nodes.iter().enumerate() {
            for s in 0..3 {
                assert!((tape.value(id).get(0, s) - fast.get(t, s)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gaussian_taped_matches_fast_filter() {
        let model = HmmModel::new_gaussian(3, 2, 1, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seq = Matrix::from_fn(4, 2, |_, _| rng.gen_range(-2.0..2.0));
        let fast = model.filter(&seq).unwrap();
        let xs: Vec<Matrix> = (0..4)
            .map(|t| Matrix::from_fn(1, 2, |_, j| seq.get(t, j)))
            .collect();
        let mut tape = Tape::new();
        let taped = model.leaves(&mut tape);
        let nodes = model.beliefs_graph(&mut tape, &taped, "", &xs).unwrap();
        for (t, &id) in nodes.iter().enumerate() {
            for s in 0..3 {
                assert!((tape.value(id).get(0, s) - fast.get(t, s)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences_bernoulli() {
        let model = AnyModel::Hmm(HmmModel::new_bernoulli(3, 3, 1, 19));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs: Vec<Matrix> = (0..3)
            .map(|_| Matrix::from_fn(2, 3, |_, _| f64::from(rng.gen_range(0..2))))
            .collect();
        let ys: Vec<Matrix> = (0..3)
            .map(|_| Matrix::from_fn(2, 1, |_, _| f64::from(rng.gen_range(0..2))))
            .collect();
        gradcheck_loss(&model, &Batch::Sequences { xs: &xs, ys: &ys }, 1e-4);
    }

    #[test]
    fn loss_gradients_match_finite_differences_gaussian() {
        let model = AnyModel::Hmm(HmmModel::new_gaussian(2, 2, 1, 23));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<Matrix> = (0..3)
            .map(|_| Matrix::from_fn(2, 2, |_, _| rng.gen_range(-1.5..1.5)))
            .collect();
        let ys: Vec<Matrix> = (0..3)
            .map(|_| Matrix::from_fn(2, 1, |_, _| f64::from(rng.gen_range(0..2))))
            .collect();
        gradcheck_loss(&model, &Batch::Sequences { xs: &xs, ys: &ys }, 1e-4);
    }
}
