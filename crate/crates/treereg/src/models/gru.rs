//! Gated recurrent unit with a sigmoid output head per binary target.
//!
//! The state update is the usual convex combination
//! `h_t = (1 - z_t) * h_{t-1} + z_t * tanh(...)`, which keeps every hidden
//! coordinate in [-1, 1].

use crate::autodiff::{glorot_uniform, sigmoid, Matrix, NodeId, ParamVector, Tape};
use crate::error::{Error, Result};
use crate::models::TapedParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruModel {
    pub input_dim: usize,
    pub state_dim: usize,
    pub output_dim: usize,
    update_x: Matrix, // P x K
    update_h: Matrix, // K x K
    update_b: Matrix, // 1 x K
    reset_x: Matrix,
    reset_h: Matrix,
    reset_b: Matrix,
    cand_x: Matrix,
    cand_h: Matrix,
    cand_b: Matrix,
    head_w: Matrix, // K x Q
    head_b: Matrix, // 1 x Q
}

const GATE_NAMES: [&str; 11] = [
    "update_x", "update_h", "update_b", "reset_x", "reset_h", "reset_b", "cand_x", "cand_h",
    "cand_b", "head_w", "head_b",
];

impl GruModel {
    pub fn new(input_dim: usize, state_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, k, q) = (input_dim, state_dim, output_dim);
        GruModel {
            input_dim: p,
            state_dim: k,
            output_dim: q,
            update_x: glorot_uniform(p, k, &mut rng),
            update_h: glorot_uniform(k, k, &mut rng),
            update_b: Matrix::zeros(1, k),
            reset_x: glorot_uniform(p, k, &mut rng),
            reset_h: glorot_uniform(k, k, &mut rng),
            reset_b: Matrix::zeros(1, k),
            cand_x: glorot_uniform(p, k, &mut rng),
            cand_h: glorot_uniform(k, k, &mut rng),
            cand_b: Matrix::zeros(1, k),
            head_w: glorot_uniform(k, q, &mut rng),
            head_b: Matrix::zeros(1, q),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn matrices(&self) -> [&Matrix; 11] {
        [
            &self.update_x,
            &self.update_h,
            &self.update_b,
            &self.reset_x,
            &self.reset_h,
            &self.reset_b,
            &self.cand_x,
            &self.cand_h,
            &self.cand_b,
            &self.head_w,
            &self.head_b,
        ]
    }

    fn matrices_mut(&mut self) -> [&mut Matrix; 11] {
        [
            &mut self.update_x,
            &mut self.update_h,
            &mut self.update_b,
            &mut self.reset_x,
            &mut self.reset_h,
            &mut self.reset_b,
            &mut self.cand_x,
            &mut self.cand_h,
            &mut self.cand_b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn params(&self) -> ParamVector {
        let mats = self.matrices();
        let parts: Vec<(&str, &Matrix)> = GATE_NAMES.iter().copied().zip(mats).collect();
        ParamVector::from_named(&parts)
    }

    /// Output head only: the subset the tree regularizer sees.
    pub fn head_params(&self) -> ParamVector {
        ParamVector::from_named(&[("head_w", &self.head_w), ("head_b", &self.head_b)])
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        let mut pv = self.params();
        pv.set_values(values)?;
        let unflat = pv.unflatten();
        for ((_, m), slot) in unflat.into_iter().zip(self.matrices_mut()) {
            *slot = m;
        }
        Ok(())
    }

    pub fn leaves(&self, tape: &mut Tape) -> TapedParams {
        self.leaves_prefixed(tape, "")
    }

    pub(crate) fn leaves_prefixed(&self, tape: &mut Tape, prefix: &str) -> TapedParams {
        let mut ids = Vec::new();
        let mut names = Vec::new();
        for (name, m) in GATE_NAMES.iter().zip(self.matrices()) {
            ids.push(tape.leaf(m.clone()));
            names.push(format!("{prefix}{name}"));
        }
        TapedParams { ids, names }
    }

    /// One taped state update for a batch of rows (N x K -> N x K).
    pub(crate) fn step_graph(
        &self,
        tape: &mut Tape,
        taped: &TapedParams,
        prefix: &str,
        x_t: NodeId,
        h_prev: NodeId,
    ) -> Result<NodeId> {
        let pid = |name: &str| taped.id(&format!("{prefix}{name}"));
        let gate = |tape: &mut Tape, xw: &str, hw: &str, b: &str, h_in: NodeId| -> Result<NodeId> {
            let a = tape.matmul(x_t, pid(xw))?;
            let c = tape.matmul(h_in, pid(hw))?;
            let s = tape.add(a, c)?;
            tape.add_row_bcast(s, pid(b))
        };
        let z_pre = gate(tape, "update_x", "update_h", "update_b", h_prev)?;
        let z = tape.sigmoid(z_pre);
        let r_pre = gate(tape, "reset_x", "reset_h", "reset_b", h_prev)?;
        let r = tape.sigmoid(r_pre);
        let gated = tape.mul(r, h_prev)?;
        let c_pre = gate(tape, "cand_x", "cand_h", "cand_b", gated)?;
        let cand = tape.tanh(c_pre);
        let keep = tape.affine(z, -1.0, 1.0); // 1 - z
        let a = tape.mul(keep, h_prev)?;
        let b = tape.mul(z, cand)?;
        tape.add(a, b)
    }

    /// Per-step output logits for an aligned sequence batch.
    pub fn logits_graph(
        &self,
        tape: &mut Tape,
        taped: &TapedParams,
        xs: &[Matrix],
    ) -> Result<Vec<NodeId>> {
        self.logits_graph_prefixed(tape, taped, "", xs)
    }

    pub(crate) fn logits_graph_prefixed(
        &self,
        tape: &mut Tape,
        taped: &TapedParams,
        prefix: &str,
        xs: &[Matrix],
    ) -> Result<Vec<NodeId>> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("gru sequence batch"));
        }
        let n = xs[0].rows();
        let mut h = tape.leaf(Matrix::zeros(n, self.state_dim));
        let head_w = taped.id(&format!("{prefix}head_w"));
        let head_b = taped.id(&format!("{prefix}head_b"));
        let mut logits = Vec::with_capacity(xs.len());
        for x_t in xs {
            let x_node = tape.leaf(x_t.clone());
            h = self.step_graph(tape, taped, prefix, x_node, h)?;
            let z = tape.matmul(h, head_w)?;
            logits.push(tape.add_row_bcast(z, head_b)?);
        }
        Ok(logits)
    }

    /// One tape-free state update for a single timestep.
    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim || h_prev.len() != self.state_dim {
            return Err(Error::LengthMismatch {
                context: "gru step dimensions",
                expected: self.input_dim + self.state_dim,
                actual: x.len() + h_prev.len(),
            });
        }
        let k = self.state_dim;
        let pre = |wx: &Matrix, wh: &Matrix, b: &Matrix, h_in: &[f64]| -> Vec<f64> {
            let mut out = b.row(0).to_vec();
            for (i, &xv) in x.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (o, &w) in out.iter_mut().zip(wx.row(i)) {
                    *o += xv * w;
                }
            }
            for (i, &hv) in h_in.iter().enumerate() {
                if hv == 0.0 {
                    continue;
                }
                for (o, &w) in out.iter_mut().zip(wh.row(i)) {
                    *o += hv * w;
                }
            }
            out
        };
        let z: Vec<f64> = pre(&self.update_x, &self.update_h, &self.update_b, h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<f64> = pre(&self.reset_x, &self.reset_h, &self.reset_b, h_prev)
            .into_iter()
            .map(sigmoid)
            .collect();
        let gated: Vec<f64> = r.iter().zip(h_prev).map(|(&r, &h)| r * h).collect();
        let cand: Vec<f64> = pre(&self.cand_x, &self.cand_h, &self.cand_b, &gated)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let mut h = vec![0.0; k];
        for i in 0..k {
            h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * cand[i];
        }
        Ok(h)
    }

    /// Hidden states for a whole sequence (T x K).
    pub fn hidden_seq(&self, seq: &Matrix) -> Result<Matrix> {
        let mut h = vec![0.0; self.state_dim];
        let mut out = Matrix::zeros(seq.rows(), self.state_dim);
        for t in 0..seq.rows() {
            h = self.step(seq.row(t), &h)?;
            out.row_mut(t).copy_from_slice(&h);
        }
        Ok(out)
    }

    pub(crate) fn logits_from_state(&self, h: &[f64]) -> Vec<f64> {
        let mut z = self.head_b.row(0).to_vec();
        for (i, &hv) in h.iter().enumerate() {
            for (o, &w) in z.iter_mut().zip(self.head_w.row(i)) {
                *o += hv * w;
            }
        }
        z
    }

    /// Per-timestep output probabilities for one sequence (T x Q).
    pub fn predict_seq(&self, seq: &Matrix) -> Result<Matrix> {
        let hidden = self.hidden_seq(seq)?;
        let mut out = Matrix::zeros(seq.rows(), self.output_dim);
        for t in 0..seq.rows() {
            let logits = self.logits_from_state(hidden.row(t));
            for (q, &z) in logits.iter().enumerate() {
                out.set(t, q, sigmoid(z));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{testutil::gradcheck_loss, AnyModel, Batch};
    use rand::Rng;

    fn random_seq(rng: &mut ChaCha8Rng, t: usize, p: usize) -> Matrix {
        Matrix::from_fn(t, p, |_, _| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn forced_update_gate_zero_keeps_state() {
        let mut model = GruModel::new(2, 3, 1, 0);
        model.update_b = Matrix::filled(1, 3, -60.0);
        model.update_x = Matrix::zeros(2, 3);
        model.update_h = Matrix::zeros(3, 3);
        let h_prev = vec![0.3, -0.5, 0.9];
        let h = model.step(&[1.0, -1.0], &h_prev).unwrap();
        for (a, b) in h.iter().zip(&h_prev) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_update_one_and_zero_candidate_gives_zero_state() {
        let mut model = GruModel::new(2, 3, 1, 0);
        model.update_b = Matrix::filled(1, 3, 60.0);
        model.update_x = Matrix::zeros(2, 3);
        model.update_h = Matrix::zeros(3, 3);
        model.reset_b = Matrix::filled(1, 3, 60.0);
        model.reset_x = Matrix::zeros(2, 3);
        model.reset_h = Matrix::zeros(3, 3);
        model.cand_x = Matrix::zeros(2, 3);
        model.cand_h = Matrix::zeros(3, 3);
        let h = model.step(&[1.0, -1.0], &[0.4, 0.4, 0.4]).unwrap();
        assert!(h.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn final_state_matches_hand_unrolled_recursion() {
        // Recompute the three-step recursion with naive per-element loops.
        let model = GruModel::new(2, 3, 1, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seq = random_seq(&mut rng, 3, 2);

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = vec![0.0f64; 3];
        for t in 0..3 {
            let x = seq.row(t);
            let mut z = vec![0.0; 3];
            let mut r = vec![0.0; 3];
            for k in 0..3 {
                let mut zv = model.update_b.get(0, k);
                let mut rv = model.reset_b.get(0, k);
                for (p, &xv) in x.iter().enumerate() {
                    zv += xv * model.update_x.get(p, k);
                    rv += xv * model.reset_x.get(p, k);
                }
                for (j, &hv) in h.iter().enumerate() {
                    zv += hv * model.update_h.get(j, k);
                    rv += hv * model.reset_h.get(j, k);
                }
                z[k] = sig(zv);
                r[k] = sig(rv);
            }
            let mut h_new = vec![0.0; 3];
            for k in 0..3 {
                let mut cv = model.cand_b.get(0, k);
                for (p, &xv) in x.iter().enumerate() {
                    cv += xv * model.cand_x.get(p, k);
                }
                for (j, &hv) in h.iter().enumerate() {
                    cv += r[j] * hv * model.cand_h.get(j, k);
                }
                h_new[k] = (1.0 - z[k]) * h[k] + z[k] * cv.tanh();
            }
            h = h_new;
        }

        let got = model.hidden_seq(&seq).unwrap();
        for (a, b) in got.row(2).iter().zip(&h) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn taped_forward_matches_fast_path() {
        let model = GruModel::new(3, 4, 2, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seq = random_seq(&mut rng, 5, 3);
        let xs: Vec<Matrix> = (0..5)
            .map(|t| Matrix::from_fn(1, 3, |_, j| seq.get(t, j)))
            .collect();
        let mut tape = Tape::new();
        let taped = model.leaves(&mut tape);
        let logits = model.logits_graph(&mut tape, &taped, &xs).unwrap();
        let fast = model.predict_seq(&seq).unwrap();
        for (t, &id) in logits.iter().enumerate() {
            for q in 0..2 {
                let a = sigmoid(tape.value(id).get(0, q));
                assert!((a - fast.get(t, q)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn state_stays_bounded_for_wild_inputs() {
        let mut model = GruModel::new(4, 6, 1, 77);
        // Inflate parameters well past initialization scale.
        let inflated: Vec<f64> = model.params().values().iter().map(|v| v * 40.0).collect();
        model.set_params(&inflated).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seq = Matrix::from_fn(30, 4, |_, _| rng.gen_range(-10.0..10.0));
        let hidden = model.hidden_seq(&seq).unwrap();
        for &v in hidden.data() {
            assert!((-1.0..=1.0).contains(&v), "state escaped bounds: {v}");
        }
    }

    #[test]
    fn regularized_subset_is_head_only() {
        let model = AnyModel::Gru(GruModel::new(14, 25, 1, 0));
        assert_eq!(model.regularized_params().len(), 26);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let model = AnyModel::Gru(GruModel::new(3, 4, 1, 13));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Matrix> = (0..4)
            .map(|_| Matrix::from_fn(2, 3, |_, _| rng.gen_range(-2.0..2.0)))
            .collect();
        let ys: Vec<Matrix> = (0..4)
            .map(|_| Matrix::from_fn(2, 1, |_, _| f64::from(rng.gen_range(0..2))))
            .collect();
        gradcheck_loss(&model, &Batch::Sequences { xs: &xs, ys: &ys }, 1e-4);
    }
}
