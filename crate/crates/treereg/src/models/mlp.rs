//! Feed-forward network with sigmoid outputs, one per binary target.

use crate::autodiff::{glorot_uniform, sigmoid, Matrix, NodeId, ParamVector, Tape, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::models::{HiddenActivation, TapedParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    weights: Vec<Matrix>,
    biases: Vec<Matrix>,
}

impl MlpModel {
    /// `layer_sizes` runs input -> hidden... -> output, e.g. `[2, 100, 100, 10, 1]`.
    pub fn new(layer_sizes: &[usize], hidden_activation: HiddenActivation, seed: u64) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output sizes");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            weights.push(glorot_uniform(w[0], w[1], &mut rng));
            biases.push(Matrix::zeros(1, w[1]));
        }
        MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            hidden_activation,
            weights,
            biases,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("w{i}"), w));
            out.push((format!("b{i}"), b));
        }
        out
    }

    pub fn params(&self) -> ParamVector {
        let named = self.named();
        let parts: Vec<(&str, &Matrix)> = named.iter().map(|(n, m)| (n.as_str(), *m)).collect();
        ParamVector::from_named(&parts)
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        let mut pv = self.params();
        pv.set_values(values)?;
        for (name, m) in pv.unflatten() {
            let idx: usize = name[1..].parse().expect("layer index");
            if name.starts_with('w') {
                self.weights[idx] = m;
            } else {
                self.biases[idx] = m;
            }
        }
        Ok(())
    }

    pub fn leaves(&self, tape: &mut Tape) -> TapedParams {
        let mut ids = Vec::new();
        let mut names = Vec::new();
        for (name, m) in self.named() {
            ids.push(tape.leaf(m.clone()));
            names.push(name);
        }
        TapedParams { ids, names }
    }

    /// Pre-sigmoid output logits for a batch (N x Q).
    pub fn logits_graph(&self, tape: &mut Tape, taped: &TapedParams, x: &Matrix) -> Result<NodeId> {
        if x.cols() != self.input_dim() {
            return Err(Error::LengthMismatch {
                context: "mlp input dimension",
                expected: self.input_dim(),
                actual: x.cols(),
            });
        }
        let mut h = tape.leaf(x.clone());
        let n_layers = self.weights.len();
        for l in 0..n_layers {
            let z = tape.matmul(h, taped.id(&format!("w{l}")))?;
            let z = tape.add_row_bcast(z, taped.id(&format!("b{l}")))?;
            h = if l + 1 < n_layers {
                match self.hidden_activation {
                    HiddenActivation::LeakyRelu => tape.leaky_relu(z),
                    HiddenActivation::Tanh => tape.tanh(z),
                }
            } else {
                z
            };
        }
        Ok(h)
    }

    /// Probabilities for one input row.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                context: "mlp input dimension",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut h = x.to_vec();
        let n_layers = self.weights.len();
        for l in 0..n_layers {
            let w = &self.weights[l];
            let b = &self.biases[l];
            let mut z = b.row(0).to_vec();
            for (i, &hv) in h.iter().enumerate() {
                if hv == 0.0 {
                    continue;
                }
                for (zj, &wij) in z.iter_mut().zip(w.row(i)) {
                    *zj += hv * wij;
                }
            }
            h = if l + 1 < n_layers {
                match self.hidden_activation {
                    HiddenActivation::LeakyRelu => z
                        .into_iter()
                        .map(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
                        .collect(),
                    HiddenActivation::Tanh => z.into_iter().map(f64::tanh).collect(),
                }
            } else {
                z.into_iter().map(sigmoid).collect()
            };
        }
        Ok(h)
    }

    /// Probabilities for every row of `x` (N x Q).
    pub fn predict_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut rows = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            rows.push(self.predict(x.row(i))?);
        }
        Matrix::from_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{model_loss, testutil::gradcheck_loss, AnyModel, Batch};
    use rand::Rng;

    #[test]
    fn zero_model_outputs_half() {
        let mut model = MlpModel::new(&[3, 4, 2], HiddenActivation::Tanh, 0);
        let zeros = vec![0.0; model.params().len()];
        model.set_params(&zeros).unwrap();
        let out = model.predict(&[0.3, -0.7, 2.0]).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
    }

    #[test]
    fn single_layer_saturates_to_one() {
        let mut model = MlpModel::new(&[2, 1], HiddenActivation::Tanh, 0);
        model.set_params(&[1.0, 0.0, 0.0]).unwrap(); // w = [1, 0]^T, b = 0
        let out = model.predict(&[60.0, 0.0]).unwrap();
        assert!(out[0] > 1.0 - 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let model = MlpModel::new(&[3, 2], HiddenActivation::Tanh, 0);
        assert!(model.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn taped_forward_matches_independent_predict() {
        // The taped graph and the plain-loop path are written separately;
        // they must agree to 1e-10 on random models and inputs.
        let model = MlpModel::new(&[4, 7, 3, 2], HiddenActivation::LeakyRelu, 42);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Matrix::from_fn(6, 4, |_, _| rng.gen_range(-2.0..2.0));
        let mut tape = Tape::new();
        let taped = model.leaves(&mut tape);
        let logits = model.logits_graph(&mut tape, &taped, &x).unwrap();
        let probs = tape.value(logits).map(sigmoid);
        let independent = model.predict_batch(&x).unwrap();
        for (a, b) in probs.data().iter().zip(independent.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn regularized_subset_counts_all_weights_and_biases() {
        // 2x10 weights + 10 biases + 10x1 weights + 1 bias.
        let model = AnyModel::Mlp(MlpModel::new(&[2, 10, 1], HiddenActivation::Tanh, 0));
        assert_eq!(model.regularized_params().len(), 2 * 10 + 10 + 10 + 1);
    }

    #[test]
    fn loss_examples() {
        // lambda = 0, predictions all 0.5 -> loss = ln 2.
        let mut model = MlpModel::new(&[2, 1], HiddenActivation::Tanh, 0);
        model.set_params(&[0.0, 0.0, 0.0]).unwrap();
        let model = AnyModel::Mlp(model);
        let x = Matrix::from_fn(8, 2, |i, j| (i + j) as f64 * 0.1);
        let y = Matrix::from_fn(8, 1, |i, _| (i % 2) as f64);
        let batch = Batch::Tabular { x: &x, y: &y };
        let mut tape = Tape::new();
        let graph = model_loss(&mut tape, &model, &batch, 0.0, |_, _| Ok(None)).unwrap();
        assert!((tape.scalar(graph.loss) - std::f64::consts::LN_2).abs() < 1e-12);

        // Adding lambda * c for a constant penalty shifts the loss by exactly c.
        let mut tape2 = Tape::new();
        let graph2 = model_loss(&mut tape2, &model, &batch, 1.0, |t, _| {
            Ok(Some(t.leaf(Matrix::from_vec(1, 1, vec![0.37]).unwrap())))
        })
        .unwrap();
        let base = tape.scalar(graph.loss);
        assert!((tape2.scalar(graph2.loss) - (base + 0.37)).abs() < 1e-12);
    }

    #[test]
    fn near_perfect_predictions_have_tiny_loss() {
        // Saturated logits behave like clipped probabilities: the loss is
        // on the scale of the residual probability mass.
        let mut model = MlpModel::new(&[1, 1], HiddenActivation::Tanh, 0);
        model.set_params(&[20.0, 0.0]).unwrap();
        let x = Matrix::from_fn(4, 1, |_, _| 1.0);
        let y = Matrix::from_fn(4, 1, |_, _| 1.0);
        let mut tape = Tape::new();
        let graph = model_loss(
            &mut tape,
            &AnyModel::Mlp(model),
            &Batch::Tabular { x: &x, y: &y },
            0.0,
            |_, _| Ok(None),
        )
        .unwrap();
        assert!(tape.scalar(graph.loss) < 1e-7);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let model = AnyModel::Mlp(MlpModel::new(&[3, 5, 2], HiddenActivation::LeakyRelu, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Matrix::from_fn(5, 3, |_, _| rng.gen_range(-2.0..2.0));
        let y = Matrix::from_fn(5, 2, |_, _| f64::from(rng.gen_range(0..2)));
        gradcheck_loss(&model, &Batch::Tabular { x: &x, y: &y }, 1e-4);
    }
}
