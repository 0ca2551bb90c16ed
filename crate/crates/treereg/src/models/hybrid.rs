//! GRU-HMM residual hybrid: one sigmoid over the sum of the HMM head's
//! logit and the GRU head's logit, with the two parameter sets kept fully
//! disjoint. Only the GRU output head joins the regularized subset, so the
//! ideal penalty is zero exactly when the HMM alone explains the data.

use crate::autodiff::{sigmoid, Matrix, NodeId, ParamVector, Tape};
use crate::error::Result;
use crate::models::{GruModel, HmmModel, TapedParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruHmmModel {
    pub hmm: HmmModel,
    pub gru: GruModel,
}

impl GruHmmModel {
    pub fn new(
        input_dim: usize,
        hmm_states: usize,
        gru_states: usize,
        output_dim: usize,
        seed: u64,
    ) -> Self {
        GruHmmModel {
            hmm: HmmModel::new_bernoulli(hmm_states, input_dim, output_dim, seed),
            gru: GruModel::new(input_dim, gru_states, output_dim, seed.wrapping_add(1)),
        }
    }

    pub fn params(&self) -> ParamVector {
        let hmm = self.hmm.params();
        let gru = self.gru.params();
        let hmm_parts = hmm.unflatten();
        let gru_parts = gru.unflatten();
        let mut named: Vec<(String, Matrix)> = Vec::new();
        for (n, m) in hmm_parts {
            named.push((format!("hmm_{n}"), m));
        }
        for (n, m) in gru_parts {
            named.push((format!("gru_{n}"), m));
        }
        let parts: Vec<(&str, &Matrix)> = named.iter().map(|(n, m)| (n.as_str(), m)).collect();
        ParamVector::from_named(&parts)
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        let hmm_len = self.hmm.params().len();
        let gru_len = self.gru.params().len();
        if values.len() != hmm_len + gru_len {
            return Err(crate::error::Error::LengthMismatch {
                context: "gru-hmm parameters",
                expected: hmm_len + gru_len,
                actual: values.len(),
            });
        }
        self.hmm.set_params(&values[..hmm_len])?;
        self.gru.set_params(&values[hmm_len..])?;
        Ok(())
    }

    pub fn leaves(&self, tape: &mut Tape) -> TapedParams {
        let mut hmm = self.hmm.leaves_prefixed(tape, "hmm_");
        let gru = self.gru.leaves_prefixed(tape, "gru_");
        hmm.ids.extend(gru.ids);
        hmm.names.extend(gru.names);
        hmm
    }

    /// Per-step combined logits for an aligned sequence batch.
    pub fn logits_graph(
        &self,
        tape: &mut Tape,
        taped: &TapedParams,
        xs: &[Matrix],
    ) -> Result<Vec<NodeId>> {
        let hmm_logits = self.hmm.logits_graph(tape, taped, xs, "hmm_")?;
        let gru_logits = self.gru.logits_graph_prefixed(tape, taped, "gru_", xs)?;
        hmm_logits
            .into_iter()
            .zip(gru_logits)
            .map(|(h, g)| tape.add(h, g))
            .collect()
    }

    /// Per-timestep output probabilities for one sequence (T x Q).
    pub fn predict_seq(&self, seq: &Matrix) -> Result<Matrix> {
        let beliefs = self.hmm.filter(seq)?;
        let hidden = self.gru.hidden_seq(seq)?;
        let q = self.gru.output_dim();
        let mut out = Matrix::zeros(seq.rows(), q);
        for t in 0..seq.rows() {
            let hz = self.hmm.logits_from_belief(beliefs.row(t));
            let gz = self.gru.logits_from_state(hidden.row(t));
            for i in 0..q {
                out.set(t, i, sigmoid(hz[i] + gz[i]));
            }
        }
        Ok(out)
    }

    /// Filtered HMM beliefs, the per-timestep state features used when
    /// distilling this model.
    pub fn beliefs(&self, seq: &Matrix) -> Result<Matrix> {
        self.hmm.filter(seq)
    }
}
