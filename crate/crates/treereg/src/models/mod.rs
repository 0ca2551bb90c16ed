//! The four target model families: MLP, GRU, SGD-trained HMM, and the
//! GRU-HMM residual hybrid.
//!
//! Every family exposes the same three surfaces the trainer needs:
//! a fast tape-free prediction path, a taped loss graph, and the subset of
//! parameters the tree regularizer sees (everything for MLPs, the output
//! head only for the sequence models).

mod gru;
mod hmm;
mod hybrid;
mod mlp;

pub use gru::GruModel;
pub use hmm::{Emission, HmmModel};
pub use hybrid::GruHmmModel;
pub use mlp::MlpModel;

use crate::autodiff::{Matrix, NodeId, ParamVector, Tape};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HiddenActivation {
    LeakyRelu,
    Tanh,
}

/// Which feature rows a distillation tree sees for a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistillFeatures {
    InputsOnly,
    /// Inputs concatenated with the model's internal state per timestep:
    /// hidden units for the GRU, belief vectors for the HMM and GRU-HMM.
    InputsAndState,
}

/// Parameter leaves pushed onto a tape in a model's canonical order.
pub struct TapedParams {
    pub ids: Vec<NodeId>,
    pub names: Vec<String>,
}

impl TapedParams {
    pub fn id(&self, name: &str) -> NodeId {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no taped parameter named {name}"));
        self.ids[i]
    }

    /// Gradients flattened in canonical order, matching `ParamVector` layout.
    pub fn collect_grads(&self, tape: &Tape) -> Vec<f64> {
        let mut out = Vec::new();
        for &id in &self.ids {
            out.extend_from_slice(tape.grad(id).data());
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum AnyModel {
    Mlp(MlpModel),
    Gru(GruModel),
    Hmm(HmmModel),
    GruHmm(GruHmmModel),
}

impl AnyModel {
    pub fn family(&self) -> &'static str {
        match self {
            AnyModel::Mlp(_) => "mlp",
            AnyModel::Gru(_) => "gru",
            AnyModel::Hmm(_) => "hmm",
            AnyModel::GruHmm(_) => "gru-hmm",
        }
    }

    pub fn params(&self) -> ParamVector {
        match self {
            AnyModel::Mlp(m) => m.params(),
            AnyModel::Gru(m) => m.params(),
            AnyModel::Hmm(m) => m.params(),
            AnyModel::GruHmm(m) => m.params(),
        }
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        match self {
            AnyModel::Mlp(m) => m.set_params(values),
            AnyModel::Gru(m) => m.set_params(values),
            AnyModel::Hmm(m) => m.set_params(values),
            AnyModel::GruHmm(m) => m.set_params(values),
        }
    }

    /// The parameter subset the tree regularizer (and its surrogate) sees.
    pub fn regularized_params(&self) -> ParamVector {
        match self {
            AnyModel::Mlp(m) => m.params(),
            AnyModel::Gru(m) => m.head_params(),
            AnyModel::Hmm(m) => m.head_params(),
            AnyModel::GruHmm(m) => m.gru.head_params(),
        }
    }

    pub fn leaves(&self, tape: &mut Tape) -> TapedParams {
        match self {
            AnyModel::Mlp(m) => m.leaves(tape),
            AnyModel::Gru(m) => m.leaves(tape),
            AnyModel::Hmm(m) => m.leaves(tape),
            AnyModel::GruHmm(m) => m.leaves(tape),
        }
    }

    /// Column-vector node holding the regularized subset, assembled from the
    /// taped leaves so gradients flow back into the model parameters.
    pub fn subset_node(&self, tape: &mut Tape, taped: &TapedParams) -> Result<NodeId> {
        let names: Vec<String> = match self {
            AnyModel::Mlp(_) => taped.names.clone(),
            AnyModel::Gru(_) => vec!["head_w".into(), "head_b".into()],
            AnyModel::Hmm(_) => vec!["head_w".into(), "head_b".into()],
            AnyModel::GruHmm(_) => vec!["gru_head_w".into(), "gru_head_b".into()],
        };
        let mut parts = Vec::with_capacity(names.len());
        for name in &names {
            let id = taped.id(name);
            let len = tape.value(id).len();
            parts.push(tape.reshape(id, len, 1)?);
        }
        tape.concat_rows(&parts)
    }

    pub fn output_dim(&self) -> usize {
        match self {
            AnyModel::Mlp(m) => m.output_dim(),
            AnyModel::Gru(m) => m.output_dim(),
            AnyModel::Hmm(m) => m.output_dim(),
            AnyModel::GruHmm(m) => m.gru.output_dim(),
        }
    }

    pub fn is_sequential(&self) -> bool {
        !matches!(self, AnyModel::Mlp(_))
    }
}

/// One minibatch, already shaped for graph building. Sequence batches hold
/// aligned steps: `xs[t]` stacks the t-th feature vector of every sequence
/// in the batch (all sequences in a batch share a length).
pub enum Batch<'a> {
    Tabular { x: &'a Matrix, y: &'a Matrix },
    Sequences { xs: &'a [Matrix], ys: &'a [Matrix] },
}

pub struct LossGraph {
    pub loss: NodeId,
    pub data_loss: NodeId,
    pub penalty: Option<NodeId>,
    pub taped: TapedParams,
    pub subset: NodeId,
}

/// Mean binary cross-entropy over every example, timestep, and output
/// dimension, plus `lambda` times whatever penalty the callback builds from
/// the regularized-subset node.
pub fn model_loss(
    tape: &mut Tape,
    model: &AnyModel,
    batch: &Batch,
    lambda: f64,
    penalty: impl FnOnce(&mut Tape, NodeId) -> Result<Option<NodeId>>,
) -> Result<LossGraph> {
    if lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let taped = model.leaves(tape);
    let (logits, targets) = match (model, batch) {
        (AnyModel::Mlp(m), Batch::Tabular { x, y }) => {
            (m.logits_graph(tape, &taped, x)?, (*y).clone())
        }
        (AnyModel::Gru(m), Batch::Sequences { xs, ys }) => {
            let per_step = m.logits_graph(tape, &taped, xs)?;
            (stack_steps(tape, &per_step)?, stack_targets(ys)?)
        }
        (AnyModel::Hmm(m), Batch::Sequences { xs, ys }) => {
            let per_step = m.logits_graph(tape, &taped, xs, "")?;
            (stack_steps(tape, &per_step)?, stack_targets(ys)?)
        }
        (AnyModel::GruHmm(m), Batch::Sequences { xs, ys }) => {
            let per_step = m.logits_graph(tape, &taped, xs)?;
            (stack_steps(tape, &per_step)?, stack_targets(ys)?)
        }
        _ => {
            return Err(Error::Config(
                "batch kind does not match model family".to_string(),
            ))
        }
    };
    let elementwise = tape.bce_with_logits(logits, targets)?;
    let data_loss = tape.mean_all(elementwise);
    let subset = model.subset_node(tape, &taped)?;
    let penalty = penalty(tape, subset)?;
    let loss = match penalty {
        Some(p) if lambda != 0.0 => {
            let scaled = tape.scale(p, lambda);
            tape.add(data_loss, scaled)?
        }
        _ => data_loss,
    };
    Ok(LossGraph {
        loss,
        data_loss,
        penalty,
        taped,
        subset,
    })
}

fn stack_steps(tape: &mut Tape, per_step: &[NodeId]) -> Result<NodeId> {
    tape.concat_rows(per_step)
}

fn stack_targets(ys: &[Matrix]) -> Result<Matrix> {
    if ys.is_empty() {
        return Err(Error::EmptyInput("sequence batch targets"));
    }
    let cols = ys[0].cols();
    let mut data = Vec::new();
    let mut rows = 0;
    for y in ys {
        rows += y.rows();
        data.extend_from_slice(y.data());
    }
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::autodiff::Tape;

    /// Central finite differences of the data loss with respect to every
    /// model parameter, compared against the taped backward pass.
    pub fn gradcheck_loss(model: &AnyModel, batch: &Batch, tol_rel: f64) {
        let mut tape = Tape::new();
        let graph = model_loss(&mut tape, model, batch, 0.0, |_, _| Ok(None)).unwrap();
        tape.backward(graph.loss).unwrap();
        let analytic = graph.taped.collect_grads(&tape);

        let base = model.params();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut plus = model.clone();
            let mut values = base.values().to_vec();
            values[i] += h;
            plus.set_params(&values).unwrap();
            let mut tape_p = Tape::new();
            let gp = model_loss(&mut tape_p, &plus, batch, 0.0, |_, _| Ok(None)).unwrap();
            let fp = tape_p.scalar(gp.loss);

            let mut minus = model.clone();
            values[i] = base.values()[i] - h;
            minus.set_params(&values).unwrap();
            let mut tape_m = Tape::new();
            let gm = model_loss(&mut tape_m, &minus, batch, 0.0, |_, _| Ok(None)).unwrap();
            let fm = tape_m.scalar(gm.loss);

            let numeric = (fp - fm) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            assert!(
                (analytic[i] - numeric).abs() / denom < tol_rel,
                "param {i}: analytic {} vs numeric {}",
                analytic[i],
                numeric
            );
        }
    }
}
