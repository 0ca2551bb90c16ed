//! Loading datasets, attaching region partitions, and flattening model
//! behavior into the per-row form the tree machinery consumes.

use crate::autodiff::Matrix;
use crate::data::{
    gen_five_rectangles, gen_parabola, gen_signal_noise_hmm, kmeans, load_csv, SequenceDataset,
    Split, TabularDataset,
};
use crate::error::{Error, Result};
use crate::harness::config::{DatasetSpec, RegionSpec};
use crate::models::{AnyModel, DistillFeatures};
use crate::regularize::RegionPartition;

pub enum LoadedData {
    Tabular(TabularDataset),
    Sequences(SequenceDataset),
}

impl LoadedData {
    pub fn is_sequential(&self) -> bool {
        matches!(self, LoadedData::Sequences(_))
    }

    pub fn input_dim(&self) -> usize {
        match self {
            LoadedData::Tabular(d) => d.x.cols(),
            LoadedData::Sequences(d) => d.sequences[0].x.cols(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            LoadedData::Tabular(d) => d.y.cols(),
            LoadedData::Sequences(d) => d.sequences[0].y.cols(),
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            LoadedData::Tabular(d) => &d.feature_names,
            LoadedData::Sequences(d) => &d.feature_names,
        }
    }
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<LoadedData> {
    Ok(match spec {
        DatasetSpec::Parabola { seed, noise_band } => {
            LoadedData::Tabular(gen_parabola(*seed, *noise_band))
        }
        DatasetSpec::FiveRectangles { seed, grid } => {
            LoadedData::Tabular(gen_five_rectangles(*seed, *grid))
        }
        DatasetSpec::SignalNoise { seed } => LoadedData::Sequences(gen_signal_noise_hmm(*seed)),
        DatasetSpec::Csv { path, schema } => LoadedData::Tabular(load_csv(path, schema)?),
    })
}

/// Raw input rows of one split, before any model-dependent features.
fn raw_rows(data: &LoadedData, split: Split) -> Matrix {
    match data {
        LoadedData::Tabular(d) => {
            let idx = d.indices_of(split);
            Matrix::from_fn(idx.len(), d.x.cols(), |i, j| d.x.get(idx[i], j))
        }
        LoadedData::Sequences(d) => {
            let idx = d.indices_of(split);
            let p = d.sequences[0].x.cols();
            let total: usize = idx.iter().map(|&i| d.sequences[i].x.rows()).sum();
            let mut out = Matrix::zeros(total, p);
            let mut row = 0;
            for &i in &idx {
                let seq = &d.sequences[i];
                for t in 0..seq.x.rows() {
                    out.row_mut(row).copy_from_slice(seq.x.row(t));
                    row += 1;
                }
            }
            out
        }
    }
}

/// Build the region partition named by the config. K-means fits on the raw
/// training rows; assignments everywhere else use the stored centroids.
pub fn build_partition(spec: &RegionSpec, data: &LoadedData) -> Result<Option<RegionPartition>> {
    let partition = match spec {
        RegionSpec::None => None,
        RegionSpec::KMeans { k, seed } => {
            let train = raw_rows(data, Split::Train);
            Some(RegionPartition::from_kmeans(kmeans(&train, *k, *seed)?))
        }
        RegionSpec::FeatureIntervals { feature, edges } => {
            let names = (0..=edges.len()).map(|i| format!("region-{i}")).collect();
            Some(RegionPartition::feature_intervals(
                *feature,
                edges.clone(),
                names,
            ))
        }
        RegionSpec::File { path } => Some(RegionPartition::load(path)?),
    };
    if let Some(p) = &partition {
        let train = raw_rows(data, Split::Train);
        let assign = p.assign_all(&train);
        for r in 0..p.r() {
            if !assign.iter().any(|&a| a == r) {
                return Err(Error::Config(format!(
                    "region {r} ('{}') is empty on the training split",
                    p.names[r]
                )));
            }
        }
    }
    Ok(partition)
}

/// Everything the tree machinery needs about one model on one split:
/// per-row feature vectors (inputs, optionally concatenated with model
/// state), prediction scores and thresholded labels per output, ground
/// truth, and region assignments over the raw inputs.
pub struct ModelRows {
    pub features: Matrix,
    pub feature_names: Vec<String>,
    /// scores[q][i]: probability of output q at row i.
    pub scores: Vec<Vec<f64>>,
    /// labels[q][i]: thresholded model prediction.
    pub labels: Vec<Vec<bool>>,
    /// targets[q][i]: dataset label.
    pub targets: Vec<Vec<bool>>,
    /// Model state per row (GRU hidden units or HMM beliefs), present for
    /// sequence models. These are the distillation state features.
    pub states: Option<Matrix>,
    /// Inputs of the regularized head when they differ from `states`:
    /// the GRU-HMM distills over beliefs but its head reads GRU state.
    pub gru_head_states: Option<Matrix>,
    /// Per-row logits contributed by parameters outside the regularized
    /// head (the HMM half of a GRU-HMM).
    pub fixed_logits: Option<Matrix>,
    pub regions: Vec<usize>,
    pub n_regions: usize,
}

impl ModelRows {
    /// State rows feeding the regularized head, for head-only oracles.
    pub fn head_state_matrix(&self) -> Option<&Matrix> {
        self.gru_head_states.as_ref().or(self.states.as_ref())
    }
}

pub fn model_rows(
    model: &AnyModel,
    data: &LoadedData,
    split: Split,
    feats: DistillFeatures,
    partition: Option<&RegionPartition>,
) -> Result<ModelRows> {
    let q = model.output_dim();
    let raw = raw_rows(data, split);
    let n_rows = raw.rows();
    let mut scores = vec![vec![0.0; n_rows]; q];
    let mut targets = vec![vec![false; n_rows]; q];
    let mut states: Option<Matrix> = None;
    let mut gru_head_states: Option<Matrix> = None;
    let mut fixed_logits: Option<Matrix> = None;
    let mut state_names: Vec<String> = Vec::new();

    match (model, data) {
        (AnyModel::Mlp(m), LoadedData::Tabular(d)) => {
            let idx = d.indices_of(split);
            let probs = m.predict_batch(&raw)?;
            for qi in 0..q {
                for i in 0..n_rows {
                    scores[qi][i] = probs.get(i, qi);
                    targets[qi][i] = d.y.get(idx[i], qi) > 0.5;
                }
            }
        }
        (_, LoadedData::Sequences(d)) => {
            let idx = d.indices_of(split);
            let mut row = 0usize;
            let state_dim = match model {
                AnyModel::Gru(g) => g.state_dim,
                AnyModel::Hmm(h) => h.n_states,
                AnyModel::GruHmm(gh) => gh.hmm.n_states,
                AnyModel::Mlp(_) => 0,
            };
            let mut state_mat = Matrix::zeros(n_rows, state_dim);
            let mut head_mat = match model {
                AnyModel::GruHmm(gh) => Some(Matrix::zeros(n_rows, gh.gru.state_dim)),
                _ => None,
            };
            let mut fixed = match model {
                AnyModel::GruHmm(_) => Some(Matrix::zeros(n_rows, q)),
                _ => None,
            };
            for &si in &idx {
                let seq = &d.sequences[si];
                let t_len = seq.x.rows();
                match model {
                    AnyModel::Gru(g) => {
                        let hidden = g.hidden_seq(&seq.x)?;
                        for t in 0..t_len {
                            let logits = g.logits_from_state(hidden.row(t));
                            for (qi, &z) in logits.iter().enumerate() {
                                scores[qi][row + t] = crate::autodiff::sigmoid(z);
                            }
                            state_mat.row_mut(row + t).copy_from_slice(hidden.row(t));
                        }
                    }
                    AnyModel::Hmm(h) => {
                        let beliefs = h.filter(&seq.x)?;
                        for t in 0..t_len {
                            let logits = h.logits_from_belief(beliefs.row(t));
                            for (qi, &z) in logits.iter().enumerate() {
                                scores[qi][row + t] = crate::autodiff::sigmoid(z);
                            }
                            state_mat.row_mut(row + t).copy_from_slice(beliefs.row(t));
                        }
                    }
                    AnyModel::GruHmm(gh) => {
                        let beliefs = gh.hmm.filter(&seq.x)?;
                        let hidden = gh.gru.hidden_seq(&seq.x)?;
                        let fixed = fixed.as_mut().expect("allocated above");
                        let head = head_mat.as_mut().expect("allocated above");
                        for t in 0..t_len {
                            let hz = gh.hmm.logits_from_belief(beliefs.row(t));
                            let gz = gh.gru.logits_from_state(hidden.row(t));
                            for qi in 0..q {
                                scores[qi][row + t] =
                                    crate::autodiff::sigmoid(hz[qi] + gz[qi]);
                                fixed.set(row + t, qi, hz[qi]);
                            }
                            // Distillation state features are the beliefs;
                            // the regularized head reads the GRU state.
                            state_mat.row_mut(row + t).copy_from_slice(beliefs.row(t));
                            head.row_mut(row + t).copy_from_slice(hidden.row(t));
                        }
                    }
                    AnyModel::Mlp(_) => {
                        return Err(Error::Config(
                            "an MLP cannot run on sequence data".to_string(),
                        ))
                    }
                }
                for t in 0..t_len {
                    for qi in 0..q {
                        targets[qi][row + t] = seq.y.get(t, qi) > 0.5;
                    }
                }
                row += t_len;
            }
            state_names = match model {
                AnyModel::Gru(_) => (0..state_dim).map(|k| format!("h[{k}]")).collect(),
                _ => (0..state_dim).map(|k| format!("s[{k}]")).collect(),
            };
            states = Some(state_mat);
            gru_head_states = head_mat;
            fixed_logits = fixed;
        }
        _ => {
            return Err(Error::Config(
                "sequence models need sequence data".to_string(),
            ))
        }
    }

    let labels: Vec<Vec<bool>> = scores
        .iter()
        .map(|col| col.iter().map(|&p| p > 0.5).collect())
        .collect();

    let mut feature_names = data.feature_names().to_vec();
    let features = match (feats, &states) {
        (DistillFeatures::InputsAndState, Some(state_mat)) => {
            feature_names.extend(state_names);
            let mut out = Matrix::zeros(n_rows, raw.cols() + state_mat.cols());
            for i in 0..n_rows {
                let row = out.row_mut(i);
                row[..raw.cols()].copy_from_slice(raw.row(i));
                row[raw.cols()..].copy_from_slice(state_mat.row(i));
            }
            out
        }
        _ => raw.clone(),
    };

    let (regions, n_regions) = match partition {
        Some(p) => (p.assign_all(&raw), p.r()),
        None => (vec![0usize; n_rows], 1),
    };

    Ok(ModelRows {
        features,
        feature_names,
        scores,
        labels,
        targets,
        states,
        gru_head_states,
        fixed_logits,
        regions,
        n_regions,
    })
}

/// Thresholded predictions for a candidate value of the regularized subset,
/// without touching the live model.
pub enum SubsetOracle<'a> {
    /// Sequence families: the head is linear in a fixed per-row state.
    HeadOnly {
        states: &'a Matrix,
        fixed_logits: Option<&'a Matrix>,
        state_dim: usize,
        q: usize,
    },
    /// The MLP regularizes every parameter: rebuild and repredict.
    FullMlp {
        template: crate::models::MlpModel,
        x: &'a Matrix,
    },
}

impl SubsetOracle<'_> {
    pub fn labels_for(&self, theta: &[f64]) -> Result<Vec<Vec<bool>>> {
        match self {
            SubsetOracle::HeadOnly {
                states,
                fixed_logits,
                state_dim,
                q,
            } => {
                let (k, q) = (*state_dim, *q);
                if theta.len() != k * q + q {
                    return Err(Error::LengthMismatch {
                        context: "head subset oracle",
                        expected: k * q + q,
                        actual: theta.len(),
                    });
                }
                let (w, b) = theta.split_at(k * q);
                let mut labels = vec![vec![false; states.rows()]; q];
                for i in 0..states.rows() {
                    let s = states.row(i);
                    for qi in 0..q {
                        let mut z = b[qi];
                        for (ki, &sv) in s.iter().enumerate() {
                            z += sv * w[ki * q + qi];
                        }
                        if let Some(f) = fixed_logits {
                            z += f.get(i, qi);
                        }
                        labels[qi][i] = z > 0.0;
                    }
                }
                Ok(labels)
            }
            SubsetOracle::FullMlp { template, x } => {
                let mut m = template.clone();
                m.set_params(theta)?;
                let probs = m.predict_batch(x)?;
                let q = probs.cols();
                let mut labels = vec![vec![false; x.rows()]; q];
                for (qi, col) in labels.iter_mut().enumerate() {
                    for (i, li) in col.iter_mut().enumerate() {
                        *li = probs.get(i, qi) > 0.5;
                    }
                }
                Ok(labels)
            }
        }
    }
}
