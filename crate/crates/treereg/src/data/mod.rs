//! Dataset containers, the synthetic benchmark generators, CSV ingestion,
//! and k-means region construction.

mod csv_load;
mod kmeans;
mod synthetic;

pub use csv_load::{load_csv, CsvSchema};
pub use kmeans::{kmeans, KMeansModel};
pub use synthetic::{
    gen_five_rectangles, gen_parabola, gen_signal_noise_hmm, SignalNoiseSpec, FIVE_RECT_DOMAIN,
};

use crate::autodiff::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularDataset {
    pub x: Matrix,
    /// N x Q entries in {0, 1}.
    pub y: Matrix,
    pub feature_names: Vec<String>,
    pub split: Vec<Split>,
    /// Region index per row, when a partition has been attached.
    pub region: Option<Vec<usize>>,
}

impl TabularDataset {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> (Matrix, Matrix) {
        let x = Matrix::from_fn(indices.len(), self.x.cols(), |i, j| {
            self.x.get(indices[i], j)
        });
        let y = Matrix::from_fn(indices.len(), self.y.cols(), |i, j| {
            self.y.get(indices[i], j)
        });
        (x, y)
    }
}

/// Latent state paths retained by the generators for test assertions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceLatents {
    pub signal_states: Vec<usize>,
    pub noise_states: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceExample {
    /// T x P features.
    pub x: Matrix,
    /// T x Q labels in {0, 1}.
    pub y: Matrix,
    pub split: Split,
    pub latents: Option<SequenceLatents>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceDataset {
    pub sequences: Vec<SequenceExample>,
    pub feature_names: Vec<String>,
}

impl SequenceDataset {
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.sequences.len())
            .filter(|&i| self.sequences[i].split == split)
            .collect()
    }
}

/// Round half to even, the rule used when a noise fraction lands exactly
/// between two counts.
pub fn round_half_even(v: f64) -> usize {
    let floor = v.floor();
    let frac = v - floor;
    let f = floor as usize;
    if (frac - 0.5).abs() < 1e-12 {
        if f % 2 == 0 {
            f
        } else {
            f + 1
        }
    } else {
        v.round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_half_even_cases() {
        assert_eq!(round_half_even(12.5), 12);
        assert_eq!(round_half_even(13.5), 14);
        assert_eq!(round_half_even(12.4), 12);
        assert_eq!(round_half_even(12.6), 13);
    }
}
