//! Evaluation metrics shared by the run harness.

use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub auc: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub apl_eval: f64,
    pub fidelity: f64,
    /// AUC per output dimension; `auc` above is their mean.
    pub per_output_auc: Vec<f64>,
}

/// Area under the ROC curve via the Mann-Whitney rank statistic:
/// `P(score+ > score-) + 0.5 * P(tie)`, ties handled by midrank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Midranks over the sorted scores.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    let n_neg_f = n_neg as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg_f))
}

pub fn accuracy(preds: &[bool], labels: &[bool]) -> f64 {
    assert_eq!(preds.len(), labels.len());
    assert!(!preds.is_empty());
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    correct as f64 / preds.len() as f64
}

/// Harmonic mean of precision and recall; 0 when there are no true
/// positives.
pub fn f1(preds: &[bool], labels: &[bool]) -> f64 {
    assert_eq!(preds.len(), labels.len());
    let tp = preds.iter().zip(labels).filter(|(&p, &l)| p && l).count() as f64;
    let fp = preds.iter().zip(labels).filter(|(&p, &l)| p && !l).count() as f64;
    let fn_ = preds.iter().zip(labels).filter(|(&p, &l)| !p && l).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    2.0 * tp / (2.0 * tp + fp + fn_)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilityReport {
    /// Size of the largest group of structurally identical trees.
    pub modal_count: usize,
    /// Number of distinct structures observed.
    pub distinct_shapes: usize,
}

/// Group trees by structural equality (same topology and split features,
/// thresholds within 1e-6) and report the modal group size.
pub fn tree_stability(trees: &[DecisionTree]) -> StabilityReport {
    assert!(trees.len() >= 2, "stability needs at least two trees");
    const TOL: f64 = 1e-6;
    let mut groups: Vec<(usize, usize)> = Vec::new(); // (representative index, count)
    for (i, tree) in trees.iter().enumerate() {
        match groups
            .iter_mut()
            .find(|(rep, _)| trees[*rep].structurally_equal(tree, TOL))
        {
            Some((_, count)) => *count += 1,
            None => groups.push((i, 1)),
        }
    }
    StabilityReport {
        modal_count: groups.iter().map(|&(_, c)| c).max().unwrap_or(0),
        distinct_shapes: groups.len(),
    }
}
