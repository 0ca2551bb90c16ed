//! Deterministic CART training, reduced-error pruning, and path-length
//! accounting.
//!
//! Trees here are the non-differentiable ground truth that the surrogate
//! regularizer learns to mimic, so training must be a pure function of its
//! inputs: splits maximize Gini impurity decrease over an exhaustive scan of
//! every feature, candidate thresholds are midpoints of consecutive distinct
//! sorted values, and ties break toward the lowest feature index, then the
//! lowest threshold. No feature subsampling anywhere.

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// (negative, positive) training counts.
        counts: (usize, usize),
        /// positive / total over the training examples at this leaf.
        probability: f64,
    },
}

impl TreeNode {
    fn leaf(neg: usize, pos: usize) -> TreeNode {
        let total = neg + pos;
        TreeNode::Leaf {
            counts: (neg, pos),
            probability: if total == 0 {
                0.0
            } else {
                pos as f64 / total as f64
            },
        }
    }

    fn counts(&self) -> (usize, usize) {
        match self {
            TreeNode::Leaf { counts, .. } => *counts,
            TreeNode::Internal { left, right, .. } => {
                let (ln, lp) = left.counts();
                let (rn, rp) = right.counts();
                (ln + rn, lp + rp)
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn count_internal(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => {
                1 + left.count_internal() + right.count_internal()
            }
        }
    }

    fn count_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.count_leaves() + right.count_leaves(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    /// Minimum training samples required at a leaf.
    pub min_leaf: usize,
    /// Recorded for provenance only; training itself is fully deterministic.
    pub seed: u64,
    pub n_features: usize,
}

impl DecisionTree {
    /// Probability of the positive class at the leaf `x` routes to.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { probability, .. } => return *probability,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Thresholded prediction: positive iff the leaf probability is >= 0.5.
    pub fn predict(&self, x: &[f64]) -> bool {
        self.predict_proba(x) >= 0.5
    }

    /// Number of internal decision nodes on the path `x` takes (leaf excluded).
    pub fn path_length(&self, x: &[f64]) -> usize {
        let mut node = &self.root;
        let mut n = 0;
        loop {
            match node {
                TreeNode::Leaf { .. } => return n,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    n += 1;
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn n_internal(&self) -> usize {
        self.root.count_internal()
    }

    pub fn n_leaves(&self) -> usize {
        self.root.count_leaves()
    }

    /// Same topology and split features, thresholds within `tol`.
    pub fn structurally_equal(&self, other: &DecisionTree, tol: f64) -> bool {
        fn eq(a: &TreeNode, b: &TreeNode, tol: f64) -> bool {
            match (a, b) {
                (TreeNode::Leaf { .. }, TreeNode::Leaf { .. }) => true,
                (
                    TreeNode::Internal {
                        feature: fa,
                        threshold: ta,
                        left: la,
                        right: ra,
                    },
                    TreeNode::Internal {
                        feature: fb,
                        threshold: tb,
                        left: lb,
                        right: rb,
                    },
                ) => fa == fb && (ta - tb).abs() <= tol && eq(la, lb, tol) && eq(ra, rb, tol),
                _ => false,
            }
        }
        eq(&self.root, &other.root, tol)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<DecisionTree> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }
}

/// Gini impurity of a (negative, positive) count pair: 1 - sum of squared
/// class proportions. Computed from integer counts so identical inputs give
/// bitwise-identical results.
fn gini(neg: usize, pos: usize) -> f64 {
    let n = (neg + pos) as f64;
    if n == 0.0 {
        return 0.0;
    }
    1.0 - ((neg * neg + pos * pos) as f64) / (n * n)
}

/// Gini impurity decrease of a split: parent Gini minus the child Ginis
/// weighted by child fraction.
pub fn gini_gain(parent: &[bool], left: &[bool], right: &[bool]) -> Result<f64> {
    if parent.is_empty() {
        return Err(Error::EmptyInput("gini_gain parent"));
    }
    let count = |s: &[bool]| {
        let pos = s.iter().filter(|&&b| b).count();
        (s.len() - pos, pos)
    };
    let (pn, pp) = count(parent);
    let (ln, lp) = count(left);
    let (rn, rp) = count(right);
    let n = parent.len() as f64;
    Ok(gini(pn, pp)
        - (left.len() as f64 / n) * gini(ln, lp)
        - (right.len() as f64 / n) * gini(rn, rp))
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [bool],
    min_leaf: usize,
}

impl Builder<'_> {
    fn build(&self, indices: &mut [u32]) -> TreeNode {
        let pos = indices.iter().filter(|&&i| self.y[i as usize]).count();
        let neg = indices.len() - pos;
        if pos == 0 || neg == 0 || indices.len() < 2 * self.min_leaf {
            return TreeNode::leaf(neg, pos);
        }
        match self.best_split(indices, neg, pos) {
            None => TreeNode::leaf(neg, pos),
            Some((feature, threshold)) => {
                let split_at = partition(indices, |i| {
                    self.x.get(i as usize, feature) <= threshold
                });
                let (left_idx, right_idx) = indices.split_at_mut(split_at);
                let left = self.build(left_idx);
                let right = self.build(right_idx);
                TreeNode::Internal {
                    feature,
                    threshold,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            }
        }
    }

    /// Exhaustive scan over every feature and every midpoint threshold.
    /// Returns the split with the strictly largest Gini gain; scanning
    /// features in ascending index order and thresholds in ascending value
    /// order makes "first strictly better wins" implement the tie-break.
    fn best_split(&self, indices: &[u32], neg: usize, pos: usize) -> Option<(usize, f64)> {
        let n = indices.len();
        let parent_gini = gini(neg, pos);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut column: Vec<(f64, bool)> = Vec::with_capacity(n);
        for feature in 0..self.x.cols() {
            column.clear();
            column.extend(
                indices
                    .iter()
                    .map(|&i| (self.x.get(i as usize, feature), self.y[i as usize])),
            );
            column.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature value"));
            let mut left_pos = 0usize;
            let mut left_n = 0usize;
            for k in 0..n - 1 {
                left_n += 1;
                if column[k].1 {
                    left_pos += 1;
                }
                // A candidate exists only between distinct consecutive values.
                if column[k].0 == column[k + 1].0 {
                    continue;
                }
                let right_n = n - left_n;
                if left_n < self.min_leaf || right_n < self.min_leaf {
                    continue;
                }
                let left_neg = left_n - left_pos;
                let right_pos = pos - left_pos;
                let right_neg = neg - left_neg;
                let gain = parent_gini
                    - (left_n as f64 / n as f64) * gini(left_neg, left_pos)
                    - (right_n as f64 / n as f64) * gini(right_neg, right_pos);
                if gain > 0.0 && best.map_or(true, |(bg, _, _)| gain > bg) {
                    let threshold = 0.5 * (column[k].0 + column[k + 1].0);
                    best = Some((gain, feature, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Stable partition: moves items satisfying `pred` to the front, preserving
/// relative order; returns the boundary.
fn partition(indices: &mut [u32], pred: impl Fn(u32) -> bool) -> usize {
    let mut reordered: Vec<u32> = Vec::with_capacity(indices.len());
    reordered.extend(indices.iter().copied().filter(|&i| pred(i)));
    let boundary = reordered.len();
    reordered.extend(indices.iter().copied().filter(|&i| !pred(i)));
    indices.copy_from_slice(&reordered);
    boundary
}

/// Greedy CART on binary labels.
///
/// Fewer than `2h` examples yield a single-leaf tree; an empty input is an
/// error.
pub fn train_tree(x: &Matrix, y: &[bool], min_leaf: usize) -> Result<DecisionTree> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput("train_tree"));
    }
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            context: "train_tree labels",
            expected: x.rows(),
            actual: y.len(),
        });
    }
    let min_leaf = min_leaf.max(1);
    let builder = Builder { x, y, min_leaf };
    let mut indices: Vec<u32> = (0..x.rows() as u32).collect();
    let root = builder.build(&mut indices);
    Ok(DecisionTree {
        root,
        min_leaf,
        seed: 0,
        n_features: x.cols(),
    })
}

/// Reduced-error pruning: bottom-up, replace an internal node with its
/// majority-class leaf whenever accuracy on the pruning set does not
/// decrease. Children are pruned before their parent, so one pass reaches
/// the fixpoint.
pub fn prune_tree(tree: &DecisionTree, x_prune: &Matrix, y_prune: &[bool]) -> DecisionTree {
    fn correct(node: &TreeNode, x: &Matrix, idx: &[u32], y: &[bool]) -> usize {
        idx.iter()
            .filter(|&&i| {
                let mut n = node;
                loop {
                    match n {
                        TreeNode::Leaf { probability, .. } => {
                            return (*probability >= 0.5) == y[i as usize];
                        }
                        TreeNode::Internal {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            n = if x.get(i as usize, *feature) <= *threshold {
                                left
                            } else {
                                right
                            };
                        }
                    }
                }
            })
            .count()
    }

    fn prune(node: &TreeNode, x: &Matrix, idx: &[u32], y: &[bool]) -> TreeNode {
        match node {
            TreeNode::Leaf { .. } => node.clone(),
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                let (left_idx, right_idx): (Vec<u32>, Vec<u32>) = idx
                    .iter()
                    .partition(|&&i| x.get(i as usize, *feature) <= *threshold);
                let pruned = TreeNode::Internal {
                    feature: *feature,
                    threshold: *threshold,
                    left: Box::new(prune(left, x, &left_idx, y)),
                    right: Box::new(prune(right, x, &right_idx, y)),
                };
                let (neg, pos) = pruned.counts();
                let as_leaf = TreeNode::leaf(neg, pos);
                if correct(&as_leaf, x, idx, y) >= correct(&pruned, x, idx, y) {
                    as_leaf
                } else {
                    pruned
                }
            }
        }
    }

    let indices: Vec<u32> = (0..x_prune.rows() as u32).collect();
    DecisionTree {
        root: prune(&tree.root, x_prune, &indices, y_prune),
        min_leaf: tree.min_leaf,
        seed: tree.seed,
        n_features: tree.n_features,
    }
}

/// How an average path length is computed: the pruned variant trains on a
/// prefix and reduced-error-prunes on the remainder; the unpruned variant is
/// the original cost (train on everything, no pruning pass).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AplParams {
    pub min_leaf: usize,
    pub prune_fraction: f64,
    pub pruned: bool,
}

impl AplParams {
    pub fn pruned(min_leaf: usize, prune_fraction: f64) -> Self {
        AplParams {
            min_leaf,
            prune_fraction,
            pruned: true,
        }
    }

    pub fn unpruned(min_leaf: usize) -> Self {
        AplParams {
            min_leaf,
            prune_fraction: 0.0,
            pruned: false,
        }
    }
}

/// Distill a labeling into a tree under the given parameters and return the
/// tree plus the mean path length over all rows.
pub fn distill_with(x: &Matrix, labels: &[bool], params: AplParams) -> Result<(DecisionTree, f64)> {
    if x.rows() < 10 {
        return Err(Error::TooFewExamples {
            context: "apl",
            count: x.rows(),
            min: 10,
        });
    }
    let n = x.rows();
    let n_train = if params.pruned {
        (((1.0 - params.prune_fraction) * n as f64).round() as usize).clamp(1, n)
    } else {
        n
    };
    let x_train = Matrix::from_fn(n_train, x.cols(), |i, j| x.get(i, j));
    let tree = train_tree(&x_train, &labels[..n_train], params.min_leaf)?;
    let tree = if n_train < n {
        let n_prune = n - n_train;
        let x_prune = Matrix::from_fn(n_prune, x.cols(), |i, j| x.get(n_train + i, j));
        prune_tree(&tree, &x_prune, &labels[n_train..])
    } else {
        tree
    };
    let total: usize = (0..n).map(|i| tree.path_length(x.row(i))).sum();
    Ok((tree, total as f64 / n as f64))
}

/// Pruned distillation: train on the first `(1 - prune_fraction) * N` rows,
/// prune on the remainder.
pub fn distill(
    x: &Matrix,
    labels: &[bool],
    min_leaf: usize,
    prune_fraction: f64,
) -> Result<(DecisionTree, f64)> {
    distill_with(x, labels, AplParams::pruned(min_leaf, prune_fraction))
}

/// Pruned average path length of `predict`'s decision function over `x`.
pub fn apl(
    x: &Matrix,
    predict: impl Fn(&[f64]) -> bool,
    min_leaf: usize,
    prune_fraction: f64,
) -> Result<f64> {
    let labels: Vec<bool> = (0..x.rows()).map(|i| predict(x.row(i))).collect();
    distill(x, &labels, min_leaf, prune_fraction).map(|(_, apl)| apl)
}

/// Unpruned average path length (the original cost: train on everything,
/// no pruning pass).
pub fn apl_unpruned(
    x: &Matrix,
    predict: impl Fn(&[f64]) -> bool,
    min_leaf: usize,
) -> Result<f64> {
    let labels: Vec<bool> = (0..x.rows()).map(|i| predict(x.row(i))).collect();
    distill_with(x, &labels, AplParams::unpruned(min_leaf)).map(|(_, apl)| apl)
}

/// Fraction of rows where the tree's thresholded prediction agrees with
/// `predict`.
pub fn fidelity(tree: &DecisionTree, predict: impl Fn(&[f64]) -> bool, x_test: &Matrix) -> f64 {
    assert!(x_test.rows() > 0, "fidelity needs a nonempty test set");
    let agree = (0..x_test.rows())
        .filter(|&i| tree.predict(x_test.row(i)) == predict(x_test.row(i)))
        .count();
    agree as f64 / x_test.rows() as f64
}

/// Render the tree as a DOT digraph. Internal nodes read `name <= threshold`,
/// leaves carry the class and leaf probability.
pub fn export_dot(tree: &DecisionTree, feature_names: &[String]) -> Result<String> {
    fn walk(
        node: &TreeNode,
        names: &[String],
        next_id: &mut usize,
        out: &mut String,
    ) -> Result<usize> {
        let id = *next_id;
        *next_id += 1;
        match node {
            TreeNode::Leaf {
                counts,
                probability,
            } => {
                let class = if *probability >= 0.5 { 1 } else { 0 };
                out.push_str(&format!(
                    "  n{} [shape=box, label=\"class {} (p={:.3}, n={})\"];\n",
                    id,
                    class,
                    probability,
                    counts.0 + counts.1
                ));
            }
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                let name = names
                    .get(*feature)
                    .ok_or(Error::MissingFeatureName(*feature))?;
                out.push_str(&format!(
                    "  n{} [label=\"{} <= {:.6}\"];\n",
                    id, name, threshold
                ));
                let l = walk(left, names, next_id, out)?;
                out.push_str(&format!("  n{} -> n{} [label=\"yes\"];\n", id, l));
                let r = walk(right, names, next_id, out)?;
                out.push_str(&format!("  n{} -> n{} [label=\"no\"];\n", id, r));
            }
        }
        Ok(id)
    }

    let mut body = String::new();
    let mut next_id = 0;
    walk(&tree.root, feature_names, &mut next_id, &mut body)?;
    Ok(format!("digraph tree {{\n{}}}\n", body))
}
