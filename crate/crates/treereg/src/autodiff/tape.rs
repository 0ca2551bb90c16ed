//! Define-by-run reverse-mode automatic differentiation over matrices.
//!
//! A [`Tape`] records matrix-valued operations as they are built; values are
//! computed eagerly, so [`Tape::value`] on any node is the forward result.
//! [`Tape::backward`] propagates gradients from a scalar root back to every
//! leaf. Tapes are rebuilt per minibatch and never reused across steps.

use crate::autodiff::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    /// `a * b^T` without materializing the transpose.
    MatMulNt(NodeId, NodeId),
    /// Elementwise `k * x + c`; only the slope matters for gradients.
    Affine(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    LeakyRelu(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Abs(NodeId),
    Softplus(NodeId),
    SoftmaxRows(NodeId),
    /// `a (m x n) + b (1 x n)` broadcast down rows.
    AddRowBcast(NodeId, NodeId),
    /// `a (m x n) + b (m x 1)` broadcast across columns.
    AddColBcast(NodeId, NodeId),
    /// `a (m x n) / s (m x 1)` broadcast across columns.
    DivColBcast(NodeId, NodeId),
    RowSum(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    ConcatRows(Vec<NodeId>),
    Reshape(NodeId),
    /// Tile a `1 x n` row `m` times.
    RepeatRows(NodeId),
    Transpose(NodeId),
    /// Euclidean projection of a column vector onto the probability simplex.
    Sparsemax(NodeId),
    /// Elementwise binary cross-entropy from logits against constant targets.
    BceWithLogits(NodeId, Matrix),
}

#[derive(Debug)]
struct TapeNode {
    op: Op,
    value: Matrix,
    grad: Matrix,
}

/// Leaky ReLU negative-side slope.
pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Euclidean projection of `v` onto the probability simplex.
///
/// Sort descending, find the largest k with `1 + k*v[k] > sum(v[..=k])`,
/// shift by the resulting threshold and clip at zero.
pub fn simplex_projection(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "simplex projection of an empty vector");
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("non-finite sparsemax input"));
    let mut cumsum = 0.0;
    let mut k = 0usize;
    let mut cumsum_k = 0.0;
    for (i, &z) in sorted.iter().enumerate() {
        cumsum += z;
        if 1.0 + (i as f64 + 1.0) * z > cumsum {
            k = i + 1;
            cumsum_k = cumsum;
        }
    }
    let tau = (cumsum_k - 1.0) / k as f64;
    v.iter().map(|&z| (z - tau).max(0.0)).collect()
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.nodes.push(TapeNode { op, value, grad });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Forward value at `id` (computed when the node was built).
    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let m = self.value(id);
        debug_assert_eq!(m.shape(), (1, 1));
        m.data()[0]
    }

    pub fn grad(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].grad
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, "div", |x, y| x / y)?;
        Ok(self.push(Op::Div(a, b), v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.matmul_nt(&self.nodes[b.0].value)?;
        Ok(self.push(Op::MatMulNt(a, b), v))
    }

    pub fn affine(&mut self, a: NodeId, k: f64, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| k * x + c);
        self.push(Op::Affine(a, k), v)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.affine(a, -1.0, 0.0)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        self.affine(a, k, 0.0)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn leaky_relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| if x > 0.0 { x } else { LEAKY_SLOPE * x });
        self.push(Op::LeakyRelu(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::ln);
        self.push(Op::Ln(a), v)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(f64::abs);
        self.push(Op::Abs(a), v)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.map(softplus);
        self.push(Op::Softplus(a), v)
    }

    /// Row-wise softmax with max subtraction for stability.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let input = &self.nodes[a.0].value;
        let mut v = Matrix::zeros(input.rows(), input.cols());
        for i in 0..input.rows() {
            let row = input.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                v.set(i, j, e);
                sum += e;
            }
            for j in 0..input.cols() {
                v.set(i, j, v.get(i, j) / sum);
            }
        }
        self.push(Op::SoftmaxRows(a), v)
    }

    pub fn add_row_bcast(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::ShapeMismatch {
                op: "add_row_bcast",
                lhs_rows: av.rows(),
                lhs_cols: av.cols(),
                rhs_rows: bv.rows(),
                rhs_cols: bv.cols(),
            });
        }
        let mut v = av.clone();
        for i in 0..v.rows() {
            for (x, &y) in v.row_mut(i).iter_mut().zip(bv.row(0)) {
                *x += y;
            }
        }
        Ok(self.push(Op::AddRowBcast(a, b), v))
    }

    pub fn add_col_bcast(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if bv.cols() != 1 || bv.rows() != av.rows() {
            return Err(Error::ShapeMismatch {
                op: "add_col_bcast",
                lhs_rows: av.rows(),
                lhs_cols: av.cols(),
                rhs_rows: bv.rows(),
                rhs_cols: bv.cols(),
            });
        }
        let mut v = av.clone();
        for i in 0..v.rows() {
            let s = bv.get(i, 0);
            for x in v.row_mut(i) {
                *x += s;
            }
        }
        Ok(self.push(Op::AddColBcast(a, b), v))
    }

    pub fn div_col_bcast(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let (av, sv) = (&self.nodes[a.0].value, &self.nodes[s.0].value);
        if sv.cols() != 1 || sv.rows() != av.rows() {
            return Err(Error::ShapeMismatch {
                op: "div_col_bcast",
                lhs_rows: av.rows(),
                lhs_cols: av.cols(),
                rhs_rows: sv.rows(),
                rhs_cols: sv.cols(),
            });
        }
        let mut v = av.clone();
        for i in 0..v.rows() {
            let s = sv.get(i, 0);
            for x in v.row_mut(i) {
                *x /= s;
            }
        }
        Ok(self.push(Op::DivColBcast(a, s), v))
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let av = &self.nodes[a.0].value;
        let v = Matrix::from_fn(av.rows(), 1, |i, _| av.row(i).iter().sum());
        self.push(Op::RowSum(a), v)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        let v = Matrix::from_vec(1, 1, vec![s]).expect("1x1");
        self.push(Op::SumAll(a), v)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let data = self.nodes[a.0].value.data();
        let s: f64 = data.iter().sum();
        let v = Matrix::from_vec(1, 1, vec![s / data.len() as f64]).expect("1x1");
        self.push(Op::MeanAll(a), v)
    }

    /// Stack nodes vertically; all parts must share a column count.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat_rows"));
        }
        let cols = self.nodes[parts[0].0].value.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = &self.nodes[p.0].value;
            if v.cols() != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs_rows: rows,
                    lhs_cols: cols,
                    rhs_rows: v.rows(),
                    rhs_cols: v.cols(),
                });
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let v = Matrix::from_vec(rows, cols, data).expect("concat shape");
        Ok(self.push(Op::ConcatRows(parts.to_vec()), v))
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        if av.len() != rows * cols {
            return Err(Error::LengthMismatch {
                context: "reshape",
                expected: rows * cols,
                actual: av.len(),
            });
        }
        let v = Matrix::from_vec(rows, cols, av.data().to_vec()).expect("reshape");
        Ok(self.push(Op::Reshape(a), v))
    }

    pub fn repeat_rows(&mut self, a: NodeId, times: usize) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        if av.rows() != 1 {
            return Err(Error::InvalidMatrix(format!(
                "repeat_rows expects a 1xN row, got {}x{}",
                av.rows(),
                av.cols()
            )));
        }
        let mut data = Vec::with_capacity(times * av.cols());
        for _ in 0..times {
            data.extend_from_slice(av.row(0));
        }
        let v = Matrix::from_vec(times, av.cols(), data).expect("repeat shape");
        Ok(self.push(Op::RepeatRows(a), v))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.transpose();
        self.push(Op::Transpose(a), v)
    }

    /// Sparsemax over a column vector; gradient uses the full Jacobian.
    pub fn sparsemax(&mut self, a: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        if av.cols() != 1 || av.rows() == 0 {
            return Err(Error::InvalidMatrix(format!(
                "sparsemax expects a nonempty Rx1 column, got {}x{}",
                av.rows(),
                av.cols()
            )));
        }
        let p = simplex_projection(av.data());
        let v = Matrix::from_vec(av.rows(), 1, p).expect("sparsemax shape");
        Ok(self.push(Op::Sparsemax(a), v))
    }

    /// Elementwise binary cross-entropy from logits against constant targets.
    ///
    /// Stable form `max(z,0) - z*t + ln(1 + exp(-|z|))`; gradient is `sigmoid(z) - t`.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: Matrix) -> Result<NodeId> {
        let z = &self.nodes[logits.0].value;
        if z.shape() != targets.shape() {
            return Err(Error::ShapeMismatch {
                op: "bce_with_logits",
                lhs_rows: z.rows(),
                lhs_cols: z.cols(),
                rhs_rows: targets.rows(),
                rhs_cols: targets.cols(),
            });
        }
        let v = z.zip_map(&targets, "bce_with_logits", |z, t| {
            z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
        })?;
        Ok(self.push(Op::BceWithLogits(logits, targets), v))
    }

    /// Backpropagate from a scalar root; gradients accumulate at every node.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        {
            let rv = &self.nodes[root.0].value;
            if rv.shape() != (1, 1) {
                return Err(Error::NonScalarRoot {
                    rows: rv.rows(),
                    cols: rv.cols(),
                });
            }
        }
        for node in &mut self.nodes {
            for g in node.grad.data_mut() {
                *g = 0.0;
            }
        }
        self.nodes[root.0].grad.set(0, 0, 1.0);

        // Nodes are pushed in topological order, so descending index order is
        // a valid reverse traversal.
        for i in (0..=root.0).rev() {
            let (front, back) = self.nodes.split_at_mut(i);
            let node = &back[0];
            let g = &node.grad;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut front[a.0].grad, g.data());
                    accumulate(&mut front[b.0].grad, g.data());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut front[a.0].grad, g.data());
                    accumulate_scaled(&mut front[b.0].grad, g.data(), -1.0);
                }
                Op::Mul(a, b) => {
                    if a.0 == b.0 {
                        // x*x: d/dx = 2x
                        let prod: Vec<f64> = g
                            .data()
                            .iter()
                            .zip(front[a.0].value.data())
                            .map(|(&g, &x)| 2.0 * g * x)
                            .collect();
                        accumulate(&mut front[a.0].grad, &prod);
                    } else {
                        let (lo, hi) = (a.0.min(b.0), a.0.max(b.0));
                        let (fa, fb) = front.split_at_mut(hi);
                        let (na, nb) = if a.0 < b.0 {
                            (&mut fa[lo], &mut fb[0])
                        } else {
                            (&mut fb[0], &mut fa[lo])
                        };
                        for ((ga, &bv), &gv) in
                            na.grad.data_mut().iter_mut().zip(nb.value.data()).zip(g.data())
                        {
                            *ga += gv * bv;
                        }
                        for ((gb, &av), &gv) in
                            nb.grad.data_mut().iter_mut().zip(na.value.data()).zip(g.data())
                        {
                            *gb += gv * av;
                        }
                    }
                }
                Op::Div(a, b) => {
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(front[b.0].value.data())
                        .map(|(&g, &b)| g / b)
                        .collect();
                    let gb: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(front[a.0].value.data().iter().zip(front[b.0].value.data()))
                        .map(|(&g, (&a, &b))| -g * a / (b * b))
                        .collect();
                    accumulate(&mut front[a.0].grad, &ga);
                    accumulate(&mut front[b.0].grad, &gb);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(&front[b.0].value).expect("shapes checked");
                    let gb = front[a.0].value.matmul_tn(g).expect("shapes checked");
                    accumulate(&mut front[a.0].grad, ga.data());
                    accumulate(&mut front[b.0].grad, gb.data());
                }
                Op::MatMulNt(a, b) => {
                    let ga = g.matmul(&front[b.0].value).expect("shapes checked");
                    let gb = g.matmul_tn(&front[a.0].value).expect("shapes checked");
                    accumulate(&mut front[a.0].grad, ga.data());
                    accumulate(&mut front[b.0].grad, gb.data());
                }
                Op::Affine(a, k) => {
                    accumulate_scaled(&mut front[a.0].grad, g.data(), *k);
                }
                Op::Sigmoid(a) => {
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(&g, &y)| g * y * (1.0 - y))
                        .collect();
                    accumulate(&mut front[a.0].grad, &ga);
                }
                Op::Tanh(a) => {
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(&g, &y)| g * (1.0 - y * y))
                        .collect();
                    accumulate(&mut front[a.0].grad, &ga);
                }
                Op::LeakyRelu(a) => {
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(front[a.0].value.data())
                        .map(|(&g, &x)| if x > 0.0 { g } else { g * LEAKY_SLOPE })
                        .collect();
                    accumulate(&mut front[a.0].grad, &ga);
                }
                Op::Exp(a) => {
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(&g, &y)| g * y)
                        .collect();
                    accumulate(&mut front[a.0].grad, &ga);
                }
                Op::Ln(a) => {
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(front[a.0].value.data())
                        .map(|(&g, &x)| g / x)
                        .collect();
                    accumulate(&mut front[a.0].grad, &ga);
                }
                Op::Abs(a) => {
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(front[a.0].value.data())
                        .map(|(&g, &x)| g * x.signum() * if x == 0.0 { 0.0 } else { 1.0 })
                        .collect();
                    accumulate(&mut front[a.0].grad, &ga);
                }
                Op::Softplus(a) => {
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(front[a.0].value.data())
                        .map(|(&g, &x)| g * sigmoid(x))
                        .collect();
                    accumulate(&mut front[a.0].grad, &ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(&g, &y)| g * y).sum();
                        for j in 0..y.cols() {
                            ga.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    accumulate(&mut front[a.0].grad, ga.data());
                }
                Op::AddRowBcast(a, b) => {
                    accumulate(&mut front[a.0].grad, g.data());
                    let cols = g.cols();
                    let gb = front[b.0].grad.data_mut();
                    for i in 0..g.rows() {
                        for (j, &gv) in g.row(i).iter().enumerate() {
                            gb[j % cols] += gv;
                        }
                    }
                }
                Op::AddColBcast(a, b) => {
                    accumulate(&mut front[a.0].grad, g.data());
                    let gb = front[b.0].grad.data_mut();
                    for i in 0..g.rows() {
                        gb[i] += g.row(i).iter().sum::<f64>();
                    }
                }
                Op::DivColBcast(a, s) => {
                    let y = &node.value;
                    let sv = front[s.0].value.clone();
                    {
                        let ga = front[a.0].grad.data_mut();
                        for i in 0..g.rows() {
                            let si = sv.get(i, 0);
                            for (j, &gv) in g.row(i).iter().enumerate() {
                                ga[i * g.cols() + j] += gv / si;
                            }
                        }
                    }
                    let gs = front[s.0].grad.data_mut();
                    for i in 0..g.rows() {
                        let si = sv.get(i, 0);
                        let acc: f64 = g
                            .row(i)
                            .iter()
                            .zip(y.row(i))
                            .map(|(&gv, &yv)| gv * yv)
                            .sum();
                        gs[i] -= acc / si;
                    }
                }
                Op::RowSum(a) => {
                    let ga = front[a.0].grad.data_mut();
                    let cols = front[a.0].value.cols();
                    for i in 0..g.rows() {
                        let gv = g.get(i, 0);
                        for x in &mut ga[i * cols..(i + 1) * cols] {
                            *x += gv;
                        }
                    }
                }
                Op::SumAll(a) => {
                    let gv = g.get(0, 0);
                    for x in front[a.0].grad.data_mut() {
                        *x += gv;
                    }
                }
                Op::MeanAll(a) => {
                    let n = front[a.0].value.len() as f64;
                    let gv = g.get(0, 0) / n;
                    for x in front[a.0].grad.data_mut() {
                        *x += gv;
                    }
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let len = front[p.0].value.len();
                        accumulate(&mut front[p.0].grad, &g.data()[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Reshape(a) => {
                    accumulate(&mut front[a.0].grad, g.data());
                }
                Op::RepeatRows(a) => {
                    let cols = g.cols();
                    let ga = front[a.0].grad.data_mut();
                    for i in 0..g.rows() {
                        for (j, &gv) in g.row(i).iter().enumerate() {
                            ga[j % cols] += gv;
                        }
                    }
                }
                Op::Transpose(a) => {
                    let gt = g.transpose();
                    accumulate(&mut front[a.0].grad, gt.data());
                }
                Op::Sparsemax(a) => {
                    // Jacobian: dp_i/dv_j = [i in S](delta_ij - [j in S]/|S|)
                    // where S is the support of the output.
                    let y = node.value.data();
                    let support: Vec<usize> =
                        (0..y.len()).filter(|&i| y[i] > 0.0).collect();
                    let gsum: f64 = support.iter().map(|&i| g.data()[i]).sum();
                    let mean = gsum / support.len() as f64;
                    let ga = front[a.0].grad.data_mut();
                    for &i in &support {
                        ga[i] += g.data()[i] - mean;
                    }
                }
                Op::BceWithLogits(a, targets) => {
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(front[a.0].value.data().iter().zip(targets.data()))
                        .map(|(&g, (&z, &t))| g * (sigmoid(z) - t))
                        .collect();
                    accumulate(&mut front[a.0].grad, &ga);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(dst: &mut Matrix, src: &[f64]) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src) {
        *d += s;
    }
}

fn accumulate_scaled(dst: &mut Matrix, src: &[f64], k: f64) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src) {
        *d += k * s;
    }
}
