//! Independent oracles shared by the oracle, property, and acceptance
//! suites. Everything here is deliberately written from scratch against the
//! definitions, not against the crate's implementation paths.

#![allow(dead_code)]

use treereg::Matrix;

/// Exhaustive-greedy CART oracle: at every node, scan all (feature,
/// midpoint-threshold) candidates for the split with the largest Gini
/// impurity decrease (ties: lowest feature, then lowest threshold), respect
/// the min-leaf constraint, and recurse. Returns training accuracy.
pub fn exhaustive_greedy_accuracy(x: &Matrix, y: &[bool], min_leaf: usize) -> f64 {
    let idx: Vec<usize> = (0..x.rows()).collect();
    let correct = grow(x, y, &idx, min_leaf);
    correct as f64 / x.rows() as f64
}

fn gini_of(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Returns the number of training points classified correctly by the
/// exhaustive-greedy subtree over `idx`.
fn grow(x: &Matrix, y: &[bool], idx: &[usize], min_leaf: usize) -> usize {
    let pos = idx.iter().filter(|&&i| y[i]).count();
    let neg = idx.len() - pos;
    let majority_correct = pos.max(neg);
    if pos == 0 || neg == 0 || idx.len() < 2 * min_leaf {
        return majority_correct;
    }
    let parent = gini_of(pos, idx.len());
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x.cols() {
        // Candidate thresholds: midpoints between consecutive distinct
        // sorted values.
        let mut values: Vec<f64> = idx.iter().map(|&i| x.get(i, f)).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for w in values.windows(2) {
            let threshold = 0.5 * (w[0] + w[1]);
            let (mut lp, mut ln, mut rp, mut rn) = (0usize, 0usize, 0usize, 0usize);
            for &i in idx {
                if x.get(i, f) <= threshold {
                    if y[i] {
                        lp += 1;
                    } else {
                        ln += 1;
                    }
                } else if y[i] {
                    rp += 1;
                } else {
                    rn += 1;
                }
            }
            let (l, r) = (lp + ln, rp + rn);
            if l < min_leaf || r < min_leaf {
                continue;
            }
            let gain = parent
                - (l as f64 / idx.len() as f64) * gini_of(lp, l)
                - (r as f64 / idx.len() as f64) * gini_of(rp, r);
            if gain > 0.0 && best.map_or(true, |(g, _, _)| gain > g) {
                best = Some((gain, f, threshold));
            }
        }
    }
    match best {
        None => majority_correct,
        Some((_, f, threshold)) => {
            let (left, right): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| x.get(i, f) <= threshold);
            grow(x, y, &left, min_leaf) + grow(x, y, &right, min_leaf)
        }
    }
}

/// Quadratic-program oracle for the Euclidean projection onto the simplex:
/// enumerate every support set, solve the equality-constrained projection in
/// closed form, check feasibility and KKT, and keep the feasible solution
/// with the smallest objective.
pub fn qp_simplex_projection(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    assert!(n >= 1 && n <= 16, "support enumeration oracle is exponential");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let sum: f64 = support.iter().map(|&i| v[i]).sum();
        let tau = (sum - 1.0) / support.len() as f64;
        let mut p = vec![0.0; n];
        let mut feasible = true;
        for &i in &support {
            p[i] = v[i] - tau;
            if p[i] < 0.0 {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        // KKT: coordinates outside the support must not want back in.
        if (0..n).any(|i| !support.contains(&i) && v[i] - tau > 1e-12) {
            continue;
        }
        let objective: f64 = (0..n).map(|i| (p[i] - v[i]) * (p[i] - v[i])).sum();
        if best.as_ref().map_or(true, |(o, _)| objective < *o) {
            best = Some((objective, p));
        }
    }
    best.expect("projection always exists").1
}

/// Central finite differences of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut plus = x.to_vec();
        plus[i] += h;
        let mut minus = x.to_vec();
        minus[i] -= h;
        out.push((f(&plus) - f(&minus)) / (2.0 * h));
    }
    out
}

/// Relative-error comparison with an absolute floor, the tolerance contract
/// used for every gradient check.
pub fn grad_close(analytic: f64, numeric: f64, rel: f64, abs_floor: f64) -> bool {
    let denom = analytic.abs().max(numeric.abs()).max(abs_floor);
    (analytic - numeric).abs() / denom < rel
}
