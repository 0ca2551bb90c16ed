//! Finite-difference gradient checks for every tape operation on random
//! inputs in [-2, 2], at relative tolerance 1e-4 with a 1e-6 absolute floor.

mod common;

use common::grad_close;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treereg::{Matrix, NodeId, Tape};

const REL: f64 = 1e-4;
const ABS: f64 = 1e-6;
const H: f64 = 1e-5;

/// Check d(scalarized op)/d(inputs) against central differences. The graph
/// builder receives leaves for each input matrix and must return the op
/// output; the output is scalarized against a fixed random weighting so
/// every output entry contributes.
fn check_op(
    name: &str,
    inputs: &[Matrix],
    build: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
    seed: u64,
) {
    let run = |mats: &[Matrix]| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let leaves: Vec<NodeId> = mats.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = build(&mut tape, &leaves);
        let out_shape = tape.value(out).shape();
        let mut w_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let weights = Matrix::from_fn(out_shape.0, out_shape.1, |_, _| {
            w_rng.gen_range(-1.0..1.0)
        });
        let w = tape.leaf(weights);
        let prod = tape.mul(out, w).expect("same shape");
        let root = tape.sum_all(prod);
        tape.backward(root).expect("scalar root");
        let grads = leaves.iter().map(|&l| tape.grad(l).data().to_vec()).collect();
        (tape.scalar(root), grads)
    };

    let (_, analytic) = run(inputs);
    for (mi, m) in inputs.iter().enumerate() {
        for k in 0..m.len() {
            let mut plus = inputs.to_vec();
            plus[mi].data_mut()[k] += H;
            let mut minus = inputs.to_vec();
            minus[mi].data_mut()[k] -= H;
            let numeric = (run(&plus).0 - run(&minus).0) / (2.0 * H);
            assert!(
                grad_close(analytic[mi][k], numeric, REL, ABS),
                "{name}: input {mi} coord {k}: analytic {} vs numeric {numeric}",
                analytic[mi][k]
            );
        }
    }
}

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

#[test]
fn elementwise_and_matmul_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_matrix(&mut rng, 3, 4, -2.0, 2.0);
    let b = rand_matrix(&mut rng, 3, 4, -2.0, 2.0);
    check_op("add", &[a.clone(), b.clone()], |t, l| t.add(l[0], l[1]).unwrap(), 1);
    check_op("sub", &[a.clone(), b.clone()], |t, l| t.sub(l[0], l[1]).unwrap(), 2);
    check_op("mul", &[a.clone(), b.clone()], |t, l| t.mul(l[0], l[1]).unwrap(), 3);
    // Keep divisors away from zero.
    let d = rand_matrix(&mut rng, 3, 4, 0.5, 2.0);
    check_op("div", &[a.clone(), d], |t, l| t.div(l[0], l[1]).unwrap(), 4);

    let m = rand_matrix(&mut rng, 3, 4, -2.0, 2.0);
    let n = rand_matrix(&mut rng, 4, 2, -2.0, 2.0);
    check_op("matmul", &[m.clone(), n], |t, l| t.matmul(l[0], l[1]).unwrap(), 5);
    let nt = rand_matrix(&mut rng, 5, 4, -2.0, 2.0);
    check_op("matmul_nt", &[m, nt], |t, l| t.matmul_nt(l[0], l[1]).unwrap(), 6);
}

#[test]
fn unary_nonlinearities() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let a = rand_matrix(&mut rng, 2, 5, -2.0, 2.0);
    check_op("affine", &[a.clone()], |t, l| t.affine(l[0], 1.7, -0.3), 1);
    check_op("sigmoid", &[a.clone()], |t, l| t.sigmoid(l[0]), 2);
    check_op("tanh", &[a.clone()], |t, l| t.tanh(l[0]), 3);
    check_op("exp", &[a.clone()], |t, l| t.exp(l[0]), 4);
    check_op("softplus", &[a.clone()], |t, l| t.softplus(l[0]), 5);
    // leaky-relu and abs have kinks at 0; keep inputs away from it.
    let off_zero = a.map(|v| if v.abs() < 0.1 { v + 0.2 } else { v });
    check_op("leaky_relu", &[off_zero.clone()], |t, l| t.leaky_relu(l[0]), 6);
    check_op("abs", &[off_zero], |t, l| t.abs(l[0]), 7);
    let positive = rand_matrix(&mut rng, 2, 5, 0.2, 2.0);
    check_op("ln", &[positive], |t, l| t.ln(l[0]), 8);
    check_op("softmax_rows", &[a], |t, l| t.softmax_rows(l[0]), 9);
}

#[test]
fn broadcast_and_reduction_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let a = rand_matrix(&mut rng, 3, 4, -2.0, 2.0);
    let row = rand_matrix(&mut rng, 1, 4, -2.0, 2.0);
    let col = rand_matrix(&mut rng, 3, 1, -2.0, 2.0);
    let pos_col = rand_matrix(&mut rng, 3, 1, 0.5, 2.0);
    check_op("add_row_bcast", &[a.clone(), row.clone()], |t, l| {
        t.add_row_bcast(l[0], l[1]).unwrap()
    }, 1);
    check_op("add_col_bcast", &[a.clone(), col], |t, l| {
        t.add_col_bcast(l[0], l[1]).unwrap()
    }, 2);
    check_op("div_col_bcast", &[a.clone(), pos_col], |t, l| {
        t.div_col_bcast(l[0], l[1]).unwrap()
    }, 3);
    check_op("row_sum", &[a.clone()], |t, l| t.row_sum(l[0]), 4);
    check_op("sum_all", &[a.clone()], |t, l| t.sum_all(l[0]), 5);
    check_op("mean_all", &[a.clone()], |t, l| t.mean_all(l[0]), 6);
    check_op("transpose", &[a.clone()], |t, l| t.transpose(l[0]), 7);
    check_op("reshape", &[a.clone()], |t, l| t.reshape(l[0], 4, 3).unwrap(), 8);
    check_op("repeat_rows", &[row], |t, l| t.repeat_rows(l[0], 5).unwrap(), 9);
    let b = rand_matrix(&mut rng, 2, 4, -2.0, 2.0);
    check_op("concat_rows", &[a, b], |t, l| t.concat_rows(l).unwrap(), 10);
}

#[test]
fn loss_and_projection_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let logits = rand_matrix(&mut rng, 3, 3, -2.0, 2.0);
    let targets = Matrix::from_fn(3, 3, |_, _| f64::from(rng.gen_range(0..2)));
    check_op("bce_with_logits", &[logits], |t, l| {
        t.bce_with_logits(l[0], targets.clone()).unwrap()
    }, 1);

    // Sparsemax is differentiable where the support is stable; sample inputs
    // and keep those whose support survives the finite-difference step.
    let mut checked = 0;
    for attempt in 0..40 {
        let v = rand_matrix(&mut rng, 5, 1, -2.0, 2.0);
        let p0 = treereg::regularize::sparsemax(v.data());
        let support: Vec<bool> = p0.iter().map(|&x| x > 1e-6).collect();
        let stable = (0..5).all(|i| {
            let mut plus = v.data().to_vec();
            plus[i] += 2.0 * H;
            let mut minus = v.data().to_vec();
            minus[i] -= 2.0 * H;
            let sp: Vec<bool> = treereg::regularize::sparsemax(&plus)
                .iter()
                .map(|&x| x > 1e-6)
                .collect();
            let sm: Vec<bool> = treereg::regularize::sparsemax(&minus)
                .iter()
                .map(|&x| x > 1e-6)
                .collect();
            sp == support && sm == support
        });
        if !stable {
            continue;
        }
        check_op("sparsemax", &[v], |t, l| t.sparsemax(l[0]).unwrap(), 100 + attempt);
        checked += 1;
        if checked >= 5 {
            break;
        }
    }
    assert!(checked >= 3, "too few stable sparsemax samples");
}
