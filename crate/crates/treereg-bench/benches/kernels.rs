//! Desk-scale timings for the hot kernels: tape step, CART distillation,
//! sparsemax, and the GRU recursion.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treereg::dtree::{self, AplParams};
use treereg::models::{model_loss, AnyModel, Batch, GruModel, HiddenActivation, MlpModel};
use treereg::regularize::sparsemax;
use treereg::{Matrix, Tape};

fn mlp_train_step(c: &mut Criterion) {
    let model = AnyModel::Mlp(MlpModel::new(
        &[2, 100, 100, 10, 1],
        HiddenActivation::LeakyRelu,
        0,
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Matrix::from_fn(100, 2, |_, _| rng.gen_range(0.0..1.0));
    let y = Matrix::from_fn(100, 1, |_, _| f64::from(rng.gen_range(0..2)));
    c.bench_function("mlp_100x100x10_forward_backward_batch100", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let graph = model_loss(
                &mut tape,
                &model,
                &Batch::Tabular { x: &x, y: &y },
                0.0,
                |_, _| Ok(None),
            )
            .unwrap();
            tape.backward(graph.loss).unwrap();
            black_box(graph.taped.collect_grads(&tape));
        })
    });
}

fn gru_sequence_forward(c: &mut Criterion) {
    let model = GruModel::new(14, 25, 1, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let seq = Matrix::from_fn(50, 14, |_, _| f64::from(rng.gen_range(0..2)));
    c.bench_function("gru_k25_hidden_seq_t50", |b| {
        b.iter(|| black_box(model.hidden_seq(&seq).unwrap()))
    });
}

fn cart_distill(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Matrix::from_fn(3500, 14, |_, _| f64::from(rng.gen_range(0..2)));
    let labels: Vec<bool> = (0..3500)
        .map(|i| x.get(i, 0) > 0.5 && rng.gen::<f64>() < 0.9)
        .collect();
    c.bench_function("cart_distill_3500x14_binary", |b| {
        b.iter(|| {
            black_box(dtree::distill_with(&x, &labels, AplParams::pruned(10, 0.2)).unwrap())
        })
    });
}

fn sparsemax_projection(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let v: Vec<f64> = (0..10).map(|_| rng.gen_range(-5.0..5.0)).collect();
    c.bench_function("sparsemax_r10", |b| b.iter(|| black_box(sparsemax(&v))));
}

criterion_group!(
    benches,
    mlp_train_step,
    gru_sequence_forward,
    cart_distill,
    sparsemax_projection
);
criterion_main!(benches);
