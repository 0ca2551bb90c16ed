//! The three synthetic benchmarks.

use crate::autodiff::Matrix;
use crate::data::{
    round_half_even, SequenceDataset, SequenceExample, SequenceLatents, Split, TabularDataset,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Parabola boundary: positive iff x1 > 5 (x0 - 0.5)^2 + 0.4.
pub fn parabola_curve(x0: f64) -> f64 {
    5.0 * (x0 - 0.5) * (x0 - 0.5) + 0.4
}

/// 500 points uniform on the unit square, labeled by the parabola boundary,
/// with 10% of the points inside a band around the curve flipped and a
/// random 30% held out for testing.
pub fn gen_parabola(seed: u64, noise_band: f64) -> TabularDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 500;
    let mut x = Matrix::zeros(n, 2);
    let mut labels = vec![false; n];
    for i in 0..n {
        let a = rng.gen::<f64>();
        let b = rng.gen::<f64>();
        x.set(i, 0, a);
        x.set(i, 1, b);
        labels[i] = b > parabola_curve(a);
    }
    let mut in_band: Vec<usize> = (0..n)
        .filter(|&i| (x.get(i, 1) - parabola_curve(x.get(i, 0))).abs() < noise_band)
        .collect();
    in_band.shuffle(&mut rng);
    let flip_count = (0.10 * in_band.len() as f64).round() as usize;
    for &i in in_band.iter().take(flip_count) {
        labels[i] = !labels[i];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_test = (0.3 * n as f64).round() as usize;
    let mut split = vec![Split::Train; n];
    for &i in order.iter().take(n_test) {
        split[i] = Split::Test;
    }
    TabularDataset {
        x,
        y: Matrix::from_fn(n, 1, |i, _| f64::from(labels[i])),
        feature_names: vec!["x0".to_string(), "x1".to_string()],
        split,
        region: None,
    }
}

/// Five-rectangles domain: x in [0, 5], y in [0, 1].
pub const FIVE_RECT_DOMAIN: (f64, f64) = (5.0, 1.0);

/// Rectangle i (from its x-column) spans y within +-0.25 of its center:
/// 0.4 for the first three columns, 0.6 for the last two.
pub fn five_rect_label(x0: f64, x1: f64) -> bool {
    let column = (x0.floor() as isize).clamp(0, 4) as usize;
    let center = if column < 3 { 0.4 } else { 0.6 };
    (x1 - center).abs() <= 0.25
}

/// 250 noisy training points (5% of labels flipped) plus a dense noiseless
/// test grid, stored shuffled so prefix train/prune splits stay
/// representative.
pub fn gen_five_rectangles(seed: u64, grid: usize) -> TabularDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_train = 250;
    let mut rows: Vec<[f64; 2]> = Vec::with_capacity(n_train + grid * grid);
    let mut labels: Vec<bool> = Vec::with_capacity(n_train + grid * grid);
    for _ in 0..n_train {
        let a = rng.gen::<f64>() * FIVE_RECT_DOMAIN.0;
        let b = rng.gen::<f64>() * FIVE_RECT_DOMAIN.1;
        rows.push([a, b]);
        labels.push(five_rect_label(a, b));
    }
    let flip_count = round_half_even(0.05 * n_train as f64);
    let mut train_idx: Vec<usize> = (0..n_train).collect();
    train_idx.shuffle(&mut rng);
    for &i in train_idx.iter().take(flip_count) {
        labels[i] = !labels[i];
    }
    // Dense noiseless grid of cell centers, shuffled.
    let mut grid_rows: Vec<[f64; 2]> = Vec::with_capacity(grid * grid);
    for r in 0..grid {
        for c in 0..grid {
            let a = (r as f64 + 0.5) / grid as f64 * FIVE_RECT_DOMAIN.0;
            let b = (c as f64 + 0.5) / grid as f64 * FIVE_RECT_DOMAIN.1;
            grid_rows.push([a, b]);
        }
    }
    grid_rows.shuffle(&mut rng);
    for &[a, b] in &grid_rows {
        rows.push([a, b]);
        labels.push(five_rect_label(a, b));
    }
    let n = rows.len();
    let split: Vec<Split> = (0..n)
        .map(|i| if i < n_train { Split::Train } else { Split::Test })
        .collect();
    TabularDataset {
        x: Matrix::from_fn(n, 2, |i, j| rows[i][j]),
        y: Matrix::from_fn(n, 1, |i, _| f64::from(labels[i])),
        feature_names: vec!["x0".to_string(), "x1".to_string()],
        split,
        region: Some(
            (0..n)
                .map(|i| (rows[i][0].floor() as isize).clamp(0, 4) as usize)
                .collect(),
        ),
    }
}

/// The generative process behind the signal-and-noise task: two independent
/// 5-state chains, one driving features 0-6 and one driving features 7-13.
#[derive(Debug, Clone)]
pub struct SignalNoiseSpec {
    pub signal_emission: Matrix,
    pub signal_transition: Matrix,
    pub noise_emission: Matrix,
    pub noise_transition: Matrix,
    pub prior: Vec<f64>,
}

impl SignalNoiseSpec {
    pub fn paper() -> Self {
        #[rustfmt::skip]
        let signal_emission = Matrix::from_vec(5, 7, vec![
            0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0,
            0.5, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0,
            0.5, 0.5, 0.5, 0.0, 0.5, 0.0, 0.0,
            0.5, 0.5, 0.5, 0.0, 0.0, 0.5, 0.0,
            0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.5,
        ]).unwrap();
        #[rustfmt::skip]
        let signal_transition = Matrix::from_vec(5, 5, vec![
            0.7, 0.3,  0.0,  0.0,  0.0,
            0.5, 0.25, 0.25, 0.0,  0.0,
            0.0, 0.25, 0.5,  0.25, 0.0,
            0.0, 0.0,  0.25, 0.25, 0.5,
            0.0, 0.0,  0.0,  0.5,  0.5,
        ]).unwrap();
        #[rustfmt::skip]
        let noise_emission = Matrix::from_vec(5, 7, vec![
            0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0,
            0.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0,
            0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5,
        ]).unwrap();
        let noise_transition = Matrix::filled(5, 5, 0.2);
        SignalNoiseSpec {
            signal_emission,
            signal_transition,
            noise_emission,
            noise_transition,
            prior: vec![0.2; 5],
        }
    }

    /// Stationary distribution of the signal chain by power iteration.
    pub fn signal_stationary(&self) -> Vec<f64> {
        let mut pi = self.prior.clone();
        for _ in 0..10_000 {
            let mut next = vec![0.0; 5];
            for (j, &p) in pi.iter().enumerate() {
                for s in 0..5 {
                    next[s] += p * self.signal_transition.get(j, s);
                }
            }
            pi = next;
        }
        pi
    }
}

fn step_chain(rng: &mut ChaCha8Rng, row: &[f64]) -> usize {
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    for (s, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return s;
        }
    }
    row.len() - 1
}

/// 100 sequences of 50 binary 14-feature steps. The label fires only when
/// the signal chain sits in its first state and the first observation is on.
/// 30% of sequences are held out, matching the tabular benchmarks.
pub fn gen_signal_noise_hmm(seed: u64) -> SequenceDataset {
    let spec = SignalNoiseSpec::paper();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, t_len) = (100, 50);
    let mut sequences = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = Matrix::zeros(t_len, 14);
        let mut y = Matrix::zeros(t_len, 1);
        let mut signal_states = Vec::with_capacity(t_len);
        let mut noise_states = Vec::with_capacity(t_len);
        let mut sig = step_chain(&mut rng, &spec.prior);
        let mut noi = step_chain(&mut rng, &spec.prior);
        for t in 0..t_len {
            if t > 0 {
                sig = step_chain(&mut rng, spec.signal_transition.row(sig));
                noi = step_chain(&mut rng, spec.noise_transition.row(noi));
            }
            signal_states.push(sig);
            noise_states.push(noi);
            for p in 0..7 {
                if rng.gen::<f64>() < spec.signal_emission.get(sig, p) {
                    x.set(t, p, 1.0);
                }
            }
            for p in 0..7 {
                if rng.gen::<f64>() < spec.noise_emission.get(noi, p) {
                    x.set(t, 7 + p, 1.0);
                }
            }
            if sig == 0 && x.get(t, 0) == 1.0 {
                y.set(t, 0, 1.0);
            }
        }
        sequences.push(SequenceExample {
            x,
            y,
            split: Split::Train,
            latents: Some(SequenceLatents {
                signal_states,
                noise_states,
            }),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_test = (0.3 * n as f64).round() as usize;
    for &i in order.iter().take(n_test) {
        sequences[i].split = Split::Test;
    }
    let feature_names = (0..14).map(|i| format!("x[{i}]")).collect();
    SequenceDataset {
        sequences,
        feature_names,
    }
}
