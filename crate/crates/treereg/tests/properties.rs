//! Property tests for the spec-level invariants.

mod common;

use proptest::prelude::*;
use treereg::data::gen_signal_noise_hmm;
use treereg::dtree::{self, AplParams};
use treereg::metrics;
use treereg::models::GruModel;
use treereg::regularize::sparsemax;
use treereg::surrogate::SurrogateState;
use treereg::Matrix;

fn finite_vec(len: usize, range: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-range..range, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sparsemax_is_a_probability_vector(v in prop::collection::vec(-10.0f64..10.0, 1..10)) {
        let p = sparsemax(&v);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sparsemax_matches_qp_oracle(v in prop::collection::vec(-5.0f64..5.0, 2..10)) {
        let fast = sparsemax(&v);
        let oracle = common::qp_simplex_projection(&v);
        for (a, b) in fast.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-8, "{fast:?} vs {oracle:?}");
        }
    }

    #[test]
    fn sparsemax_permutation_equivariant(v in prop::collection::vec(-5.0f64..5.0, 2..8), swap in (0usize..8, 0usize..8)) {
        let (i, j) = (swap.0 % v.len(), swap.1 % v.len());
        let p = sparsemax(&v);
        let mut vp = v.clone();
        vp.swap(i, j);
        let mut expected = p.clone();
        expected.swap(i, j);
        let got = sparsemax(&vp);
        for (a, b) in got.iter().zip(&expected) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sparsemax_gap_above_one_is_one_hot(v in prop::collection::vec(-3.0f64..3.0, 2..8), winner in 0usize..8) {
        let mut v = v;
        let w = winner % v.len();
        let best_other = v.iter().enumerate().filter(|&(i, _)| i != w).map(|(_, &x)| x).fold(f64::NEG_INFINITY, f64::max);
        v[w] = best_other + 1.0 + 0.1;
        let p = sparsemax(&v);
        prop_assert!((p[w] - 1.0).abs() < 1e-12);
        let nonzero = p.iter().filter(|&&x| x > 0.0).count();
        prop_assert_eq!(nonzero, 1);
    }

    #[test]
    fn sparsemax_argmax_matches_input_argmax(v in prop::collection::vec(-5.0f64..5.0, 2..9)) {
        let p = sparsemax(&v);
        let arg_in = (0..v.len()).max_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap()).unwrap();
        let arg_out = (0..p.len()).max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap()).unwrap();
        prop_assert!((p[arg_in] - p[arg_out]).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_transform(
        scores in prop::collection::vec(-4.0f64..4.0, 6..40),
        labels in prop::collection::vec(any::<bool>(), 6..40),
    ) {
        let n = scores.len().min(labels.len());
        let scores = &scores[..n];
        let labels = &labels[..n];
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let base = metrics::auc(scores, labels).unwrap();
        // Strictly monotone: 2x + exp-squash.
        let transformed: Vec<f64> = scores.iter().map(|&s| 2.0 * s + (s / 3.0).tanh()).collect();
        let got = metrics::auc(&transformed, labels).unwrap();
        prop_assert!((base - got).abs() < 1e-12);
    }

    #[test]
    fn f1_and_accuracy_match_confusion_matrix(
        preds in prop::collection::vec(any::<bool>(), 4..30),
        labels in prop::collection::vec(any::<bool>(), 4..30),
    ) {
        let n = preds.len().min(labels.len());
        let (preds, labels) = (&preds[..n], &labels[..n]);
        let (mut tp, mut fp, mut tn, mut fn_) = (0f64, 0f64, 0f64, 0f64);
        for (&p, &l) in preds.iter().zip(labels) {
            match (p, l) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, false) => tn += 1.0,
                (false, true) => fn_ += 1.0,
            }
        }
        let acc = (tp + tn) / n as f64;
        prop_assert!((metrics::accuracy(preds, labels) - acc).abs() < 1e-12);
        let expected_f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
        prop_assert!((metrics::f1(preds, labels) - expected_f1).abs() < 1e-12);
    }

    #[test]
    fn tree_invariants_on_random_data(
        seed in 0u64..500,
        n in 12usize..48,
        min_leaf in 1usize..5,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
        let tree = dtree::train_tree(&x, &y, min_leaf).unwrap();

        // APL of any tree is at most its maximum depth and at least 0.
        let apl: f64 = (0..n).map(|i| tree.path_length(x.row(i)) as f64).sum::<f64>() / n as f64;
        prop_assert!(apl >= 0.0 && apl <= tree.depth() as f64);

        // Pruning never reduces accuracy on the pruning set.
        let x_prune = Matrix::from_fn(n / 2, 2, |i, j| x.get(i, j));
        let y_prune: Vec<bool> = y[..n / 2].to_vec();
        let pruned = dtree::prune_tree(&tree, &x_prune, &y_prune);
        let acc = |t: &treereg::DecisionTree| {
            (0..x_prune.rows())
                .filter(|&i| t.predict(x_prune.row(i)) == y_prune[i])
                .count()
        };
        prop_assert!(acc(&pruned) >= acc(&tree));

        // Pruning never increases APL.
        let apl_pruned: f64 =
            (0..n).map(|i| pruned.path_length(x.row(i)) as f64).sum::<f64>() / n as f64;
        prop_assert!(apl_pruned <= apl + 1e-12);
    }

    #[test]
    fn gru_state_stays_in_unit_box(
        seed in 0u64..200,
        scale in 1.0f64..30.0,
        t_len in 1usize..12,
    ) {
        use rand::{Rng, SeedableRng};
        let mut model = GruModel::new(3, 4, 1, seed);
        let inflated: Vec<f64> = model.params().values().iter().map(|v| v * scale).collect();
        model.set_params(&inflated).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 77);
        let seq = Matrix::from_fn(t_len, 3, |_, _| rng.gen_range(-10.0..10.0));
        let hidden = model.hidden_seq(&seq).unwrap();
        for &v in hidden.data() {
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn buffer_never_holds_stale_samples(
        steps in prop::collection::vec(0u64..40, 1..30),
        window in 1u64..20,
        capacity in 1usize..10,
    ) {
        let mut sorted = steps.clone();
        sorted.sort_unstable();
        let mut state = SurrogateState::new(2, 4, 0);
        state.window = window;
        state.capacity = capacity;
        for &s in &sorted {
            state.record_sample(vec![s as f64, 0.0], 1.0, s);
        }
        let now = *sorted.last().unwrap();
        prop_assert!(state.buffer_len() <= capacity);
        for sample in state.buffer() {
            prop_assert!(sample.step + window >= now);
        }
    }

    #[test]
    fn param_vector_roundtrip(vals in finite_vec(12, 50.0)) {
        let m1 = Matrix::from_vec(2, 3, vals[..6].to_vec()).unwrap();
        let m2 = Matrix::from_vec(3, 2, vals[6..].to_vec()).unwrap();
        let pv = treereg::ParamVector::from_named(&[("a", &m1), ("b", &m2)]);
        let parts = pv.unflatten();
        let pv2 = treereg::ParamVector::from_named(&[("a", &parts[0].1), ("b", &parts[1].1)]);
        prop_assert_eq!(pv.values(), pv2.values());
    }
}

#[test]
fn apl_evaluation_params_distinguish_pruned_and_unpruned() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let x = Matrix::from_fn(60, 2, |_, _| rng.gen_range(0.0..1.0));
    // Noisy labels: pruning on a holdout should simplify the tree.
    let labels: Vec<bool> = (0..60)
        .map(|i| x.get(i, 0) > 0.5 || rng.gen::<f64>() < 0.15)
        .collect();
    let (_, pruned) = dtree::distill_with(&x, &labels, AplParams::pruned(1, 0.3)).unwrap();
    let (_, unpruned) = dtree::distill_with(&x, &labels, AplParams::unpruned(1)).unwrap();
    assert!(pruned <= unpruned, "pruned {pruned} vs unpruned {unpruned}");
}

#[test]
fn signal_noise_generator_split_disjoint_exhaustive() {
    let d = gen_signal_noise_hmm(9);
    let train = d.indices_of(treereg::data::Split::Train).len();
    let test = d.indices_of(treereg::data::Split::Test).len();
    assert_eq!(train + test, d.sequences.len());
}
