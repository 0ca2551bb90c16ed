//! End-to-end harness behavior on desk-scale budgets: sanity training,
//! reproducibility, sweep re-entrancy, baselines, distillation, and the
//! failure paths.

use treereg::data::CsvSchema;
use treereg::harness::{
    load_checkpoint, read_retrain_reports, read_tracking, read_tradeoff, run_baseline_trees,
    run_distill, run_sweep, run_train, DatasetSpec, ModelSpec, RegionSpec, RunConfig,
};
use treereg::models::{DistillFeatures, HiddenActivation};
use treereg::regularize::RegularizerKind;
use treereg::Error;

fn tiny_parabola_config(regularizer: RegularizerKind, lambda: f64) -> RunConfig {
    let mut config = RunConfig::preset("parabola").unwrap();
    config.model = ModelSpec::Mlp {
        hidden: vec![16],
        activation: HiddenActivation::LeakyRelu,
    };
    config.regularizer = regularizer;
    config.lambda = lambda;
    config.optimizer.epochs = 150;
    config.optimizer.learning_rate = 1e-2;
    config.surrogate.retrain_every_steps = 100;
    config.surrogate.augment_count = 30;
    config.surrogate.train_epochs = 30;
    config.surrogate.restarts = 1;
    config.surrogate.restart_epochs = 3;
    config
}

#[test]
fn unregularized_tiny_mlp_fits_parabola() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_parabola_config(RegularizerKind::None, 0.0);
    let out = run_train(&config, dir.path()).unwrap();
    assert!(
        out.record.train.accuracy > 0.9,
        "train accuracy {}",
        out.record.train.accuracy
    );
    // Artifacts exist.
    assert!(dir.path().join("config.resolved").exists());
    assert!(dir.path().join("metrics.csv").exists());
    assert!(dir.path().join("checkpoints/final.json").exists());
    assert!(dir.path().join("trees/region-0-output-0.dot").exists());
    // The checkpoint round-trips.
    let model = load_checkpoint(&dir.path().join("checkpoints/final.json")).unwrap();
    assert_eq!(model.family(), "mlp");
}

#[test]
fn identical_config_and_seed_reproduce_identical_outputs() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let mut config = tiny_parabola_config(RegularizerKind::TreeGlobal, 0.5);
    config.optimizer.epochs = 30;
    let a = run_train(&config, dir_a.path()).unwrap();
    let b = run_train(&config, dir_b.path()).unwrap();
    let csv_a = std::fs::read_to_string(dir_a.path().join("metrics.csv")).unwrap();
    let csv_b = std::fs::read_to_string(dir_b.path().join("metrics.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    assert_eq!(a.record.test.auc, b.record.test.auc);
    assert_eq!(a.record.test.apl_eval, b.record.test.apl_eval);
}

#[test]
fn tree_regularized_run_logs_retrains_and_tracking() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_parabola_config(RegularizerKind::TreeGlobal, 0.5);
    config.optimizer.epochs = 60;
    run_train(&config, dir.path()).unwrap();
    let retrains = read_retrain_reports(&dir.path().join("metrics.csv")).unwrap();
    assert!(!retrains.is_empty());
    assert!(retrains.iter().all(|r| r.buffer_size > 0));
    let tracking = read_tracking(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(tracking.len(), retrains.len());
    assert!(tracking.iter().all(|t| t.true_apl >= 0.0));
}

#[test]
fn sweep_single_cell_and_reentry() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_parabola_config(RegularizerKind::L2, 0.0);
    config.optimizer.epochs = 20;
    config.sweep_regularizers = vec![RegularizerKind::L2];
    config.lambda_grid = vec![0.01];
    config.seeds = vec![7];
    let summary = run_sweep(&config, dir.path()).unwrap();
    assert_eq!(summary.completed.len(), 1);
    assert!(summary.failures.is_empty());
    let first = std::fs::read_to_string(dir.path().join("tradeoff.csv")).unwrap();
    let rows = read_tradeoff(&dir.path().join("tradeoff.csv")).unwrap();
    assert_eq!(rows.len(), 2); // train + test

    // Re-running a completed sweep adds nothing and changes nothing.
    let summary = run_sweep(&config, dir.path()).unwrap();
    assert_eq!(summary.completed.len(), 0);
    let second = std::fs::read_to_string(dir.path().join("tradeoff.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn baseline_trees_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_parabola_config(RegularizerKind::None, 0.0);
    config.prune_fraction = 0.2;
    // h = N yields a single leaf: APL 0 and majority-rate accuracy.
    let records = run_baseline_trees(&config, &[1, 500], false, dir.path()).unwrap();
    assert_eq!(records.len(), 2);
    let deep = &records[0];
    let stump = &records[1];
    assert_eq!(stump.train.apl_eval, 0.0);
    // Majority-class rate on the parabola training split.
    let data = treereg::data::gen_parabola(0, 0.1);
    let train_idx = data.indices_of(treereg::data::Split::Train);
    let pos = train_idx
        .iter()
        .filter(|&&i| data.y.get(i, 0) > 0.5)
        .count() as f64;
    let majority = (pos / train_idx.len() as f64).max(1.0 - pos / train_idx.len() as f64);
    assert!((stump.train.accuracy - majority).abs() < 1e-9);
    // h = 1 on mostly-consistent data fits the training split closely; the
    // pruned tree keeps high accuracy.
    assert!(deep.train.accuracy > 0.9, "got {}", deep.train.accuracy);
    assert!(deep.train.apl_eval > 0.0);
}

#[test]
fn distill_constant_model_gives_single_leaf_full_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_parabola_config(RegularizerKind::None, 0.0);
    config.optimizer.epochs = 1;
    let out = run_train(&config, dir.path()).unwrap();
    // Zero out every parameter: the model prediction becomes the constant 0.5
    // and its thresholded labels are constant.
    let mut model = out.model;
    let zeros = vec![0.0; model.params().len()];
    model.set_params(&zeros).unwrap();
    let ckpt = dir.path().join("checkpoints/zeroed.json");
    treereg::harness::write_checkpoint(&model, &ckpt).unwrap();
    let report = run_distill(&ckpt, &config, &dir.path().join("distill")).unwrap();
    assert_eq!(report.trees.len(), 1);
    assert_eq!(report.trees[0].tree.n_internal(), 0);
    assert_eq!(report.overall_fidelity, 1.0);
    assert!(dir.path().join("distill/fidelity.csv").exists());
}

#[test]
fn nan_loss_aborts_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_parabola_config(RegularizerKind::L1, 1e308);
    config.optimizer.epochs = 2;
    match run_train(&config, dir.path()) {
        Err(Error::NonFiniteLoss {
            weighted_penalty, ..
        }) => {
            assert!(!weighted_penalty.is_finite() || weighted_penalty.abs() > 1e100);
        }
        Err(other) => panic!("expected non-finite-loss abort, got {other}"),
        Ok(_) => panic!("expected non-finite-loss abort, run succeeded"),
    }
}

#[test]
fn csv_dataset_with_regions_trains_regionally() {
    // A two-region toy written as CSV: left half needs one split, right half
    // three stripes. Exercises the csv path, interval regions, and the L0
    // regional penalty end to end.
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("toy.csv");
    let mut text = String::from("x0,x1,label\n");
    let mut k = 0u32;
    for i in 0..40 {
        for j in 0..10 {
            let x0 = (i as f64 + 0.5) / 40.0;
            let x1 = (j as f64 + 0.5) / 10.0;
            let label = if x0 <= 0.5 {
                x1 > 0.5
            } else {
                ((x1 * 3.0).floor() as usize) % 2 == 0
            };
            text.push_str(&format!("{x0},{x1},{}\n", u8::from(label)));
            k += 1;
        }
    }
    assert_eq!(k, 400);
    std::fs::write(&csv_path, text).unwrap();

    let mut schema = CsvSchema::wine();
    schema.target = "label".to_string();
    schema.positive_threshold = 0.5;
    schema.delimiter = ',';
    schema.zscore = false;
    schema.test_fraction = 0.25;

    let mut config = RunConfig::preset("five-rectangles").unwrap();
    config.experiment = "toy-two-region".to_string();
    config.dataset = DatasetSpec::Csv {
        path: csv_path,
        schema,
    };
    config.model = ModelSpec::Mlp {
        hidden: vec![12],
        activation: HiddenActivation::Tanh,
    };
    config.regions = RegionSpec::FeatureIntervals {
        feature: 0,
        edges: vec![0.5],
    };
    config.regularizer = RegularizerKind::TreeRegionalL0;
    config.lambda = 0.01;
    config.optimizer.epochs = 25;
    config.optimizer.batch_size = 64;
    config.optimizer.learning_rate = 1e-2;
    config.surrogate.augment_count = 25;
    config.surrogate.train_epochs = 20;
    config.surrogate.retrain_every_steps = 20;
    config.surrogate.restarts = 1;
    config.surrogate.restart_epochs = 2;
    config.distill_features = DistillFeatures::InputsOnly;

    let out = run_train(&config, &dir.path().join("run")).unwrap();
    // Both regions produced a distilled tree.
    let regions: std::collections::BTreeSet<usize> =
        out.trees.iter().map(|t| t.region).collect();
    assert_eq!(regions.len(), 2);
    // Regional retrain rows carry region indices.
    let retrains = read_retrain_reports(&dir.path().join("run/metrics.csv")).unwrap();
    assert!(retrains.iter().any(|r| r.region == Some(0)));
    assert!(retrains.iter().any(|r| r.region == Some(1)));
}
