//! Exercise the binary end to end: subcommands, config file handling, flag
//! overrides, and exit codes.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_treereg"))
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["gen-data", "train", "sweep", "distill", "baseline-trees", "eval"] {
        assert!(text.contains(sub), "help is missing {sub}");
    }
}

#[test]
fn bad_preset_is_config_error_exit_1() {
    let out = bin()
        .args(["train", "--experiment", "bogus", "--out", "/tmp/unused"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_flags_are_config_errors() {
    let out = bin().args(["train", "--out", "/tmp/unused"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gen_data_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("parabola.csv");
    let out = bin()
        .args(["gen-data", "--experiment", "parabola"])
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("x0,x1,y0"));
    assert_eq!(body.lines().count(), 501);
    let splits = std::fs::read_to_string(dir.path().join("parabola.splits")).unwrap();
    assert_eq!(splits.lines().count(), 500);
}

#[test]
fn train_with_config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    // Start from a preset, shrink it, write as a config file.
    let mut config = treereg::harness::RunConfig::preset("parabola").unwrap();
    config.model = treereg::harness::ModelSpec::Mlp {
        hidden: vec![8],
        activation: treereg::models::HiddenActivation::Tanh,
    };
    config.optimizer.epochs = 5;
    config.regularizer = treereg::regularize::RegularizerKind::None;
    let config_path = dir.path().join("run.toml");
    std::fs::write(&config_path, config.to_toml()).unwrap();

    let run_dir = dir.path().join("run");
    let out = bin()
        .arg("train")
        .arg("--config")
        .arg(&config_path)
        .args(["--regularizer", "l2", "--lambda", "0.001", "--epochs", "3"])
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // The resolved snapshot reflects the flag overrides.
    let resolved = std::fs::read_to_string(run_dir.join("config.resolved")).unwrap();
    assert!(resolved.contains("regularizer = \"l2\""));
    assert!(resolved.contains("epochs = 3"));
    assert!(run_dir.join("metrics.csv").exists());
    assert!(run_dir.join("checkpoints/final.json").exists());

    // Eval the produced checkpoint through the CLI.
    let out = bin()
        .arg("eval")
        .arg("--config")
        .arg(&config_path)
        .arg("--checkpoint")
        .arg(run_dir.join("checkpoints/final.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"auc\""));
}

#[test]
fn sweep_and_distill_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = treereg::harness::RunConfig::preset("parabola").unwrap();
    config.model = treereg::harness::ModelSpec::Mlp {
        hidden: vec![8],
        activation: treereg::models::HiddenActivation::Tanh,
    };
    config.optimizer.epochs = 4;
    let config_path = dir.path().join("run.toml");
    std::fs::write(&config_path, config.to_toml()).unwrap();

    let sweep_dir = dir.path().join("sweep");
    let out = bin()
        .arg("sweep")
        .arg("--config")
        .arg(&config_path)
        .args(["--regularizers", "l2", "--lambdas", "0.01", "--seeds", "0"])
        .arg("--out")
        .arg(&sweep_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(sweep_dir.join("tradeoff.csv").exists());

    let ckpt = sweep_dir.join("runs");
    let run_dir = std::fs::read_dir(&ckpt).unwrap().next().unwrap().unwrap();
    let out = bin()
        .arg("distill")
        .arg("--config")
        .arg(&config_path)
        .arg("--checkpoint")
        .arg(run_dir.path().join("checkpoints/final.json"))
        .arg("--out")
        .arg(dir.path().join("distilled"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("distilled/fidelity.csv").exists());
}
