//! Command line for tree-regularized training: dataset generation, single
//! runs, sweeps, distillation, baselines, and checkpoint evaluation.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure,
//! 3 partial sweep failure.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use treereg::harness::{
    evaluate_model, load_checkpoint, load_dataset, run_baseline_trees, run_distill, run_sweep,
    run_train, DatasetSpec, RunConfig,
};
use treereg::models::DistillFeatures;
use treereg::regularize::RegularizerKind;

#[derive(Parser)]
#[command(name = "treereg", version, about = "Train neural networks under tree regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Named experiment preset: parabola, signal-noise, five-rectangles, wine.
    #[arg(long)]
    experiment: Option<String>,
    /// TOML config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    regularizer: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated sweep grid.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated sweep seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated regularizers for sweeps.
    #[arg(long, value_delimiter = ',')]
    regularizers: Option<Vec<String>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Minimum training samples per tree leaf (h).
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    prune_fraction: Option<f64>,
    #[arg(long)]
    retrain_every: Option<usize>,
    #[arg(long)]
    augment: Option<usize>,
    /// inputs-only or inputs-and-state.
    #[arg(long)]
    distill_features: Option<String>,
    /// Replace the region spec with k-means over this many clusters.
    #[arg(long)]
    kmeans_k: Option<usize>,
    /// Dataset generator seed override.
    #[arg(long)]
    data_seed: Option<u64>,
}

fn parse_regularizer(name: &str) -> Result<RegularizerKind, String> {
    Ok(match name {
        "none" => RegularizerKind::None,
        "l1" => RegularizerKind::L1,
        "l2" => RegularizerKind::L2,
        "tree-global" => RegularizerKind::TreeGlobal,
        "tree-regional-l1" => RegularizerKind::TreeRegionalL1,
        "tree-regional-l0" => RegularizerKind::TreeRegionalL0,
        other => {
            return Err(format!(
                "unknown regularizer '{other}' (none, l1, l2, tree-global, tree-regional-l1, tree-regional-l0)"
            ))
        }
    })
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, treereg::Error> {
        let mut config = match (&self.config, &self.experiment) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => {
                return Err(treereg::Error::Config(
                    "pass --experiment <preset> or --config <file>".to_string(),
                ))
            }
        };
        if let Some(r) = &self.regularizer {
            config.regularizer = parse_regularizer(r).map_err(treereg::Error::Config)?;
        }
        if let Some(l) = self.lambda {
            config.lambda = l;
        }
        if let Some(ls) = &self.lambdas {
            config.lambda_grid = ls.clone();
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(ss) = &self.seeds {
            config.seeds = ss.clone();
        }
        if let Some(rs) = &self.regularizers {
            config.sweep_regularizers = rs
                .iter()
                .map(|r| parse_regularizer(r))
                .collect::<Result<_, _>>()
                .map_err(treereg::Error::Config)?;
        }
        if let Some(e) = self.epochs {
            config.optimizer.epochs = e;
        }
        if let Some(b) = self.batch_size {
            config.optimizer.batch_size = b;
        }
        if let Some(lr) = self.learning_rate {
            config.optimizer.learning_rate = lr;
        }
        if let Some(h) = self.min_leaf {
            config.min_leaf = h;
        }
        if let Some(p) = self.prune_fraction {
            config.prune_fraction = p;
        }
        if let Some(r) = self.retrain_every {
            config.surrogate.retrain_every_steps = r;
        }
        if let Some(a) = self.augment {
            config.surrogate.augment_count = a;
        }
        if let Some(df) = &self.distill_features {
            config.distill_features = match df.as_str() {
                "inputs-only" => DistillFeatures::InputsOnly,
                "inputs-and-state" => DistillFeatures::InputsAndState,
                other => {
                    return Err(treereg::Error::Config(format!(
                        "unknown distill features '{other}'"
                    )))
                }
            };
        }
        if let Some(k) = self.kmeans_k {
            config.regions = treereg::harness::RegionSpec::KMeans {
                k,
                seed: config.seed,
            };
        }
        if let Some(ds) = self.data_seed {
            match &mut config.dataset {
                DatasetSpec::Parabola { seed, .. } => *seed = ds,
                DatasetSpec::FiveRectangles { seed, .. } => *seed = ds,
                DatasetSpec::SignalNoise { seed } => *seed = ds,
                DatasetSpec::Csv { schema, .. } => schema.split_seed = ds,
            }
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and cache it as CSV plus a split sidecar.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write its run directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross lambda grid x seeds x regularizers; emit tradeoff.csv.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distill a checkpoint into decision trees with a fidelity report.
    Distill {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decision trees fit directly on labels, across a leaf-size grid.
    BaselineTrees {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated h values.
        #[arg(long, value_delimiter = ',', default_value = "1,5,25,125")]
        h_grid: Vec<usize>,
        /// One tree per region instead of one global tree.
        #[arg(long)]
        regional: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on its dataset and print metrics as JSON.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn write_dataset_cache(config: &RunConfig, out: &PathBuf) -> Result<(), treereg::Error> {
    use std::io::Write;
    use treereg::harness::LoadedData;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let data = load_dataset(&config.dataset)?;
    let mut f = std::fs::File::create(out)?;
    let sidecar = out.with_extension("splits");
    let mut s = std::fs::File::create(&sidecar)?;
    match &data {
        LoadedData::Tabular(d) => {
            let names = d.feature_names.join(",");
            let ys: Vec<String> = (0..d.y.cols()).map(|q| format!("y{q}")).collect();
            writeln!(f, "{},{}", names, ys.join(","))?;
            for i in 0..d.n() {
                let mut row: Vec<String> = d.x.row(i).iter().map(|v| format!("{v}")).collect();
                row.extend(d.y.row(i).iter().map(|v| format!("{v}")));
                writeln!(f, "{}", row.join(","))?;
                writeln!(s, "{:?}", d.split[i])?;
            }
        }
        LoadedData::Sequences(d) => {
            let names = d.feature_names.join(",");
            let q = d.sequences[0].y.cols();
            let ys: Vec<String> = (0..q).map(|i| format!("y{i}")).collect();
            writeln!(f, "seq,t,{},{}", names, ys.join(","))?;
            for (si, seq) in d.sequences.iter().enumerate() {
                for t in 0..seq.x.rows() {
                    let mut row = vec![si.to_string(), t.to_string()];
                    row.extend(seq.x.row(t).iter().map(|v| format!("{v}")));
                    row.extend(seq.y.row(t).iter().map(|v| format!("{v}")));
                    writeln!(f, "{}", row.join(","))?;
                }
                writeln!(s, "{:?}", seq.split)?;
            }
        }
    }
    println!("wrote {} and {}", out.display(), sidecar.display());
    Ok(())
}

fn run() -> Result<i32, treereg::Error> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print and exit cleanly; misuse is a config error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return Ok(code);
        }
    };
    match cli.command {
        Command::GenData { config, out } => {
            let config = config.resolve()?;
            write_dataset_cache(&config, &out)?;
        }
        Command::Train { config, out } => {
            let config = config.resolve()?;
            let output = run_train(&config, &out)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&output.record)
                    .unwrap_or_else(|_| "run complete".to_string())
            );
        }
        Command::Sweep { config, out } => {
            let config = config.resolve()?;
            let summary = run_sweep(&config, &out)?;
            println!(
                "sweep: {} completed, {} skipped, {} failed; tradeoff at {}",
                summary.completed.len(),
                summary.skipped,
                summary.failures.len(),
                out.join("tradeoff.csv").display()
            );
            if !summary.failures.is_empty() {
                return Ok(3);
            }
        }
        Command::Distill {
            config,
            checkpoint,
            out,
        } => {
            let config = config.resolve()?;
            let report = run_distill(&checkpoint, &config, &out)?;
            println!(
                "distilled {} trees, overall fidelity {:.4}",
                report.trees.len(),
                report.overall_fidelity
            );
        }
        Command::BaselineTrees {
            config,
            h_grid,
            regional,
            out,
        } => {
            let config = config.resolve()?;
            let records = run_baseline_trees(&config, &h_grid, regional, &out)?;
            for r in &records {
                println!(
                    "h={:>5}: test acc {:.4}, test apl {:.3}",
                    r.lambda as usize, r.test.accuracy, r.test.apl_eval
                );
            }
        }
        Command::Eval { config, checkpoint } => {
            let config = config.resolve()?;
            let model = load_checkpoint(&checkpoint)?;
            let data = load_dataset(&config.dataset)?;
            let partition = treereg::harness::dataset::build_partition(&config.regions, &data)?;
            let bundle = evaluate_model(&model, &data, partition.as_ref(), &config)?;
            let summary = serde_json::json!({
                "train": bundle.train,
                "test": bundle.test,
                "valid": bundle.valid,
            });
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e @ treereg::Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
