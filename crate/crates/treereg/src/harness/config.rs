//! Run configuration: TOML-serializable, with named presets for the three
//! synthetic benchmarks and the Wine task.

use crate::data::CsvSchema;
use crate::error::{Error, Result};
use crate::models::{DistillFeatures, HiddenActivation};
use crate::regularize::RegularizerKind;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    Parabola {
        seed: u64,
        #[serde(default = "default_noise_band")]
        noise_band: f64,
    },
    FiveRectangles {
        seed: u64,
        #[serde(default = "default_grid")]
        grid: usize,
    },
    SignalNoise {
        seed: u64,
    },
    Csv {
        path: PathBuf,
        schema: CsvSchema,
    },
}

fn default_noise_band() -> f64 {
    0.1
}

fn default_init_scale() -> f64 {
    1.0
}

fn default_grid() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    Mlp {
        /// Hidden layer sizes; input and output are inferred from the data.
        hidden: Vec<usize>,
        activation: HiddenActivation,
    },
    Gru {
        state_dim: usize,
    },
    Hmm {
        states: usize,
        #[serde(default)]
        gaussian: bool,
    },
    GruHmm {
        hmm_states: usize,
        gru_state_dim: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegionSpec {
    None,
    KMeans { k: usize, seed: u64 },
    /// Buckets of one raw input feature at the given ascending edges.
    FeatureIntervals { feature: usize, edges: Vec<f64> },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub hidden: usize,
    /// J: buffer capacity.
    pub capacity: usize,
    /// E: samples older than this many optimizer steps are evicted.
    pub window_steps: u64,
    pub retrain_every_steps: usize,
    pub train_epochs: usize,
    pub learning_rate: f64,
    /// Ridge strength on surrogate weights in the fit objective.
    pub epsilon: f64,
    /// Convex-hull samples added per retrain.
    pub augment_count: usize,
    /// Short unregularized runs harvested before training starts.
    pub restarts: usize,
    pub restart_epochs: usize,
    /// Rescale surrogate APLs before sparsemax (documented toggle, off by
    /// default: projection inputs are raw APL estimates).
    pub normalize_sparsemax: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            hidden: 25,
            capacity: 100,
            window_steps: 200,
            retrain_every_steps: 100,
            train_epochs: 40,
            learning_rate: 1e-2,
            epsilon: 1e-4,
            augment_count: 250,
            restarts: 2,
            restart_epochs: 10,
            normalize_sparsemax: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: String,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub regularizer: RegularizerKind,
    pub lambda: f64,
    /// Sweep grid; `lambda` is used by single runs.
    pub lambda_grid: Vec<f64>,
    /// Regularizers crossed with the grid by `sweep`.
    pub sweep_regularizers: Vec<RegularizerKind>,
    pub seed: u64,
    /// Sweep seeds; single runs use `seed`.
    pub seeds: Vec<u64>,
    /// h: minimum training samples per tree leaf.
    pub min_leaf: usize,
    pub prune_fraction: f64,
    /// Use the original unpruned path-length cost instead of the pruned
    /// variant, for reproducing the global-regularizer experiments.
    #[serde(default)]
    pub unpruned_apl: bool,
    /// Multiplier on the initial weights. The glorot-uniform default (1.0)
    /// starts networks with tame decision boundaries; the overfitting
    /// demonstrations start wild and rely on regularization to simplify.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    pub surrogate: SurrogateConfig,
    pub optimizer: OptimizerConfig,
    pub regions: RegionSpec,
    pub distill_features: DistillFeatures,
    /// Checkpoint every this many epochs (0 = final only).
    pub checkpoint_every: usize,
}

impl RunConfig {
    pub fn apl_params(&self) -> crate::dtree::AplParams {
        if self.unpruned_apl {
            crate::dtree::AplParams::unpruned(self.min_leaf)
        } else {
            crate::dtree::AplParams::pruned(self.min_leaf, self.prune_fraction)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.lambda_grid.iter().any(|&l| l < 0.0) {
            return Err(Error::Config("lambda values must be >= 0".to_string()));
        }
        if self.optimizer.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".to_string()));
        }
        if self.optimizer.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".to_string()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf (h) must be >= 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.prune_fraction) {
            return Err(Error::Config(
                "prune_fraction must lie in [0, 1)".to_string(),
            ));
        }
        if let DatasetSpec::Csv { path, .. } = &self.dataset {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "csv dataset not found at {}",
                    path.display()
                )));
            }
        }
        if let RegionSpec::File { path } = &self.regions {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "region map not found at {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Stable fingerprint of the resolved configuration.
    pub fn hash(&self) -> String {
        let text = self.to_toml();
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    /// Named experiment presets.
    pub fn preset(name: &str) -> Result<RunConfig> {
        match name {
            "parabola" => Ok(RunConfig {
                experiment: "parabola".to_string(),
                dataset: DatasetSpec::Parabola {
                    seed: 0,
                    noise_band: 0.6,
                },
                model: ModelSpec::Mlp {
                    hidden: vec![100, 100, 10],
                    activation: HiddenActivation::LeakyRelu,
                },
                regularizer: RegularizerKind::TreeGlobal,
                lambda: 1.0,
                lambda_grid: crate::regularize::default_lambda_grid(),
                sweep_regularizers: vec![
                    RegularizerKind::L1,
                    RegularizerKind::L2,
                    RegularizerKind::TreeGlobal,
                ],
                seed: 0,
                seeds: vec![0],
                min_leaf: 1,
                prune_fraction: 0.2,
                unpruned_apl: true,
                init_scale: 6.0,
                surrogate: SurrogateConfig {
                    retrain_every_steps: 100, // every 25 epochs at batch 100
                    window_steps: 200,
                    augment_count: 100,
                    train_epochs: 20,
                    learning_rate: 2e-2,
                    restarts: 2,
                    restart_epochs: 10,
                    ..SurrogateConfig::default()
                },
                optimizer: OptimizerConfig {
                    learning_rate: 1e-3,
                    batch_size: 100,
                    epochs: 1000,
                },
                regions: RegionSpec::None,
                distill_features: DistillFeatures::InputsOnly,
                checkpoint_every: 0,
            }),
            "signal-noise" => Ok(RunConfig {
                experiment: "signal-noise".to_string(),
                dataset: DatasetSpec::SignalNoise { seed: 0 },
                model: ModelSpec::Gru { state_dim: 25 },
                regularizer: RegularizerKind::TreeGlobal,
                lambda: 100.0,
                lambda_grid: crate::regularize::default_lambda_grid(),
                sweep_regularizers: vec![
                    RegularizerKind::L1,
                    RegularizerKind::L2,
                    RegularizerKind::TreeGlobal,
                ],
                seed: 0,
                seeds: vec![0],
                min_leaf: 10,
                prune_fraction: 0.2,
                unpruned_apl: true,
                init_scale: 1.0,
                surrogate: SurrogateConfig {
                    retrain_every_steps: 25, // every 25 epochs at full-batch
                    window_steps: 100,
                    augment_count: 100,
                    train_epochs: 60,
                    restarts: 2,
                    restart_epochs: 15,
                    ..SurrogateConfig::default()
                },
                optimizer: OptimizerConfig {
                    learning_rate: 1e-3,
                    batch_size: 100,
                    epochs: 250,
                },
                regions: RegionSpec::None,
                distill_features: DistillFeatures::InputsAndState,
                checkpoint_every: 0,
            }),
            "five-rectangles" => Ok(RunConfig {
                experiment: "five-rectangles".to_string(),
                dataset: DatasetSpec::FiveRectangles { seed: 0, grid: 100 },
                model: ModelSpec::Mlp {
                    hidden: vec![32, 32],
                    activation: HiddenActivation::LeakyRelu,
                },
                regularizer: RegularizerKind::TreeRegionalL0,
                lambda: 0.1,
                lambda_grid: crate::regularize::default_lambda_grid(),
                sweep_regularizers: vec![
                    RegularizerKind::None,
                    RegularizerKind::L2,
                    RegularizerKind::TreeGlobal,
                    RegularizerKind::TreeRegionalL1,
                    RegularizerKind::TreeRegionalL0,
                ],
                seed: 0,
                seeds: vec![0],
                min_leaf: 1,
                prune_fraction: 0.2,
                unpruned_apl: false,
                init_scale: 1.0,
                surrogate: SurrogateConfig {
                    retrain_every_steps: 50,
                    window_steps: 150,
                    augment_count: 1000,
                    train_epochs: 15,
                    restarts: 2,
                    restart_epochs: 10,
                    ..SurrogateConfig::default()
                },
                optimizer: OptimizerConfig {
                    learning_rate: 4e-3,
                    batch_size: 32,
                    epochs: 500,
                },
                regions: RegionSpec::FeatureIntervals {
                    feature: 0,
                    edges: vec![1.0, 2.0, 3.0, 4.0],
                },
                distill_features: DistillFeatures::InputsOnly,
                checkpoint_every: 0,
            }),
            "wine" => Ok(RunConfig {
                experiment: "wine".to_string(),
                dataset: DatasetSpec::Csv {
                    path: PathBuf::from("data/winequality-white.csv"),
                    schema: CsvSchema::wine(),
                },
                model: ModelSpec::Mlp {
                    hidden: vec![32, 32],
                    activation: HiddenActivation::LeakyRelu,
                },
                regularizer: RegularizerKind::TreeRegionalL0,
                lambda: 0.1,
                lambda_grid: crate::regularize::default_lambda_grid(),
                sweep_regularizers: vec![
                    RegularizerKind::TreeGlobal,
                    RegularizerKind::TreeRegionalL0,
                ],
                seed: 0,
                seeds: vec![0, 1, 2],
                min_leaf: 25,
                prune_fraction: 0.2,
                unpruned_apl: false,
                init_scale: 1.0,
                surrogate: SurrogateConfig {
                    retrain_every_steps: 50,
                    window_steps: 150,
                    augment_count: 250,
                    train_epochs: 15,
                    ..SurrogateConfig::default()
                },
                optimizer: OptimizerConfig {
                    learning_rate: 1e-4,
                    batch_size: 128,
                    epochs: 150,
                },
                regions: RegionSpec::KMeans { k: 5, seed: 0 },
                distill_features: DistillFeatures::InputsOnly,
                checkpoint_every: 0,
            }),
            other => Err(Error::Config(format!(
                "unknown experiment preset '{other}' (expected parabola, signal-noise, five-rectangles, or wine)"
            ))),
        }
    }
}
