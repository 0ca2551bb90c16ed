//! Orchestration: run configuration, training runs, sweeps, distillation,
//! and baselines.

mod baseline;
pub mod config;
pub mod dataset;
mod distill;
mod eval;
mod report;
mod sweep;
mod train;

pub use baseline::run_baseline_trees;
pub use config::{
    DatasetSpec, ModelSpec, OptimizerConfig, RegionSpec, RunConfig, SurrogateConfig,
};
pub use dataset::{load_dataset, LoadedData};
pub use distill::{run_distill, DistillReport};
pub use eval::{distill_model, evaluate_model, trees_fidelity, DistilledTree, EvalBundle};
pub use report::{
    correlation, read_retrain_reports, read_tracking, read_tradeoff, MetricsLogger, RetrainPoint,
    SweepRecord, TrackingPoint, TradeoffRow, METRICS_HEADER, TRADEOFF_HEADER,
};
pub use sweep::{run_sweep, SweepSummary};
pub use train::{init_model, load_checkpoint, run_train, write_checkpoint, TrainOutput};
