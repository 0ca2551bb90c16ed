//! Standalone distillation of a trained checkpoint into decision trees.

use crate::data::Split;
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::dataset::{build_partition, load_dataset, model_rows};
use crate::harness::eval::{distill_model, DistilledTree};
use crate::harness::train::load_checkpoint;
use std::io::Write;
use std::path::Path;

pub struct DistillReport {
    pub trees: Vec<DistilledTree>,
    /// Per-tree fidelity on the held-out split.
    pub fidelities: Vec<f64>,
    pub overall_fidelity: f64,
}

/// Train pruned trees per region and output from a checkpointed model's
/// predictions, write DOT and JSON renderings plus a fidelity table.
pub fn run_distill(checkpoint: &Path, config: &RunConfig, out_dir: &Path) -> Result<DistillReport> {
    std::fs::create_dir_all(out_dir)?;
    let model = load_checkpoint(checkpoint)?;
    let data = load_dataset(&config.dataset)?;
    let partition = build_partition(&config.regions, &data)?;
    let rows_train = model_rows(
        &model,
        &data,
        Split::Train,
        config.distill_features,
        partition.as_ref(),
    )?;
    let rows_test = model_rows(
        &model,
        &data,
        Split::Test,
        config.distill_features,
        partition.as_ref(),
    )?;

    let trees = distill_model(&rows_train, config.apl_params())?;
    let mut fidelities = Vec::with_capacity(trees.len());
    let mut agree_total = 0usize;
    let mut n_total = 0usize;
    for t in &trees {
        let members: Vec<usize> = (0..rows_test.features.rows())
            .filter(|&i| rows_test.regions[i] == t.region)
            .collect();
        if members.is_empty() {
            fidelities.push(f64::NAN);
            continue;
        }
        let agree = members
            .iter()
            .filter(|&&i| t.tree.predict(rows_test.features.row(i)) == rows_test.labels[t.output][i])
            .count();
        fidelities.push(agree as f64 / members.len() as f64);
        agree_total += agree;
        n_total += members.len();
    }
    if n_total == 0 {
        return Err(Error::EmptyInput("distillation test split"));
    }
    let overall = agree_total as f64 / n_total as f64;

    let mut table = std::fs::File::create(out_dir.join("fidelity.csv"))?;
    writeln!(table, "region,output,apl,fidelity")?;
    for (t, fid) in trees.iter().zip(&fidelities) {
        let stem = format!("region-{}-output-{}", t.region, t.output);
        std::fs::write(out_dir.join(format!("{stem}.json")), t.tree.to_json())?;
        let dot = crate::dtree::export_dot(&t.tree, &rows_train.feature_names)?;
        std::fs::write(out_dir.join(format!("{stem}.dot")), dot)?;
        writeln!(table, "{},{},{:.6},{:.6}", t.region, t.output, t.apl, fid)?;
    }

    Ok(DistillReport {
        trees,
        fidelities,
        overall_fidelity: overall,
    })
}
