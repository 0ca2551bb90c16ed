//! Shared end-of-run evaluation: metrics per split, evaluation APL, and
//! distilled trees with their fidelity.

use crate::data::Split;
use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::dataset::{model_rows, LoadedData, ModelRows};
use crate::metrics::{self, MetricsRecord};
use crate::models::AnyModel;
use crate::regularize::{evaluation_apl, RegionPartition};

#[derive(Debug, Clone)]
pub struct DistilledTree {
    pub region: usize,
    pub output: usize,
    pub tree: DecisionTree,
    /// Mean path length over the rows the tree was distilled from.
    pub apl: f64,
}

/// One pruned tree per (region, output) over the given rows. Regions with
/// fewer than 10 rows are skipped with a warning.
pub fn distill_model(
    rows: &ModelRows,
    params: crate::dtree::AplParams,
) -> Result<Vec<DistilledTree>> {
    let mut out = Vec::new();
    for region in 0..rows.n_regions {
        let members: Vec<usize> = (0..rows.features.rows())
            .filter(|&i| rows.regions[i] == region)
            .collect();
        if members.len() < 10 {
            log::warn!(
                "skipping distillation for region {region}: only {} rows",
                members.len()
            );
            continue;
        }
        let x = crate::autodiff::Matrix::from_fn(members.len(), rows.features.cols(), |i, j| {
            rows.features.get(members[i], j)
        });
        for (output, labels) in rows.labels.iter().enumerate() {
            let region_labels: Vec<bool> = members.iter().map(|&i| labels[i]).collect();
            let (tree, apl) = crate::dtree::distill_with(&x, &region_labels, params)?;
            out.push(DistilledTree {
                region,
                output,
                tree,
                apl,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::TooFewExamples {
            context: "distillation",
            count: 0,
            min: 10,
        });
    }
    Ok(out)
}

/// Agreement between the distilled trees and the model's own thresholded
/// predictions, over all (row, output) pairs whose region has a tree.
pub fn trees_fidelity(trees: &[DistilledTree], rows: &ModelRows) -> f64 {
    let mut agree = 0usize;
    let mut total = 0usize;
    for i in 0..rows.features.rows() {
        let region = rows.regions[i];
        for (output, labels) in rows.labels.iter().enumerate() {
            if let Some(t) = trees
                .iter()
                .find(|t| t.region == region && t.output == output)
            {
                total += 1;
                if t.tree.predict(rows.features.row(i)) == labels[i] {
                    agree += 1;
                }
            }
        }
    }
    if total == 0 {
        return f64::NAN;
    }
    agree as f64 / total as f64
}

pub struct EvalBundle {
    pub train: MetricsRecord,
    pub test: MetricsRecord,
    pub valid: Option<MetricsRecord>,
    pub trees: Vec<DistilledTree>,
    pub feature_names: Vec<String>,
}

fn split_record(
    rows: &ModelRows,
    trees: &[DistilledTree],
    params: crate::dtree::AplParams,
) -> Result<MetricsRecord> {
    let q = rows.labels.len();
    let mut per_output_auc = Vec::with_capacity(q);
    for qi in 0..q {
        let auc = match metrics::auc(&rows.scores[qi], &rows.targets[qi]) {
            Ok(a) => a,
            Err(Error::SingleClass) => {
                log::warn!("output {qi}: single-class split, auc undefined");
                f64::NAN
            }
            Err(e) => return Err(e),
        };
        per_output_auc.push(auc);
    }
    let auc = per_output_auc.iter().sum::<f64>() / q as f64;
    let flat_preds: Vec<bool> = rows.labels.iter().flatten().copied().collect();
    let flat_targets: Vec<bool> = rows.targets.iter().flatten().copied().collect();
    let accuracy = metrics::accuracy(&flat_preds, &flat_targets);
    let f1 = metrics::f1(&flat_preds, &flat_targets);
    let apl_eval = evaluation_apl(
        &rows.features,
        &rows.labels,
        &rows.regions,
        rows.n_regions,
        params,
    )?;
    let fidelity = trees_fidelity(trees, rows);
    Ok(MetricsRecord {
        auc,
        accuracy,
        f1,
        apl_eval,
        fidelity,
        per_output_auc,
    })
}

/// Metrics for every populated split, plus the distilled trees (fit on the
/// training split's model predictions).
pub fn evaluate_model(
    model: &AnyModel,
    data: &LoadedData,
    partition: Option<&RegionPartition>,
    config: &RunConfig,
) -> Result<EvalBundle> {
    let rows_train = model_rows(
        model,
        data,
        Split::Train,
        config.distill_features,
        partition,
    )?;
    let trees = distill_model(&rows_train, config.apl_params())?;
    let train = split_record(&rows_train, &trees, config.apl_params())?;

    let rows_test = model_rows(model, data, Split::Test, config.distill_features, partition)?;
    let test = split_record(&rows_test, &trees, config.apl_params())?;

    let has_valid = match data {
        LoadedData::Tabular(d) => !d.indices_of(Split::Valid).is_empty(),
        LoadedData::Sequences(d) => !d.indices_of(Split::Valid).is_empty(),
    };
    let valid = if has_valid {
        let rows = model_rows(model, data, Split::Valid, config.distill_features, partition)?;
        Some(split_record(&rows, &trees, config.apl_params())?)
    } else {
        None
    };

    Ok(EvalBundle {
        train,
        test,
        valid,
        trees,
        feature_names: rows_train.feature_names,
    })
}
