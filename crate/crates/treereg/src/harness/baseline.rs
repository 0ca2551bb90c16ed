//! Baseline decision trees fit directly on the labels (one global tree, or
//! one per region), swept over the leaf-size knob and scored with the same
//! evaluation-APL path as the neural runs.

use crate::autodiff::Matrix;
use crate::data::Split;
use crate::dtree::DecisionTree;
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::dataset::{build_partition, load_dataset, LoadedData};
use crate::harness::report::SweepRecord;
use crate::metrics::{self, MetricsRecord};
use crate::regularize::{evaluation_apl, RegionPartition};
use std::path::Path;

fn raw_split(data: &LoadedData, split: Split) -> (Matrix, Matrix) {
    match data {
        LoadedData::Tabular(d) => {
            let idx = d.indices_of(split);
            d.subset(&idx)
        }
        LoadedData::Sequences(d) => {
            let idx = d.indices_of(split);
            let p = d.sequences[0].x.cols();
            let q = d.sequences[0].y.cols();
            let total: usize = idx.iter().map(|&i| d.sequences[i].x.rows()).sum();
            let mut x = Matrix::zeros(total, p);
            let mut y = Matrix::zeros(total, q);
            let mut row = 0;
            for &i in &idx {
                let seq = &d.sequences[i];
                for t in 0..seq.x.rows() {
                    x.row_mut(row).copy_from_slice(seq.x.row(t));
                    y.row_mut(row).copy_from_slice(seq.y.row(t));
                    row += 1;
                }
            }
            (x, y)
        }
    }
}

struct RegionTrees {
    /// One tree per (region, output).
    trees: Vec<Vec<DecisionTree>>,
}

impl RegionTrees {
    fn score(&self, region: usize, output: usize, row: &[f64]) -> f64 {
        self.trees[region][output].predict_proba(row)
    }
}

fn split_metrics(
    forest: &RegionTrees,
    x: &Matrix,
    y: &Matrix,
    partition: Option<&RegionPartition>,
    params: crate::dtree::AplParams,
) -> Result<MetricsRecord> {
    let q = y.cols();
    let regions = match partition {
        Some(p) => p.assign_all(x),
        None => vec![0usize; x.rows()],
    };
    let n_regions = partition.map_or(1, |p| p.r());
    let mut scores = vec![vec![0.0; x.rows()]; q];
    let mut labels = vec![vec![false; x.rows()]; q];
    let mut targets = vec![vec![false; x.rows()]; q];
    for i in 0..x.rows() {
        for qi in 0..q {
            let s = forest.score(regions[i], qi, x.row(i));
            scores[qi][i] = s;
            labels[qi][i] = s >= 0.5;
            targets[qi][i] = y.get(i, qi) > 0.5;
        }
    }
    let mut per_output_auc = Vec::with_capacity(q);
    for qi in 0..q {
        per_output_auc.push(match metrics::auc(&scores[qi], &targets[qi]) {
            Ok(a) => a,
            Err(Error::SingleClass) => f64::NAN,
            Err(e) => return Err(e),
        });
    }
    let auc = per_output_auc.iter().sum::<f64>() / q as f64;
    let flat_preds: Vec<bool> = labels.iter().flatten().copied().collect();
    let flat_targets: Vec<bool> = targets.iter().flatten().copied().collect();
    let accuracy = metrics::accuracy(&flat_preds, &flat_targets);
    let f1 = metrics::f1(&flat_preds, &flat_targets);
    let apl_eval = evaluation_apl(x, &labels, &regions, n_regions, params)?;
    // Fidelity against a distillation of the tree's own labeling: the
    // same thing a neural run reports, applied to this predictor.
    let fidelity = {
        let mut distilled = Vec::new();
        for r in 0..n_regions {
            let members: Vec<usize> = (0..x.rows()).filter(|&i| regions[i] == r).collect();
            if members.len() < 10 {
                continue;
            }
            let xr = Matrix::from_fn(members.len(), x.cols(), |i, j| x.get(members[i], j));
            for labels_q in &labels {
                let lr: Vec<bool> = members.iter().map(|&i| labels_q[i]).collect();
                let (tree, _) = crate::dtree::distill_with(&xr, &lr, params)?;
                let agree = members
                    .iter()
                    .enumerate()
                    .filter(|&(k, &i)| {
                        let _ = k;
                        tree.predict(x.row(i)) == labels_q[i]
                    })
                    .count();
                distilled.push((agree, members.len()));
            }
        }
        let (agree, total): (usize, usize) = distilled
            .iter()
            .fold((0, 0), |(a, t), &(ai, ti)| (a + ai, t + ti));
        if total == 0 {
            f64::NAN
        } else {
            agree as f64 / total as f64
        }
    };
    Ok(MetricsRecord {
        auc,
        accuracy,
        f1,
        apl_eval,
        fidelity,
        per_output_auc,
    })
}

/// Train trees directly on the labels across the `h_grid`, optionally one
/// tree per region ("regional decision tree"), and emit records shaped like
/// neural sweep rows with `lambda` carrying `h`.
pub fn run_baseline_trees(
    config: &RunConfig,
    h_grid: &[usize],
    regional: bool,
    out_dir: &Path,
) -> Result<Vec<SweepRecord>> {
    std::fs::create_dir_all(out_dir)?;
    let data = load_dataset(&config.dataset)?;
    let partition = if regional {
        let p = build_partition(&config.regions, &data)?;
        if p.is_none() {
            return Err(Error::Config(
                "regional baseline trees need a region spec".to_string(),
            ));
        }
        p
    } else {
        None
    };
    let (x_train, y_train) = raw_split(&data, Split::Train);
    let (x_test, y_test) = raw_split(&data, Split::Test);
    let n_regions = partition.as_ref().map_or(1, |p| p.r());
    let q = y_train.cols();
    let label = if regional {
        "baseline-regional-tree"
    } else {
        "baseline-tree"
    };

    let mut records = Vec::new();
    for &h in h_grid {
        let train_regions = match &partition {
            Some(p) => p.assign_all(&x_train),
            None => vec![0usize; x_train.rows()],
        };
        let mut trees: Vec<Vec<DecisionTree>> = Vec::with_capacity(n_regions);
        for r in 0..n_regions {
            let members: Vec<usize> = (0..x_train.rows())
                .filter(|&i| train_regions[i] == r)
                .collect();
            if members.len() < 10 {
                return Err(Error::RegionTooSmall {
                    region: r,
                    count: members.len(),
                    min: 10,
                });
            }
            let xr = Matrix::from_fn(members.len(), x_train.cols(), |i, j| {
                x_train.get(members[i], j)
            });
            let mut per_output = Vec::with_capacity(q);
            for qi in 0..q {
                let labels: Vec<bool> =
                    members.iter().map(|&i| y_train.get(i, qi) > 0.5).collect();
                let mut tree_params = config.apl_params();
                tree_params.min_leaf = h;
                let (tree, _) = crate::dtree::distill_with(&xr, &labels, tree_params)?;
                per_output.push(tree);
            }
            trees.push(per_output);
        }
        let forest = RegionTrees { trees };
        let train = split_metrics(
            &forest,
            &x_train,
            &y_train,
            partition.as_ref(),
            config.apl_params(),
        )?;
        let test = split_metrics(
            &forest,
            &x_test,
            &y_test,
            partition.as_ref(),
            config.apl_params(),
        )?;
        records.push(SweepRecord {
            experiment: config.experiment.clone(),
            regularizer: label.to_string(),
            lambda: h as f64,
            seed: config.seed,
            config_hash: config.hash(),
            train,
            test,
            valid: None,
            run_dir: out_dir.to_path_buf(),
        });
    }

    // Append rows to the shared tradeoff table.
    let path = out_dir.join("tradeoff.csv");
    let mut lines: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    for r in crate::harness::report::read_tradeoff(&path)? {
        lines.insert(format!(
            "{},{:.6e},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.regularizer, r.lambda, r.seed, r.split, r.auc, r.f1, r.accuracy, r.apl_eval, r.fidelity
        ));
    }
    for record in &records {
        for line in record.tradeoff_lines() {
            lines.insert(line);
        }
    }
    use std::io::Write;
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "{}", crate::harness::report::TRADEOFF_HEADER)?;
    for line in &lines {
        writeln!(f, "{line}")?;
    }
    Ok(records)
}
