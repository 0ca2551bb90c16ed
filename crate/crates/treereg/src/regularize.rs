//! Penalty assembly: L1, L2, global tree regularization, and the regional
//! variant that weights per-region surrogates through sparsemax.

use crate::autodiff::{simplex_projection, Matrix, NodeId, Tape};
use crate::data::KMeansModel;
use crate::dtree::{self, AplParams};
use crate::error::{Error, Result};
use crate::surrogate::SurrogateState;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerKind {
    None,
    L1,
    L2,
    TreeGlobal,
    /// Plain sum of per-region surrogate APLs (comparison baseline).
    TreeRegionalL1,
    /// Sparsemax-weighted combination that focuses on the most complex
    /// regions.
    TreeRegionalL0,
}

impl RegularizerKind {
    pub fn is_tree(&self) -> bool {
        matches!(
            self,
            RegularizerKind::TreeGlobal
                | RegularizerKind::TreeRegionalL1
                | RegularizerKind::TreeRegionalL0
        )
    }

    pub fn is_regional(&self) -> bool {
        matches!(
            self,
            RegularizerKind::TreeRegionalL1 | RegularizerKind::TreeRegionalL0
        )
    }

    pub fn label(&self) -> &'static str {
        match self {
            RegularizerKind::None => "none",
            RegularizerKind::L1 => "l1",
            RegularizerKind::L2 => "l2",
            RegularizerKind::TreeGlobal => "tree-global",
            RegularizerKind::TreeRegionalL1 => "tree-regional-l1",
            RegularizerKind::TreeRegionalL0 => "tree-regional-l0",
        }
    }
}

/// Sum of absolute values of the subset node.
pub fn l1(tape: &mut Tape, subset: NodeId) -> NodeId {
    let a = tape.abs(subset);
    tape.sum_all(a)
}

/// Sum of squares of the subset node.
pub fn l2(tape: &mut Tape, subset: NodeId) -> NodeId {
    let sq = tape.mul(subset, subset).expect("same node");
    tape.sum_all(sq)
}

/// Euclidean projection onto the probability simplex (Euclidean nearest
/// point with nonnegative entries summing to one).
pub fn sparsemax(values: &[f64]) -> Vec<f64> {
    simplex_projection(values)
}

/// Surrogate estimate of the global tree penalty, differentiable through
/// the subset node.
pub fn global_tree_penalty(
    tape: &mut Tape,
    surrogate: &SurrogateState,
    subset: NodeId,
) -> Result<NodeId> {
    surrogate.net.forward_graph(tape, subset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionalMode {
    /// Sparsemax weighting: only the most complex regions contribute.
    L0Sparsemax,
    /// Plain sum over regions.
    L1Sum,
}

/// Per-region surrogates plus the last sparsemax weights, for logging.
#[derive(Debug, Clone)]
pub struct RegionalRegState {
    pub surrogates: Vec<SurrogateState>,
    pub last_sparsemax: Vec<f64>,
    pub last_apls: Vec<f64>,
}

impl RegionalRegState {
    pub fn new(surrogates: Vec<SurrogateState>) -> Self {
        let r = surrogates.len();
        RegionalRegState {
            surrogates,
            last_sparsemax: vec![0.0; r],
            last_apls: vec![0.0; r],
        }
    }

    pub fn r(&self) -> usize {
        self.surrogates.len()
    }
}

/// Combined regional penalty: predict each region's APL with its surrogate,
/// weight through sparsemax (or sum in L1 mode), and return the scalar node.
/// Gradients flow through both the weights and the predictions.
pub fn regional_tree_penalty(
    tape: &mut Tape,
    state: &mut RegionalRegState,
    subset: NodeId,
    mode: RegionalMode,
    normalize_before_sparsemax: bool,
) -> Result<NodeId> {
    if state.surrogates.is_empty() {
        return Err(Error::EmptyInput("regional surrogates"));
    }
    let mut parts = Vec::with_capacity(state.r());
    for s in &state.surrogates {
        parts.push(s.net.forward_graph(tape, subset)?);
    }
    let omega = tape.concat_rows(&parts)?; // R x 1
    state.last_apls = tape.value(omega).data().to_vec();
    match mode {
        RegionalMode::L1Sum => {
            state.last_sparsemax = vec![1.0; state.r()];
            Ok(tape.sum_all(omega))
        }
        RegionalMode::L0Sparsemax => {
            // Optional detached rescaling before projection; off by default
            // so inputs reach sparsemax raw.
            let proj_in = if normalize_before_sparsemax {
                let max_abs = tape
                    .value(omega)
                    .data()
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()));
                if max_abs > 0.0 {
                    tape.scale(omega, 1.0 / max_abs)
                } else {
                    omega
                }
            } else {
                omega
            };
            let p = tape.sparsemax(proj_in)?;
            state.last_sparsemax = tape.value(p).data().to_vec();
            let weighted = tape.mul(p, omega)?;
            Ok(tape.sum_all(weighted))
        }
    }
}

/// How reference rows map to regions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegionAssigner {
    /// Everything in one region.
    Single,
    /// Buckets of one feature, split at the given ascending edges.
    FeatureIntervals { feature: usize, edges: Vec<f64> },
    /// Nearest k-means centroid.
    KMeans { model: KMeansModel },
    /// Fixed per-row assignments (usable only for the dataset they index).
    Explicit { assignments: Vec<usize> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionPartition {
    pub names: Vec<String>,
    pub assigner: RegionAssigner,
}

impl RegionPartition {
    pub fn single() -> Self {
        RegionPartition {
            names: vec!["all".to_string()],
            assigner: RegionAssigner::Single,
        }
    }

    pub fn from_kmeans(model: KMeansModel) -> Self {
        let names = (0..model.k()).map(|i| format!("cluster-{i}")).collect();
        RegionPartition {
            names,
            assigner: RegionAssigner::KMeans { model },
        }
    }

    pub fn feature_intervals(feature: usize, edges: Vec<f64>, names: Vec<String>) -> Self {
        assert_eq!(names.len(), edges.len() + 1);
        RegionPartition {
            names,
            assigner: RegionAssigner::FeatureIntervals { feature, edges },
        }
    }

    pub fn r(&self) -> usize {
        self.names.len()
    }

    pub fn assign(&self, row: &[f64], row_index: usize) -> usize {
        match &self.assigner {
            RegionAssigner::Single => 0,
            RegionAssigner::FeatureIntervals { feature, edges } => {
                let v = row[*feature];
                edges.iter().take_while(|&&e| v > e).count()
            }
            RegionAssigner::KMeans { model } => model.assign(row),
            RegionAssigner::Explicit { assignments } => assignments[row_index],
        }
    }

    pub fn assign_all(&self, x: &Matrix) -> Vec<usize> {
        (0..x.rows()).map(|i| self.assign(x.row(i), i)).collect()
    }

    /// Write the text region map: one `region <index> <name>` line per
    /// region, then either centroid rows or explicit assignments.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for (i, name) in self.names.iter().enumerate() {
            writeln!(f, "region\t{i}\t{name}")?;
        }
        match &self.assigner {
            RegionAssigner::Single => writeln!(f, "single")?,
            RegionAssigner::FeatureIntervals { feature, edges } => {
                let edges: Vec<String> = edges.iter().map(|e| e.to_string()).collect();
                writeln!(f, "intervals\t{feature}\t{}", edges.join(","))?;
            }
            RegionAssigner::KMeans { model } => {
                writeln!(f, "centroids")?;
                for i in 0..model.centroids.rows() {
                    let row: Vec<String> =
                        model.centroids.row(i).iter().map(|v| v.to_string()).collect();
                    writeln!(f, "{}", row.join(","))?;
                }
            }
            RegionAssigner::Explicit { assignments } => {
                writeln!(f, "assignments")?;
                for a in assignments {
                    writeln!(f, "{a}")?;
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let mut names = Vec::new();
        let mut mode_line = None;
        for line in lines.by_ref() {
            let line = line?;
            if line.starts_with("region\t") {
                let parts: Vec<&str> = line.splitn(3, '\t').collect();
                if parts.len() != 3 {
                    return Err(Error::Config(format!("bad region line: {line}")));
                }
                names.push(parts[2].to_string());
            } else {
                mode_line = Some(line);
                break;
            }
        }
        let mode_line = mode_line.ok_or_else(|| {
            Error::Config("region map is missing an assigner section".to_string())
        })?;
        let assigner = if mode_line == "single" {
            RegionAssigner::Single
        } else if let Some(rest) = mode_line.strip_prefix("intervals\t") {
            let parts: Vec<&str> = rest.splitn(2, '\t').collect();
            let feature: usize = parts[0]
                .parse()
                .map_err(|_| Error::Config("bad intervals feature".to_string()))?;
            let edges: Vec<f64> = parts
                .get(1)
                .map(|s| {
                    s.split(',')
                        .map(|v| v.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                })
                .transpose()
                .map_err(|_| Error::Config("bad intervals edges".to_string()))?
                .unwrap_or_default();
            RegionAssigner::FeatureIntervals { feature, edges }
        } else if mode_line == "centroids" {
            let mut rows = Vec::new();
            for line in lines.by_ref() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: Vec<f64> = line
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Config(format!("bad centroid row: {line}")))?;
                rows.push(row);
            }
            RegionAssigner::KMeans {
                model: KMeansModel {
                    centroids: Matrix::from_rows(&rows)?,
                },
            }
        } else if mode_line == "assignments" {
            let mut assignments = Vec::new();
            for line in lines {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                assignments.push(
                    line.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad assignment: {line}")))?,
                );
            }
            RegionAssigner::Explicit { assignments }
        } else {
            return Err(Error::Config(format!("unknown assigner: {mode_line}")));
        };
        Ok(RegionPartition { names, assigner })
    }
}

/// Per-region pruned APL of a labeling, summed over output dimensions.
///
/// `labels_per_output[q][i]` is output q's thresholded prediction for row i.
/// Regions with fewer than 10 rows error, naming the region.
pub fn regional_true_apls(
    features: &Matrix,
    labels_per_output: &[Vec<bool>],
    regions: &[usize],
    n_regions: usize,
    params: AplParams,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n_regions);
    for r in 0..n_regions {
        let rows: Vec<usize> = (0..features.rows()).filter(|&i| regions[i] == r).collect();
        if rows.len() < 10 {
            return Err(Error::RegionTooSmall {
                region: r,
                count: rows.len(),
                min: 10,
            });
        }
        let x = Matrix::from_fn(rows.len(), features.cols(), |i, j| features.get(rows[i], j));
        let mut total = 0.0;
        for labels in labels_per_output {
            let region_labels: Vec<bool> = rows.iter().map(|&i| labels[i]).collect();
            let (_, apl) = dtree::distill_with(&x, &region_labels, params)?;
            total += apl;
        }
        out.push(total);
    }
    Ok(out)
}

/// The x-axis metric for every tradeoff curve: the mean over regions of the
/// per-region pruned APL (summed over outputs). With a single region this is
/// exactly the plain pruned APL.
pub fn evaluation_apl(
    features: &Matrix,
    labels_per_output: &[Vec<bool>],
    regions: &[usize],
    n_regions: usize,
    params: AplParams,
) -> Result<f64> {
    let apls = regional_true_apls(features, labels_per_output, regions, n_regions, params)?;
    Ok(apls.iter().sum::<f64>() / apls.len() as f64)
}

/// 20 logarithmically spaced penalty strengths in [1e-4, 10].
pub fn default_lambda_grid() -> Vec<f64> {
    log_spaced_grid(1e-4, 10.0, 20)
}

pub fn log_spaced_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
