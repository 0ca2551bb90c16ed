//! Run artifacts: the per-run metrics log and the sweep record.

use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;
use crate::surrogate::FitReport;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub experiment: String,
    pub regularizer: String,
    pub lambda: f64,
    pub seed: u64,
    pub config_hash: String,
    pub train: MetricsRecord,
    pub test: MetricsRecord,
    pub valid: Option<MetricsRecord>,
    pub run_dir: PathBuf,
}

pub const TRADEOFF_HEADER: &str =
    "regularizer,lambda,seed,split,auc,f1,accuracy,apl_eval,fidelity";

impl SweepRecord {
    /// Stable identity of one run inside a sweep.
    pub fn key(&self) -> String {
        format!("{},{:.6e},{}", self.regularizer, self.lambda, self.seed)
    }

    pub fn tradeoff_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        let mut push = |split: &str, m: &MetricsRecord| {
            lines.push(format!(
                "{},{:.6e},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                self.regularizer,
                self.lambda,
                self.seed,
                split,
                m.auc,
                m.f1,
                m.accuracy,
                m.apl_eval,
                m.fidelity
            ));
        };
        push("train", &self.train);
        push("test", &self.test);
        if let Some(v) = &self.valid {
            push("valid", v);
        }
        lines
    }
}

/// One parsed tradeoff row.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub regularizer: String,
    pub lambda: f64,
    pub seed: u64,
    pub split: String,
    pub auc: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub apl_eval: f64,
    pub fidelity: f64,
}

pub fn read_tradeoff(path: &Path) -> Result<Vec<TradeoffRow>> {
    let mut out = Vec::new();
    if !path.exists() {
        return Ok(out);
    }
    let file = std::fs::File::open(path)?;
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 9 {
            return Err(Error::Csv {
                row: i,
                column: String::new(),
                message: format!("expected 9 fields, got {}", parts.len()),
            });
        }
        let f = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
        out.push(TradeoffRow {
            regularizer: parts[0].to_string(),
            lambda: f(parts[1]),
            seed: parts[2].parse().unwrap_or(0),
            split: parts[3].to_string(),
            auc: f(parts[4]),
            f1: f(parts[5]),
            accuracy: f(parts[6]),
            apl_eval: f(parts[7]),
            fidelity: f(parts[8]),
        });
    }
    Ok(out)
}

/// Writer for the per-run metrics CSV. Three row kinds share one table:
/// `epoch` rows log the optimizer's view, `retrain` rows log surrogate fit
/// reports, and `tracking` rows pair the surrogate estimate with the true
/// APL at each retrain checkpoint.
pub struct MetricsLogger {
    out: BufWriter<std::fs::File>,
}

pub const METRICS_HEADER: &str = "record,epoch,step,region,data_loss,penalty,true_apl,pred_before,pred_after,buffer_size,augmented,mean_mse,max_mse";

impl MetricsLogger {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(MetricsLogger { out })
    }

    pub fn epoch_row(
        &mut self,
        epoch: usize,
        step: u64,
        data_loss: f64,
        penalty: f64,
        true_apl: f64,
    ) -> Result<()> {
        writeln!(
            self.out,
            "epoch,{epoch},{step},,{data_loss:.6},{penalty:.6},{true_apl:.6},,,,,,"
        )?;
        Ok(())
    }

    pub fn retrain_row(&mut self, report: &FitReport, region: Option<usize>) -> Result<()> {
        let region = region.map_or(String::new(), |r| r.to_string());
        writeln!(
            self.out,
            "retrain,,{},{region},,,,,,{},{},{:.6},{:.6}",
            report.step, report.buffer_size, report.augmented, report.mean_mse, report.max_mse
        )?;
        Ok(())
    }

    pub fn tracking_row(
        &mut self,
        step: u64,
        region: Option<usize>,
        true_apl: f64,
        pred_before: f64,
        pred_after: f64,
    ) -> Result<()> {
        let region = region.map_or(String::new(), |r| r.to_string());
        writeln!(
            self.out,
            "tracking,,{step},{region},,,{true_apl:.6},{pred_before:.6},{pred_after:.6},,,,"
        )?;
        Ok(())
    }
}

impl Drop for MetricsLogger {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

#[derive(Debug, Clone)]
pub struct TrackingPoint {
    pub step: u64,
    pub region: Option<usize>,
    pub true_apl: f64,
    pub pred_before: f64,
    pub pred_after: f64,
}

pub fn read_tracking(path: &Path) -> Result<Vec<TrackingPoint>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if !line.starts_with("tracking,") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        out.push(TrackingPoint {
            step: parts[2].parse().unwrap_or(0),
            region: parts[3].parse().ok(),
            true_apl: parts[6].parse().unwrap_or(f64::NAN),
            pred_before: parts[7].parse().unwrap_or(f64::NAN),
            pred_after: parts[8].parse().unwrap_or(f64::NAN),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RetrainPoint {
    pub step: u64,
    pub region: Option<usize>,
    pub buffer_size: usize,
    pub augmented: usize,
    pub mean_mse: f64,
    pub max_mse: f64,
}

pub fn read_retrain_reports(path: &Path) -> Result<Vec<RetrainPoint>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if !line.starts_with("retrain,") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        out.push(RetrainPoint {
            step: parts[2].parse().unwrap_or(0),
            region: parts[3].parse().ok(),
            buffer_size: parts[9].parse().unwrap_or(0),
            augmented: parts[10].parse().unwrap_or(0),
            mean_mse: parts[11].parse().unwrap_or(f64::NAN),
            max_mse: parts[12].parse().unwrap_or(f64::NAN),
        });
    }
    Ok(out)
}

/// Pearson correlation.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}
