//! Sweeps: the cross product of regularizer kinds, penalty strengths, and
//! seeds, emitting one tradeoff CSV. Re-running a completed sweep is a
//! no-op: finished (regularizer, lambda, seed) runs are skipped.

use crate::error::Result;
use crate::harness::config::RunConfig;
use crate::harness::report::{read_tradeoff, SweepRecord, TRADEOFF_HEADER};
use crate::harness::train::run_train;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

#[derive(Debug)]
pub struct SweepSummary {
    pub completed: Vec<SweepRecord>,
    pub skipped: usize,
    pub failures: Vec<(String, String)>,
}

fn job_key(regularizer: &str, lambda: f64, seed: u64) -> String {
    format!("{regularizer},{lambda:.6e},{seed}")
}

fn job_dir_name(regularizer: &str, lambda: f64, seed: u64) -> String {
    format!("{regularizer}-lam{lambda:.6e}-s{seed}")
}

pub fn run_sweep(config: &RunConfig, out_dir: &Path) -> Result<SweepSummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let tradeoff_path = out_dir.join("tradeoff.csv");
    let existing = read_tradeoff(&tradeoff_path)?;
    let done: BTreeSet<String> = existing
        .iter()
        .map(|r| job_key(&r.regularizer, r.lambda, r.seed))
        .collect();

    let mut jobs = Vec::new();
    for kind in &config.sweep_regularizers {
        let lambdas: Vec<f64> = if matches!(kind, crate::regularize::RegularizerKind::None) {
            vec![0.0]
        } else {
            config.lambda_grid.clone()
        };
        for &lambda in &lambdas {
            for &seed in &config.seeds {
                if done.contains(&job_key(kind.label(), lambda, seed)) {
                    continue;
                }
                let mut job = config.clone();
                job.regularizer = *kind;
                job.lambda = lambda;
                job.seed = seed;
                jobs.push(job);
            }
        }
    }
    let skipped = done.len();

    let results: Vec<(String, Result<SweepRecord>)> = jobs
        .into_par_iter()
        .map(|job| {
            let key = job_key(job.regularizer.label(), job.lambda, job.seed);
            let dir = out_dir
                .join("runs")
                .join(job_dir_name(job.regularizer.label(), job.lambda, job.seed));
            let outcome = run_train(&job, &dir).map(|o| o.record);
            (key, outcome)
        })
        .collect();

    let mut completed = Vec::new();
    let mut failures = Vec::new();
    for (key, outcome) in results {
        match outcome {
            Ok(record) => completed.push(record),
            Err(e) => {
                log::error!("sweep run {key} failed: {e}");
                failures.push((key, e.to_string()));
            }
        }
    }

    // Merge with prior rows and rewrite, keyed and sorted, so reruns change
    // nothing once a sweep is complete.
    let mut lines: BTreeSet<String> = BTreeSet::new();
    for r in &existing {
        lines.insert(format!(
            "{},{:.6e},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.regularizer,
            r.lambda,
            r.seed,
            r.split,
            r.auc,
            r.f1,
            r.accuracy,
            r.apl_eval,
            r.fidelity
        ));
    }
    for record in &completed {
        for line in record.tradeoff_lines() {
            lines.insert(line);
        }
    }
    let mut f = std::fs::File::create(&tradeoff_path)?;
    writeln!(f, "{TRADEOFF_HEADER}")?;
    for line in &lines {
        writeln!(f, "{line}")?;
    }

    if !failures.is_empty() {
        let mut ff = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(out_dir.join("failures.csv"))?;
        for (key, msg) in &failures {
            writeln!(ff, "{key},{}", msg.replace(',', ";"))?;
        }
    }

    Ok(SweepSummary {
        completed,
        skipped,
        failures,
    })
}
