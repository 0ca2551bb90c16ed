//! CSV ingestion for public tabular datasets.
//!
//! The schema names the target column and its binarization rule, plus which
//! columns are categorical (one-hot encoded, never z-scored). Continuous
//! columns are z-scored with statistics from the training split only.

use crate::autodiff::Matrix;
use crate::data::{Split, TabularDataset};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Name of the target column.
    pub target: String,
    /// Positive label iff target value >= this threshold.
    pub positive_threshold: f64,
    /// Columns treated as categorical and one-hot encoded.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Field delimiter; UCI wine files use ';'.
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Z-score continuous features on training statistics (on by default;
    /// synthetic coordinate data may want raw values).
    #[serde(default = "default_true")]
    pub zscore: bool,
    #[serde(default)]
    pub valid_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

fn default_delimiter() -> char {
    ','
}

fn default_test_fraction() -> f64 {
    0.3
}

fn default_true() -> bool {
    true
}

impl CsvSchema {
    pub fn wine() -> Self {
        CsvSchema {
            target: "quality".to_string(),
            positive_threshold: 5.0,
            categorical: Vec::new(),
            delimiter: ';',
            test_fraction: 0.3,
            zscore: true,
            valid_fraction: 0.0,
            split_seed: 0,
        }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<TabularDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim_matches('"').to_string())
        .collect();
    let target_idx = headers
        .iter()
        .position(|h| h == &schema.target)
        .ok_or_else(|| Error::Csv {
            row: 0,
            column: schema.target.clone(),
            message: "target column not found in header".to_string(),
        })?;
    let cat_idx: Vec<usize> = schema
        .categorical
        .iter()
        .map(|c| {
            headers.iter().position(|h| h == c).ok_or_else(|| Error::Csv {
                row: 0,
                column: c.clone(),
                message: "categorical column not found in header".to_string(),
            })
        })
        .collect::<Result<_>>()?;

    let mut raw: Vec<Vec<String>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            row: i + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        raw.push(record.iter().map(|s| s.to_string()).collect());
    }
    if raw.is_empty() {
        return Err(Error::Csv {
            row: 0,
            column: String::new(),
            message: "file has a header but no data rows".to_string(),
        });
    }

    // Collect category levels in first-seen order for stable encoding.
    let mut levels: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for &c in &cat_idx {
        let mut seen = Vec::new();
        for row in &raw {
            if !seen.contains(&row[c]) {
                seen.push(row[c].clone());
            }
        }
        levels.insert(c, seen);
    }

    let mut feature_names = Vec::new();
    for (c, name) in headers.iter().enumerate() {
        if c == target_idx {
            continue;
        }
        if let Some(ls) = levels.get(&c) {
            for l in ls {
                feature_names.push(format!("{name}={l}"));
            }
        } else {
            feature_names.push(name.clone());
        }
    }

    let n = raw.len();
    let p = feature_names.len();
    let mut x = Matrix::zeros(n, p);
    let mut y = Matrix::zeros(n, 1);
    for (i, row) in raw.iter().enumerate() {
        let mut out_col = 0usize;
        for (c, _) in headers.iter().enumerate() {
            if c == target_idx {
                continue;
            }
            if let Some(ls) = levels.get(&c) {
                let pos = ls.iter().position(|l| l == &row[c]).expect("seen level");
                x.set(i, out_col + pos, 1.0);
                out_col += ls.len();
            } else {
                let v: f64 = row[c].parse().map_err(|_| Error::Csv {
                    row: i + 1,
                    column: headers[c].clone(),
                    message: format!("cannot parse '{}' as a number", row[c]),
                })?;
                x.set(i, out_col, v);
                out_col += 1;
            }
        }
        let tv: f64 = row[target_idx].parse().map_err(|_| Error::Csv {
            row: i + 1,
            column: headers[target_idx].clone(),
            message: format!("cannot parse target '{}'", row[target_idx]),
        })?;
        y.set(i, 0, f64::from(tv >= schema.positive_threshold));
    }

    // Assign splits, then z-score continuous columns on training stats.
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(schema.split_seed);
    order.shuffle(&mut rng);
    let n_test = (schema.test_fraction * n as f64).round() as usize;
    let n_valid = (schema.valid_fraction * n as f64).round() as usize;
    let mut split = vec![Split::Train; n];
    for &i in order.iter().take(n_test) {
        split[i] = Split::Test;
    }
    for &i in order.iter().skip(n_test).take(n_valid) {
        split[i] = Split::Valid;
    }

    let continuous: Vec<bool> = {
        let mut flags = vec![true; p];
        let mut out_col = 0usize;
        for (c, _) in headers.iter().enumerate() {
            if c == target_idx {
                continue;
            }
            if let Some(ls) = levels.get(&c) {
                for f in flags.iter_mut().skip(out_col).take(ls.len()) {
                    *f = false;
                }
                out_col += ls.len();
            } else {
                out_col += 1;
            }
        }
        flags
    };
    let train_rows: Vec<usize> = (0..n).filter(|&i| split[i] == Split::Train).collect();
    for (j, &is_cont) in continuous.iter().enumerate() {
        if !is_cont || !schema.zscore {
            continue;
        }
        let mean: f64 =
            train_rows.iter().map(|&i| x.get(i, j)).sum::<f64>() / train_rows.len() as f64;
        let var: f64 = train_rows
            .iter()
            .map(|&i| {
                let d = x.get(i, j) - mean;
                d * d
            })
            .sum::<f64>()
            / train_rows.len() as f64;
        let sd = var.sqrt();
        for i in 0..n {
            let v = if sd > 0.0 {
                (x.get(i, j) - mean) / sd
            } else {
                // Constant column: map to zero rather than divide by zero.
                0.0
            };
            x.set(i, j, v);
        }
    }

    Ok(TabularDataset {
        x,
        y,
        feature_names,
        split,
        region: None,
    })
}
