//! Batch and report persistence.
//!
//! Sample batches are flat CSV with header `lambda_1..lambda_n,q_1..q_m` and
//! 17-significant-digit decimals, so doubles survive the round trip exactly
//! and reruns are byte-identical. The fitted KDE is persisted by reference to
//! its sample file plus the bandwidth vector: the samples are the estimator.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use dci_core::domain::SampleBatch;

use crate::CliError;

fn fmt(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn write_samples_csv(path: &Path, batch: &SampleBatch<f64>) -> Result<(), CliError> {
    let n = batch.param_dim();
    let m = batch.qoi_dim();
    let mut out = String::new();
    let mut header = Vec::with_capacity(n + m);
    for j in 1..=n {
        header.push(format!("lambda_{j}"));
    }
    for j in 1..=m {
        header.push(format!("q_{j}"));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..batch.count() {
        let mut fields = Vec::with_capacity(n + m);
        for j in 0..n {
            fields.push(fmt(batch.params()[[i, j]]));
        }
        for j in 0..m {
            fields.push(fmt(batch.qois()[[i, j]]));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}

pub struct SamplesFile {
    pub params: Array2<f64>,
    pub qois: Array2<f64>,
}

pub fn read_samples_csv(path: &Path) -> Result<SamplesFile, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::missing_input(format!("cannot open {}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?
        .clone();
    let n = header.iter().filter(|h| h.starts_with("lambda_")).count();
    let m = header.iter().filter(|h| h.starts_with("q_")).count();
    if n == 0 || m == 0 || n + m != header.len() {
        return Err(CliError::io(format!(
            "{}: header must be lambda_1..lambda_n,q_1..q_m",
            path.display()
        )));
    }
    let mut params = Vec::new();
    let mut qois = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        if record.len() != n + m {
            return Err(CliError::io(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                rows + 2,
                record.len(),
                n + m
            )));
        }
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|e| {
                CliError::io(format!("{}: row {}, column {}: {e}", path.display(), rows + 2, j + 1))
            })?;
            if j < n {
                params.push(value);
            } else {
                qois.push(value);
            }
        }
        rows += 1;
    }
    Ok(SamplesFile {
        params: Array2::from_shape_vec((rows, n), params).expect("row-major"),
        qois: Array2::from_shape_vec((rows, m), qois).expect("row-major"),
    })
}

/// Persisted push-forward estimate: a reference to the sample file plus the
/// fitted bandwidths.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushforwardFile {
    pub kind: String,
    pub samples_file: String,
    pub model: String,
    pub seed: u64,
    pub count: usize,
    pub qoi_dim: usize,
    pub bandwidth: Vec<f64>,
    pub bandwidth_rule: String,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut file = fs::File::create(path)
        .map_err(|e| CliError::io(format!("creating {}: {e}", path.display())))?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io(format!("serializing {}: {e}", path.display())))?;
    file.write_all(text.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::missing_input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}
