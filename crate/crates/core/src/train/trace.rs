use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Algorithm;
use crate::error::{PatError, Result};

/// CSV header version; bump when columns change.
pub const TRACE_CSV_VERSION: u32 = 1;

/// One evaluation row. Test metrics always use the physical system;
/// the `model_*` columns are only filled for in-silico training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: Option<f64>,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub model_test_loss: Option<f64>,
    pub model_test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
}

impl TrainingTrace {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        TrainingTrace {
            algorithm,
            seed,
            rows: Vec::new(),
        }
    }

    pub fn epochs(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.epoch).collect()
    }

    pub fn final_row(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn test_losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.test_loss).collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| PatError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?).map_err(|e| PatError::io(path, e))
    }

    pub fn read_csv(path: &Path, algorithm: Algorithm, seed: u64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>().map_err(csv_err)?;
        Ok(TrainingTrace { algorithm, seed, rows })
    }
}

fn csv_err(e: csv::Error) -> PatError {
    PatError::Config(format!("csv: {e}"))
}

/// Run summary written next to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub trace_csv_version: u32,
    pub epochs: usize,
    pub final_test_loss: f64,
    pub final_test_accuracy: f64,
    pub best_test_accuracy: f64,
    pub min_test_loss: f64,
    pub config: serde_json::Value,
    /// SHA-256 over the resolved config and the input data fingerprint.
    pub content_hash: String,
}

impl RunSummary {
    pub fn new(trace: &TrainingTrace, config: serde_json::Value, data_fingerprint: &str) -> Self {
        let last = trace.rows.last();
        let mut h = Sha256::new();
        h.update(config.to_string().as_bytes());
        h.update(data_fingerprint.as_bytes());
        RunSummary {
            algorithm: trace.algorithm,
            seed: trace.seed,
            trace_csv_version: TRACE_CSV_VERSION,
            epochs: last.map_or(0, |r| r.epoch),
            final_test_loss: last.map_or(f64::NAN, |r| r.test_loss),
            final_test_accuracy: last.map_or(0.0, |r| r.test_accuracy),
            best_test_accuracy: trace.rows.iter().map(|r| r.test_accuracy).fold(0.0, f64::max),
            min_test_loss: trace.rows.iter().map(|r| r.test_loss).fold(f64::INFINITY, f64::min),
            config,
            content_hash: hex(&h.finalize()),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| PatError::io(path, e))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the raw bytes of `values`.
pub fn fingerprint(values: impl IntoIterator<Item = f64>) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}
