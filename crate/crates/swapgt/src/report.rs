//! Per-run JSON records and aggregate CSV rows.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use swapgt_core::train::{ExperimentResult, RunRecord};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub ce: f64,
    pub ca: f64,
    pub total: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub variant: String,
    pub split: String,
    pub run: usize,
    pub split_seed: u64,
    pub init_seed: u64,
    pub test_accuracy: f64,
    pub validation_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub curve: Vec<CurvePoint>,
    /// Effective configuration as `key = value` lines.
    pub config: String,
}

impl RunReport {
    pub fn new(config: &RunConfig, record: &RunRecord) -> Self {
        let curve = record
            .history
            .iter()
            .map(|e| CurvePoint {
                epoch: e.epoch,
                ce: e.train.ce,
                ca: e.train.ca,
                total: e.train.total,
                val_accuracy: e.validation.accuracy,
                val_loss: e.validation.loss,
            })
            .collect();
        Self {
            dataset: config.dataset.clone(),
            variant: config.train.variant.as_str().into(),
            split: config.train.split.as_str().into(),
            run: record.run,
            split_seed: record.split_seed,
            init_seed: record.init_seed,
            test_accuracy: record.test_accuracy,
            validation_accuracy: record.validation_accuracy,
            best_epoch: record.best_epoch,
            epochs_run: record.epochs_run,
            curve,
            config: config.to_text(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| CliError::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), self).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// One aggregate line per configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub variant: String,
    pub split: String,
    pub k: usize,
    pub p: f64,
    pub t: usize,
    pub s: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub mean_acc: f64,
    pub std_acc: f64,
    /// Effective configuration as `key=value;...`.
    pub config: String,
}

impl SummaryRow {
    pub fn new(config: &RunConfig, result: &ExperimentResult) -> Self {
        let t = &config.train;
        Self {
            dataset: config.dataset.clone(),
            variant: t.variant.as_str().into(),
            split: t.split.as_str().into(),
            k: t.k,
            p: t.swap_p,
            t: t.swap_t,
            s: t.aug_s,
            alpha: t.alpha,
            lambda: t.lambda,
            mean_acc: result.mean_accuracy,
            std_acc: result.std_accuracy,
            config: config.to_inline(),
        }
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().map(|row| row.map_err(err)).collect()
}
