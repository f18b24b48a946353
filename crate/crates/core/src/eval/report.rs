use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NesrError, Result};
use crate::eval::metrics::Metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub bands: usize,
    pub method: String,
    pub mrae: f64,
    pub rmse: f64,
}

/// A named pass/fail comparison between rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: String,
    pub mode: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub band_grids: BTreeMap<String, Vec<f64>>,
    pub rows: Vec<ReportRow>,
    pub checks: Vec<OrderingCheck>,
    pub notes: Vec<String>,
    /// Omitted in strict mode so reports compare bit for bit.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_clock_secs: Option<f64>,
}

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl EvalReport {
    pub fn new(mode: &str, config_hash: String) -> Self {
        EvalReport {
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: mode.to_string(),
            config_hash,
            seeds: BTreeMap::new(),
            band_grids: BTreeMap::new(),
            rows: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            wall_clock_secs: None,
        }
    }

    pub fn push(&mut self, experiment: &str, bands: usize, method: &str, m: Metrics) -> Result<()> {
        if !(m.mrae.is_finite() && m.rmse.is_finite()) {
            return Err(NesrError::Domain(format!(
                "{experiment}/{method} at {bands} bands produced a non-finite metric"
            )));
        }
        self.rows.push(ReportRow {
            experiment: experiment.to_string(),
            bands,
            method: method.to_string(),
            mrae: m.mrae,
            rmse: m.rmse,
        });
        Ok(())
    }

    pub fn row(&self, experiment: &str, bands: usize, method: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.experiment == experiment && r.bands == bands && r.method == method)
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(OrderingCheck {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| NesrError::io(path, e))
    }

    /// Fixed-width table of every row, then the checks.
    pub fn table(&self) -> String {
        let mut out = format!("{:<12} {:>5}  {:<16} {:>10} {:>10}\n", "experiment", "bands", "method", "MRAE", "RMSE");
        for r in &self.rows {
            out += &format!(
                "{:<12} {:>5}  {:<16} {:>10.5} {:>10.5}\n",
                r.experiment, r.bands, r.method, r.mrae, r.rmse
            );
        }
        for c in &self.checks {
            out += &format!("[{}] {}: {}\n", if c.passed { "ok" } else { "FAILED" }, c.name, c.detail);
        }
        out
    }
}
