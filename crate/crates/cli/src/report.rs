//! Report files: JSON for machines, long-format CSV for plotting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shapsrc_core::ranker::{LambdaLoss, RankerModel};
use shapsrc_core::select::SelectionReport;
use shapsrc_core::shapley::EpochTrace;
use shapsrc_core::EngineConfig;

use crate::error::CliError;
use crate::problem::InputHash;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: Vec<InputHash>,
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    /// `[target][source]`, for `value` and `exact`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valuation: Option<ValuationDetails>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baselines: Option<Baselines>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Ranking>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub path: Option<PathBuf>,
    pub resumed: bool,
    pub hits: u64,
    pub misses: u64,
    pub oracle_trainings: u64,
    pub truncated_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationDetails {
    pub engine: EngineConfig,
    pub epochs_run: u64,
    pub converged: bool,
    pub rho: Vec<f64>,
    pub full_score: Vec<f64>,
    pub cache: CacheStats,
    pub trace: Vec<EpochTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub single: Vec<Vec<f64>>,
    /// Absent with a single source.
    pub loo: Option<Vec<Vec<f64>>>,
    pub random: Vec<f64>,
    /// Greedy ordering of source names, per target.
    pub greedy: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestScores {
    pub target: String,
    pub chosen: f64,
    pub all_sources: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub values_file: PathBuf,
    pub values_target: String,
    pub dev_target: String,
    pub chosen_sources: Vec<String>,
    pub report: SelectionReport,
    pub test: Option<TestScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub target: String,
    pub lambda: f64,
    pub sweep: Vec<LambdaLoss>,
    pub model: RankerModel,
    /// Predicted value per source, in source order.
    pub predicted: Vec<f64>,
    /// Source names, best first.
    pub order: Vec<String>,
    pub top_k: Option<Vec<String>>,
    pub training_rows: usize,
}

impl Report {
    /// Loads a report, refusing schema versions this build does not know.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let input_err = |message: String| CliError::Input {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| input_err(e.to_string()))?;
        let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| input_err(e.to_string()))?;
        match raw.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(input_err(format!(
                    "report schema version {v} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(input_err("not a report: no schema_version".into())),
        }
        serde_json::from_value(raw).map_err(|e| input_err(e.to_string()))
    }

    pub fn write_json(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("reports serialize");
        text.push('\n');
        write_file(path, text.as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        message: format!("cannot write: {e}"),
    })
}

/// Writes CSV rows produced by `fill` to `path`.
pub fn write_csv(
    path: &Path,
    header: &[&str],
    fill: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let result = w.write_record(header).and_then(|_| fill(&mut w));
    let bytes = result
        .map_err(|e| e.to_string())
        .and_then(|_| w.into_inner().map_err(|e| e.to_string()))
        .map_err(|message| CliError::Input {
            path: path.to_path_buf(),
            message,
        })?;
    write_file(path, &bytes)
}

/// `target,source,value` rows for a `[target][source]` matrix.
pub fn write_matrix_csv(path: &Path, targets: &[String], sources: &[String], m: &[Vec<f64>]) -> Result<(), CliError> {
    write_csv(path, &["target", "source", "value"], |w| {
        for (t, row) in targets.iter().zip(m) {
            for (s, v) in sources.iter().zip(row) {
                w.write_record([t.as_str(), s.as_str(), &v.to_string()])?;
            }
        }
        Ok(())
    })
}
