//! The declarative run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shapsrc_core::shapley::Convergence;
use shapsrc_core::{EngineConfig, RhoPolicy, SampleSpec};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub oracle: OracleSection,
    #[serde(default)]
    pub sources: Vec<CorpusEntry>,
    #[serde(default)]
    pub targets: Vec<CorpusEntry>,
    #[serde(default)]
    pub engine: EngineSection,
    pub select: Option<SelectSection>,
    pub rank: Option<RankSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub name: String,
    /// JSONL file; required for the built-in classifiers.
    pub path: Option<PathBuf>,
    /// Instance count, for external scorers that hold the data themselves.
    pub size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    NaiveCount,
    NearestCentroid,
    External,
    Tabular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameKind {
    Additive,
    Glove,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub kind: OracleKind,
    // external
    pub command: Option<Vec<String>>,
    pub processes: Option<usize>,
    pub timeout_secs: Option<f64>,
    // tabular
    pub game: Option<GameKind>,
    pub weights: Option<Vec<f64>>,
    pub players: Option<usize>,
    pub table: Option<PathBuf>,
    pub delay_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub nepoch: u64,
    pub tolerance: f64,
    pub rho: RhoPolicy,
    pub sample_rate: f64,
    pub window: u64,
    pub epsilon: Option<f64>,
    pub workers: usize,
    pub use_cache: bool,
    pub record_history: bool,
}

impl Default for EngineSection {
    fn default() -> Self {
        let e = EngineConfig::new(0);
        EngineSection {
            nepoch: e.nepoch,
            tolerance: e.tolerance,
            rho: e.rho,
            sample_rate: e.sample.rate,
            window: e.convergence.window,
            epsilon: e.convergence.epsilon,
            workers: e.workers,
            use_cache: e.use_cache,
            record_history: e.record_history,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectSection {
    pub dev_target: String,
    /// Row of the values file to threshold; defaults to `dev_target`.
    pub values_target: Option<String>,
    pub thresholds: Option<Vec<f64>>,
    /// Retrain on the chosen sources with all their data and score here.
    pub test_target: Option<String>,
    pub values: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankSection {
    pub target: String,
    pub features: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub top_k: Option<usize>,
}

/// A parsed config together with its source text and location.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub config: Config,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> Result<Self, CliError> {
        let config: Config = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of_offset(&text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        let loaded = LoadedConfig {
            path: path.to_path_buf(),
            text,
            config,
        };
        loaded.check()?;
        Ok(loaded)
    }

    /// Paths in the config are relative to the file itself.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new("")).join(p)
        }
    }

    /// Error located at `key` inside `[table]` (`""` for the top level).
    pub fn error_at(&self, table: &str, key: &str, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            line: locate(&self.text, table, key),
            message: message.into(),
        }
    }

    fn check(&self) -> Result<(), CliError> {
        let c = &self.config;
        let e = &c.engine;
        if e.nepoch == 0 {
            return Err(self.error_at("engine", "nepoch", "engine.nepoch must be at least 1"));
        }
        if !(e.tolerance >= 0.0 && e.tolerance.is_finite()) {
            return Err(self.error_at("engine", "tolerance", "engine.tolerance must be a non-negative number"));
        }
        if !(e.sample_rate > 0.0 && e.sample_rate <= 1.0) {
            return Err(self.error_at("engine", "sample_rate", "engine.sample_rate must lie in (0, 1]"));
        }
        if e.window == 0 {
            return Err(self.error_at("engine", "window", "engine.window must be at least 1"));
        }
        if e.epsilon.is_some_and(|x| !(x >= 0.0 && x.is_finite())) {
            return Err(self.error_at("engine", "epsilon", "engine.epsilon must be non-negative"));
        }
        if e.workers == 0 {
            return Err(self.error_at("engine", "workers", "engine.workers must be at least 1"));
        }
        let o = &c.oracle;
        match o.kind {
            OracleKind::NaiveCount | OracleKind::NearestCentroid => {
                for (table, list) in [("sources", &c.sources), ("targets", &c.targets)] {
                    if let Some(entry) = list.iter().find(|x| x.path.is_none()) {
                        return Err(self.error_at(
                            table,
                            "name",
                            format!("{table} entry {:?} needs a path", entry.name),
                        ));
                    }
                }
            }
            OracleKind::External => {
                if o.command.as_ref().is_none_or(|c| c.is_empty()) {
                    return Err(self.error_at("oracle", "kind", "an external oracle needs a non-empty `command`"));
                }
                if o.processes == Some(0) {
                    return Err(self.error_at("oracle", "processes", "oracle.processes must be at least 1"));
                }
                if o.timeout_secs.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
                    return Err(self.error_at("oracle", "timeout_secs", "oracle.timeout_secs must be positive"));
                }
                if let Some(entry) = c.sources.iter().find(|x| x.path.is_none() && x.size.is_none()) {
                    return Err(self.error_at(
                        "sources",
                        "name",
                        format!("source {:?} needs a path or a size", entry.name),
                    ));
                }
            }
            OracleKind::Tabular => {
                let needed = match o.game {
                    None => return Err(self.error_at("oracle", "kind", "a tabular oracle needs `game`")),
                    Some(GameKind::Additive) => ("weights", o.weights.is_some()),
                    Some(GameKind::Glove) => ("players", o.players.is_some()),
                    Some(GameKind::Table) => ("table", o.table.is_some()),
                };
                if !needed.1 {
                    return Err(self.error_at("oracle", "game", format!("this game needs `{}`", needed.0)));
                }
            }
        }
        Ok(())
    }

    /// Engine settings for a run, after command-line overrides.
    pub fn engine_config(&self, seed: u64, workers: Option<usize>) -> Result<EngineConfig, CliError> {
        let e = &self.config.engine;
        let cfg = EngineConfig {
            nepoch: e.nepoch,
            tolerance: e.tolerance,
            rho: e.rho,
            sample: SampleSpec {
                rate: e.sample_rate,
                base_seed: seed,
            },
            convergence: Convergence {
                window: e.window,
                epsilon: e.epsilon,
            },
            seed,
            workers: workers.unwrap_or(e.workers),
            use_cache: e.use_cache,
            record_history: e.record_history,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of the first `key = ...` inside `[table]` or `[[table]]`.
fn locate(text: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == table && header_line.is_none() {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == table {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}
