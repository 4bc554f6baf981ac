//! Builds the oracle a config describes.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shapsrc_core::corpus::{assign_labels, read_jsonl, RawCorpus, SourceCorpus, TargetCorpus};
use shapsrc_core::oracle::{ExternalOptions, ExternalOracle};
use shapsrc_core::{ClassifierKind, CorpusOracle, ScoreOracle, SourceId, TabularGame, TabularOracle};

use crate::config::{GameKind, LoadedConfig, OracleKind};
use crate::error::CliError;

/// Content hash of one input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(path: &Path) -> Result<InputHash, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(InputHash {
        path: path.to_path_buf(),
        sha256: hash_bytes(&bytes),
    })
}

/// Labelled corpora loaded for a built-in classifier.
pub struct Corpora {
    pub sources: Vec<SourceCorpus>,
    pub targets: Vec<TargetCorpus>,
    pub labels: Vec<String>,
    pub kind: ClassifierKind,
}

pub struct Problem {
    pub oracle: Box<dyn ScoreOracle>,
    pub inputs: Vec<InputHash>,
}

fn read_corpus(config: &LoadedConfig, path: &Path, inputs: &mut Vec<InputHash>) -> Result<RawCorpus, CliError> {
    let path = config.resolve(path);
    if !path.exists() {
        return Err(CliError::Input {
            path,
            message: "corpus file not found".into(),
        });
    }
    inputs.push(hash_file(&path)?);
    Ok(read_jsonl(&path)?)
}

fn classifier(kind: OracleKind) -> Option<ClassifierKind> {
    match kind {
        OracleKind::NaiveCount => Some(ClassifierKind::NaiveCount),
        OracleKind::NearestCentroid => Some(ClassifierKind::NearestCentroid),
        _ => None,
    }
}

/// Loads the labelled corpora of a built-in classifier config without
/// building an oracle over them.
pub fn load_corpora(config: &LoadedConfig) -> Result<(Corpora, Vec<InputHash>), CliError> {
    let kind = classifier(config.config.oracle.kind)
        .ok_or_else(|| config.error_at("oracle", "kind", "this command needs a built-in classifier oracle"))?;
    let mut inputs = Vec::new();
    let corpora = read_corpora(config, kind, &mut inputs)?;
    Ok((corpora, inputs))
}

fn read_corpora(config: &LoadedConfig, kind: ClassifierKind, inputs: &mut Vec<InputHash>) -> Result<Corpora, CliError> {
    let c = &config.config;
    let entries: Vec<_> = c.sources.iter().chain(&c.targets).collect();
    let raws = entries
        .iter()
        .map(|e| read_corpus(config, e.path.as_deref().expect("checked when parsing"), inputs))
        .collect::<Result<Vec<_>, _>>()?;
    let (labels, _, mut instances) = assign_labels(&raws)?;
    let target_instances = instances.split_off(c.sources.len());
    let sources = c
        .sources
        .iter()
        .zip(instances)
        .enumerate()
        .map(|(index, (e, inst))| {
            SourceCorpus::new(
                SourceId {
                    index,
                    name: e.name.clone(),
                },
                inst,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let targets = c
        .targets
        .iter()
        .zip(target_instances)
        .map(|(e, inst)| TargetCorpus::new(e.name.clone(), inst))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Corpora {
        sources,
        targets,
        labels: (0..labels.len()).map(|i| labels.name(i).unwrap().to_string()).collect(),
        kind,
    })
}

/// The game JSON format: one score vector per subset, indexed by bitmask
/// (bit `i` set when source `i` is in the subset).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameFile {
    values: Vec<Vec<f64>>,
    range: Option<(f64, f64)>,
}

fn load_game(config: &LoadedConfig, inputs: &mut Vec<InputHash>) -> Result<TabularGame, CliError> {
    let o = &config.config.oracle;
    let game = match o.game.expect("checked when parsing") {
        GameKind::Additive => TabularGame::additive(o.weights.as_ref().unwrap())?,
        GameKind::Glove => TabularGame::glove(o.players.unwrap())?,
        GameKind::Table => {
            let path = config.resolve(o.table.as_ref().unwrap());
            let hash = hash_file(&path)?;
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Input {
                path: path.clone(),
                message: e.to_string(),
            })?;
            inputs.push(hash);
            let file: GameFile = serde_json::from_str(&text).map_err(|e| CliError::Config {
                path: path.clone(),
                line: Some(e.line()),
                message: e.to_string(),
            })?;
            let n = file.values.len();
            if n == 0 || !n.is_power_of_two() {
                return Err(CliError::Config {
                    path,
                    line: None,
                    message: format!("expected 2^m subset values, found {n}"),
                });
            }
            let m = n.trailing_zeros() as usize;
            let targets = file.values[0].len();
            let g = TabularGame::from_fn(m, targets, |s| file.values[s.to_mask() as usize].clone())?;
            match file.range {
                Some((lo, hi)) => g.with_range(lo, hi)?,
                None => g,
            }
        }
    };
    Ok(game)
}

fn names_or_default(entries: &[crate::config::CorpusEntry], defaults: &[String]) -> Vec<String> {
    if entries.is_empty() {
        defaults.to_vec()
    } else {
        entries.iter().map(|e| e.name.clone()).collect()
    }
}

pub fn load_problem(config: &LoadedConfig) -> Result<Problem, CliError> {
    let c = &config.config;
    let mut inputs = Vec::new();
    let oracle: Box<dyn ScoreOracle> = match c.oracle.kind {
        OracleKind::NaiveCount | OracleKind::NearestCentroid => {
            let kind = classifier(c.oracle.kind).expect("built-in kind");
            let corpora = read_corpora(config, kind, &mut inputs)?;
            Box::new(CorpusOracle::new(
                corpora.sources,
                corpora.targets,
                kind,
                corpora.labels.len(),
            )?)
        }
        OracleKind::External => {
            let mut sources = Vec::with_capacity(c.sources.len());
            for e in &c.sources {
                let size = match (e.size, &e.path) {
                    (Some(n), _) => n,
                    (None, Some(p)) => read_corpus(config, p, &mut inputs)?.rows.len(),
                    (None, None) => unreachable!("checked when parsing"),
                };
                sources.push((e.name.clone(), size));
            }
            let mut opts = ExternalOptions::new(c.oracle.command.clone().unwrap());
            opts.processes = c.oracle.processes.unwrap_or(1);
            if let Some(t) = c.oracle.timeout_secs {
                opts.timeout = Duration::from_secs_f64(t);
            }
            let targets = c.targets.iter().map(|t| t.name.clone()).collect();
            Box::new(ExternalOracle::spawn(&opts, sources, targets)?)
        }
        OracleKind::Tabular => {
            let game = load_game(config, &mut inputs)?;
            let plain = TabularOracle::new(game);
            let sources = names_or_default(&c.sources, plain.source_names());
            let targets = names_or_default(&c.targets, plain.target_names());
            let oracle = plain.with_names(sources, targets)?;
            Box::new(oracle.with_delay(Duration::from_millis(c.oracle.delay_ms.unwrap_or(0))))
        }
    };
    Ok(Problem { oracle, inputs })
}

/// Index of the target called `name`, or a config error pointing at `key`.
pub fn target_index(
    config: &LoadedConfig,
    oracle: &dyn ScoreOracle,
    table: &str,
    key: &str,
    name: &str,
) -> Result<usize, CliError> {
    oracle
        .target_names()
        .iter()
        .position(|t| t == name)
        .ok_or_else(|| config.error_at(table, key, format!("{table}.{key}: no target named {name:?}")))
}
