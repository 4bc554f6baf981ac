//! Predicting source values for a target without labeled data.
//!
//! Each known corpus in turn plays the target while the others are valued
//! against it; the resulting (features, value) pairs train a ridge
//! regressor that maps source features to values.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::{SourceCorpus, TargetCorpus};
use crate::error::{Error, Result};
use crate::game::SourceId;
use crate::oracle::{ClassifierKind, CorpusOracle, ScoreOracle};
use crate::shapley::{seal_shap, EngineConfig};

/// Features describing each source relative to each target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    rows: BTreeMap<(String, String), Vec<f64>>,
}

impl FeatureTable {
    pub fn new(feature_names: Vec<String>) -> Self {
        FeatureTable {
            feature_names,
            rows: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn insert(&mut self, target: &str, source: &str, features: Vec<f64>) -> Result<()> {
        if target == source {
            return Err(Error::invalid(format!("feature row pairs {target:?} with itself")));
        }
        if features.len() != self.dim() {
            return Err(Error::invalid(format!(
                "feature row ({target}, {source}) has {} values, expected {}",
                features.len(),
                self.dim()
            )));
        }
        if features.iter().any(|f| !f.is_finite()) {
            return Err(Error::invalid(format!(
                "feature row ({target}, {source}) has a non-finite value"
            )));
        }
        if self
            .rows
            .insert((target.to_owned(), source.to_owned()), features)
            .is_some()
        {
            return Err(Error::invalid(format!("duplicate feature row ({target}, {source})")));
        }
        Ok(())
    }

    pub fn get(&self, target: &str, source: &str) -> Result<&[f64]> {
        self.rows
            .get(&(target.to_owned(), source.to_owned()))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("missing feature row for target {target:?}, source {source:?}")))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reads `target,source,f1..fK` CSV.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        if header.len() < 3 || &header[0] != "target" || &header[1] != "source" {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: 1,
                message: "header must be target,source,<feature>...".into(),
            });
        }
        let mut table = FeatureTable::new(header.iter().skip(2).map(str::to_owned).collect());
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let parse_err = |message: String| Error::Parse {
                path: path.to_owned(),
                line,
                message,
            };
            let features = record
                .iter()
                .skip(2)
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(format!("bad feature {f:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            table
                .insert(&record[0], &record[1], features)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(table)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("{other:?}"),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerRow {
    pub target: String,
    pub source: String,
    pub features: Vec<f64>,
    pub value: f64,
}

/// For every corpus `j`, values the remaining corpora with `j` as the
/// target and pairs each value with the features of `(j, x)`.
///
/// `make_oracle(j)` must return an oracle whose sources are all corpora
/// except `j`, in their original order, with `j` as the single target.
pub fn build_ranker_dataset<F>(
    names: &[String],
    features: &FeatureTable,
    config: &EngineConfig,
    mut make_oracle: F,
) -> Result<Vec<RankerRow>>
where
    F: FnMut(usize) -> Result<Box<dyn ScoreOracle>>,
{
    let m = names.len();
    if m < 3 {
        return Err(Error::invalid(format!(
            "building a ranker dataset needs at least 3 corpora, got {m}"
        )));
    }
    for (j, target) in names.iter().enumerate() {
        for (x, source) in names.iter().enumerate() {
            if x != j {
                features.get(target, source)?;
            }
        }
    }
    let mut rows = Vec::with_capacity(m * (m - 1));
    for (j, target) in names.iter().enumerate() {
        let oracle = make_oracle(j)?;
        let expected: Vec<&String> = names
            .iter()
            .enumerate()
            .filter(|&(x, _)| x != j)
            .map(|(_, n)| n)
            .collect();
        if oracle.source_names().iter().collect::<Vec<_>>() != expected || oracle.num_targets() != 1 {
            return Err(Error::invalid(format!(
                "oracle for held-out corpus {target:?} has the wrong sources or targets"
            )));
        }
        let result = seal_shap(oracle.as_ref(), config)?;
        log::info!("ranker dataset: {target} valued in {} epochs", result.epochs_run);
        for (source, value) in expected.into_iter().zip(&result.values[0]) {
            rows.push(RankerRow {
                target: target.clone(),
                source: source.clone(),
                features: features.get(target, source)?.to_vec(),
                value: *value,
            });
        }
    }
    Ok(rows)
}

/// Built-in oracle that holds out corpus `held_out` as the target and trains
/// on the others.
pub fn held_out_oracle(
    corpora: &[SourceCorpus],
    held_out: usize,
    kind: ClassifierKind,
    n_labels: usize,
) -> Result<CorpusOracle> {
    let target: TargetCorpus = corpora
        .get(held_out)
        .ok_or_else(|| Error::invalid(format!("no corpus {held_out}")))?
        .as_target();
    let sources = corpora
        .iter()
        .filter(|c| c.id.index != held_out)
        .enumerate()
        .map(|(index, c)| SourceCorpus {
            id: SourceId {
                index,
                name: c.id.name.clone(),
            },
            instances: c.instances.clone(),
        })
        .collect();
    CorpusOracle::new(sources, vec![target], kind, n_labels)
}

/// Linear model over standardized features. `weights` and `intercept` are
/// expressed on the raw feature scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

/// Closed-form ridge regression with an unpenalized intercept.
pub fn train_ranker(rows: &[RankerRow], lambda: f64) -> Result<RankerModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::invalid("no training rows"));
    }
    let dim = rows[0].features.len();
    if rows.iter().any(|r| r.features.len() != dim) {
        return Err(Error::invalid("training rows differ in feature count"));
    }

    let mean: Vec<f64> = (0..dim)
        .map(|k| rows.iter().map(|r| r.features[k]).sum::<f64>() / n as f64)
        .collect();
    let scale: Vec<f64> = (0..dim)
        .map(|k| {
            let var = rows.iter().map(|r| (r.features[k] - mean[k]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let y_mean = rows.iter().map(|r| r.value).sum::<f64>() / n as f64;

    let z = DMatrix::from_fn(n, dim, |i, k| (rows[i].features[k] - mean[k]) / scale[k]);
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.value - y_mean));
    let mut gram = z.transpose() * &z;
    for k in 0..dim {
        gram[(k, k)] += lambda;
    }
    let rhs = z.transpose() * y;
    let beta = gram
        .cholesky()
        .ok_or_else(|| Error::Numeric("normal equations are singular; use lambda > 0".into()))?
        .solve(&rhs);

    let weights: Vec<f64> = (0..dim).map(|k| beta[k] / scale[k]).collect();
    let intercept = y_mean - weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
    if weights.iter().any(|w| !w.is_finite()) || !intercept.is_finite() {
        return Err(Error::Numeric("ridge solution is not finite; use lambda > 0".into()));
    }
    Ok(RankerModel {
        weights,
        intercept,
        lambda,
        feature_mean: mean,
        feature_scale: scale,
    })
}

pub fn predict_source_values(model: &RankerModel, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    features
        .iter()
        .map(|f| {
            if f.len() != model.weights.len() {
                return Err(Error::invalid(format!(
                    "feature vector has {} values, model expects {}",
                    f.len(),
                    model.weights.len()
                )));
            }
            Ok(model.intercept + model.weights.iter().zip(f).map(|(w, x)| w * x).sum::<f64>())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaLoss {
    pub lambda: f64,
    /// Mean squared error over held-out targets.
    pub loss: f64,
}

/// Leave-one-target-out mean squared error for each `lambda`.
pub fn lambda_sweep(rows: &[RankerRow], lambdas: &[f64]) -> Result<Vec<LambdaLoss>> {
    let mut targets: Vec<&str> = rows.iter().map(|r| r.target.as_str()).collect();
    targets.sort_unstable();
    targets.dedup();
    if targets.len() < 2 {
        return Err(Error::invalid("lambda sweep needs rows from at least two targets"));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let mut sq = 0.0;
            for held in &targets {
                let (test, train): (Vec<RankerRow>, Vec<RankerRow>) =
                    rows.iter().cloned().partition(|r| r.target == *held);
                let model = train_ranker(&train, lambda)?;
                let feats: Vec<Vec<f64>> = test.iter().map(|r| r.features.clone()).collect();
                let pred = predict_source_values(&model, &feats)?;
                sq += pred.iter().zip(&test).map(|(p, r)| (p - r.value).powi(2)).sum::<f64>();
            }
            Ok(LambdaLoss {
                lambda,
                loss: sq / rows.len() as f64,
            })
        })
        .collect()
}
