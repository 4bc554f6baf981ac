//! Labeled corpora and JSONL ingestion.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::game::SourceId;

#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    /// Whitespace-split tokens.
    Text(Vec<String>),
    Dense(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: Features,
    pub label: usize,
}

impl Instance {
    pub fn text(text: &str, label: usize) -> Self {
        Instance {
            features: Features::Text(text.split_whitespace().map(str::to_owned).collect()),
            label,
        }
    }

    pub fn dense(vec: Vec<f64>, label: usize) -> Self {
        Instance {
            features: Features::Dense(vec),
            label,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SourceCorpus {
    pub id: SourceId,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone)]
pub struct TargetCorpus {
    pub name: String,
    pub instances: Vec<Instance>,
}

impl SourceCorpus {
    pub fn new(id: SourceId, instances: Vec<Instance>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::invalid(format!("source {:?} is empty", id.name)));
        }
        Ok(SourceCorpus { id, instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Reuse this corpus as an evaluation set.
    pub fn as_target(&self) -> TargetCorpus {
        TargetCorpus {
            name: self.id.name.clone(),
            instances: self.instances.clone(),
        }
    }
}

impl TargetCorpus {
    pub fn new(name: impl Into<String>, instances: Vec<Instance>) -> Result<Self> {
        let name = name.into();
        if instances.is_empty() {
            return Err(Error::invalid(format!("target {name:?} is empty")));
        }
        Ok(TargetCorpus { name, instances })
    }
}

/// Label strings mapped to dense ids in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        LabelSet {
            labels: set.into_iter().collect(),
        }
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    text: Option<String>,
    vec: Option<Vec<f64>>,
    label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureForm {
    Text,
    Dense(usize),
}

/// One JSONL file parsed but not yet assigned label ids.
#[derive(Debug, Clone)]
pub struct RawCorpus {
    pub path: PathBuf,
    pub rows: Vec<(Features, String)>,
}

pub fn read_jsonl(path: &Path) -> Result<RawCorpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_owned(),
            line: lineno + 1,
            message,
        };
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let features = match (rec.text, rec.vec) {
            (Some(t), None) => Features::Text(t.split_whitespace().map(str::to_owned).collect()),
            (None, Some(v)) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(parse_err("non-finite feature value".into()));
                }
                Features::Dense(v)
            }
            _ => return Err(parse_err("expected exactly one of \"text\" or \"vec\"".into())),
        };
        rows.push((features, rec.label));
    }
    Ok(RawCorpus {
        path: path.to_owned(),
        rows,
    })
}

/// Assigns label ids over all corpora of one problem and checks that every
/// instance uses the same feature form (and dimensionality, when dense).
pub fn assign_labels(corpora: &[RawCorpus]) -> Result<(LabelSet, FeatureForm, Vec<Vec<Instance>>)> {
    let labels = LabelSet::new(corpora.iter().flat_map(|c| c.rows.iter().map(|(_, l)| l.clone())));
    let mut form: Option<FeatureForm> = None;
    let mut out = Vec::with_capacity(corpora.len());
    for corpus in corpora {
        let mut instances = Vec::with_capacity(corpus.rows.len());
        for (i, (features, label)) in corpus.rows.iter().enumerate() {
            let this = match features {
                Features::Text(_) => FeatureForm::Text,
                Features::Dense(v) => FeatureForm::Dense(v.len()),
            };
            match form {
                None => form = Some(this),
                Some(f) if f != this => {
                    return Err(Error::Parse {
                        path: corpus.path.clone(),
                        line: i + 1,
                        message: format!("feature form {this:?} differs from {f:?} used earlier in the problem"),
                    })
                }
                _ => {}
            }
            instances.push(Instance {
                features: features.clone(),
                label: labels.id(label).expect("label collected above"),
            });
        }
        out.push(instances);
    }
    let form = form.ok_or_else(|| Error::invalid("no instances in any corpus"))?;
    Ok((labels, form, out))
}
