//! One-pass classifiers used as built-in oracles.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Features, Instance, SourceCorpus, TargetCorpus};
use crate::error::{Error, Result};
use crate::game::{ScoreVector, SubsetKey};
use crate::oracle::{ScoreOracle, TrainBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    /// Multinomial token counts per class, add-one smoothed likelihoods.
    NaiveCount,
    NearestCentroid,
}

trait Classifier {
    fn predict(&self, features: &Features) -> usize;
}

/// Picks the highest score; ties go to the smallest label id.
fn argmax(scores: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (label, s) in scores {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((label, s)),
        }
    }
    best.map(|(l, _)| l).unwrap_or(0)
}

struct CountModel<'a> {
    // log prior of every class seen in training
    log_prior: Vec<(usize, f64)>,
    counts: HashMap<&'a str, Vec<u32>>,
    // ln(total tokens of class + |V|), indexed by label
    log_denominator: Vec<f64>,
}

impl<'a> CountModel<'a> {
    fn fit(train: &[&'a Instance], n_labels: usize) -> Result<Self> {
        let mut docs = vec![0usize; n_labels];
        let mut totals = vec![0u64; n_labels];
        let mut counts: HashMap<&str, Vec<u32>> = HashMap::new();
        for inst in train {
            let Features::Text(tokens) = &inst.features else {
                return Err(Error::invalid("counting classifier needs text instances"));
            };
            docs[inst.label] += 1;
            totals[inst.label] += tokens.len() as u64;
            for tok in tokens {
                counts.entry(tok.as_str()).or_insert_with(|| vec![0; n_labels])[inst.label] += 1;
            }
        }
        let n = train.len() as f64;
        let vocab = counts.len() as f64;
        let log_prior = docs
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0)
            .map(|(l, &d)| (l, (d as f64 / n).ln()))
            .collect();
        let log_denominator = totals.iter().map(|&t| (t as f64 + vocab).ln()).collect();
        Ok(CountModel {
            log_prior,
            counts,
            log_denominator,
        })
    }
}

impl Classifier for CountModel<'_> {
    fn predict(&self, features: &Features) -> usize {
        let Features::Text(tokens) = features else {
            return 0;
        };
        let known: Vec<&Vec<u32>> = tokens.iter().filter_map(|t| self.counts.get(t.as_str())).collect();
        argmax(self.log_prior.iter().map(|&(label, prior)| {
            let likelihood: f64 = known
                .iter()
                .map(|c| (c[label] as f64 + 1.0).ln() - self.log_denominator[label])
                .sum();
            (label, prior + likelihood)
        }))
    }
}

struct CentroidModel {
    centroids: Vec<(usize, Vec<f64>)>,
}

impl CentroidModel {
    fn fit(train: &[&Instance], n_labels: usize) -> Result<Self> {
        let mut sums: Vec<Option<(Vec<f64>, usize)>> = vec![None; n_labels];
        for inst in train {
            let Features::Dense(v) = &inst.features else {
                return Err(Error::invalid("nearest-centroid classifier needs dense instances"));
            };
            let (sum, n) = sums[inst.label].get_or_insert_with(|| (vec![0.0; v.len()], 0));
            if sum.len() != v.len() {
                return Err(Error::invalid("dense instances differ in dimensionality"));
            }
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            *n += 1;
        }
        let centroids = sums
            .into_iter()
            .enumerate()
            .filter_map(|(label, s)| s.map(|(sum, n)| (label, sum.into_iter().map(|x| x / n as f64).collect())))
            .collect();
        Ok(CentroidModel { centroids })
    }
}

impl Classifier for CentroidModel {
    fn predict(&self, features: &Features) -> usize {
        let Features::Dense(v) = features else {
            return 0;
        };
        argmax(self.centroids.iter().map(|(label, c)| {
            let d2: f64 = c.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            (*label, -d2)
        }))
    }
}

fn accuracy(model: &dyn Classifier, target: &TargetCorpus) -> f64 {
    let correct = target
        .instances
        .iter()
        .filter(|i| model.predict(&i.features) == i.label)
        .count();
    correct as f64 / target.instances.len() as f64
}

fn label_count<'a>(instances: impl Iterator<Item = &'a Instance>) -> usize {
    instances.map(|i| i.label + 1).max().unwrap_or(0)
}

/// Trains `kind` on the union of the instances selected by `bundle` and
/// returns its accuracy on every target.
pub fn builtin_train_and_score(
    bundle: &TrainBundle,
    sources: &[SourceCorpus],
    targets: &[TargetCorpus],
    kind: ClassifierKind,
) -> Result<ScoreVector> {
    let mut train = Vec::with_capacity(bundle.instance_count());
    for (source, indices) in &bundle.per_source {
        let corpus = sources
            .get(*source)
            .ok_or_else(|| Error::invalid(format!("bundle names unknown source {source}")))?;
        for &i in indices {
            train.push(
                corpus
                    .instances
                    .get(i)
                    .ok_or_else(|| Error::invalid(format!("instance {i} out of range for {:?}", corpus.id.name)))?,
            );
        }
    }
    if train.is_empty() {
        return Err(Error::invalid("cannot train on an empty bundle"));
    }
    let n_labels = label_count(train.iter().copied().chain(targets.iter().flat_map(|t| &t.instances)));
    let model: Box<dyn Classifier + '_> = match kind {
        ClassifierKind::NaiveCount => Box::new(CountModel::fit(&train, n_labels)?),
        ClassifierKind::NearestCentroid => Box::new(CentroidModel::fit(&train, n_labels)?),
    };
    Ok(ScoreVector::new(
        targets.iter().map(|t| accuracy(model.as_ref(), t)).collect(),
    ))
}

/// Built-in oracle over in-memory corpora.
pub struct CorpusOracle {
    sources: Vec<SourceCorpus>,
    targets: Vec<TargetCorpus>,
    kind: ClassifierKind,
    n_labels: usize,
    source_names: Vec<String>,
    target_names: Vec<String>,
}

impl CorpusOracle {
    /// `n_labels` is the size of the label set; it sets the accuracy of
    /// random guessing.
    pub fn new(
        sources: Vec<SourceCorpus>,
        targets: Vec<TargetCorpus>,
        kind: ClassifierKind,
        n_labels: usize,
    ) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::invalid("no source corpora"));
        }
        if targets.is_empty() {
            return Err(Error::invalid("no target corpora"));
        }
        for (i, s) in sources.iter().enumerate() {
            if s.id.index != i {
                return Err(Error::invalid(format!(
                    "source {:?} has index {}, expected {i}",
                    s.id.name, s.id.index
                )));
            }
        }
        let source_names: Vec<String> = sources.iter().map(|s| s.id.name.clone()).collect();
        crate::game::source_ids(&source_names)?;
        let all = sources
            .iter()
            .flat_map(|s| &s.instances)
            .chain(targets.iter().flat_map(|t| &t.instances));
        let mut dim = None;
        for inst in all {
            if inst.label >= n_labels {
                return Err(Error::invalid(format!(
                    "label id {} outside label set of {n_labels}",
                    inst.label
                )));
            }
            match (&inst.features, kind) {
                (Features::Text(_), ClassifierKind::NaiveCount) => {}
                (Features::Dense(v), ClassifierKind::NearestCentroid) => {
                    if *dim.get_or_insert(v.len()) != v.len() {
                        return Err(Error::invalid("dense instances differ in dimensionality"));
                    }
                }
                _ => {
                    return Err(Error::invalid(format!(
                        "{kind:?} does not accept these instance features"
                    )))
                }
            }
        }
        let target_names = targets.iter().map(|t| t.name.clone()).collect();
        Ok(CorpusOracle {
            sources,
            targets,
            kind,
            n_labels,
            source_names,
            target_names,
        })
    }

    pub fn sources(&self) -> &[SourceCorpus] {
        &self.sources
    }

    pub fn targets(&self) -> &[TargetCorpus] {
        &self.targets
    }

    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }
}

impl ScoreOracle for CorpusOracle {
    fn source_names(&self) -> &[String] {
        &self.source_names
    }

    fn target_names(&self) -> &[String] {
        &self.target_names
    }

    fn source_lens(&self) -> Vec<usize> {
        self.sources.iter().map(SourceCorpus::len).collect()
    }

    fn score_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn score(&self, _subset: &SubsetKey, bundle: &TrainBundle) -> Result<ScoreVector> {
        builtin_train_and_score(bundle, &self.sources, &self.targets, self.kind)
    }

    /// A model with no data predicts the smallest label id everywhere.
    fn empty_score(&self) -> Result<ScoreVector> {
        Ok(ScoreVector::new(
            self.targets
                .iter()
                .map(|t| t.instances.iter().filter(|i| i.label == 0).count() as f64 / t.instances.len() as f64)
                .collect(),
        ))
    }

    /// Expected accuracy of uniform guessing over the label set.
    fn untrained_score(&self) -> Result<ScoreVector> {
        Ok(ScoreVector::splat(
            1.0 / self.n_labels.max(1) as f64,
            self.targets.len(),
        ))
    }
}
