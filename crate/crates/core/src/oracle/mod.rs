//! Score oracles: given the training bundle drawn for a subset of sources,
//! produce one score per target.

mod builtin;
mod external;
mod tabular;

pub use builtin::{builtin_train_and_score, ClassifierKind, CorpusOracle};
pub use external::{ExternalOptions, ExternalOracle};
pub use tabular::{synthetic_score, TabularGame, TabularOracle};

use crate::error::{Error, Result};
use crate::game::{ScoreVector, SubsetKey};
use crate::sampler::{stratified_sample, SampleSpec};

/// Selected instance indices per source, plus the seed of the draw.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainBundle {
    pub per_source: Vec<(usize, Vec<usize>)>,
    pub seed: u64,
}

impl TrainBundle {
    /// Every instance of every listed source, in load order.
    pub fn full(sources: &SubsetKey, source_lens: &[usize]) -> Self {
        TrainBundle {
            per_source: sources.iter().map(|s| (s, (0..source_lens[s]).collect())).collect(),
            seed: 0,
        }
    }

    pub fn instance_count(&self) -> usize {
        self.per_source.iter().map(|(_, idx)| idx.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.instance_count() == 0
    }
}

/// The `Score(C_Ω, V)` black box. Implementations must be deterministic in
/// their inputs; they may be called concurrently.
pub trait ScoreOracle: Send + Sync {
    fn source_names(&self) -> &[String];

    fn target_names(&self) -> &[String];

    /// Instance count per source, used to size the stratified draws.
    fn source_lens(&self) -> Vec<usize>;

    /// Closed interval every score falls into.
    fn score_range(&self) -> (f64, f64);

    /// Train on `bundle` (drawn for `subset`) and score every target.
    fn score(&self, subset: &SubsetKey, bundle: &TrainBundle) -> Result<ScoreVector>;

    /// Score of a model that saw no training data.
    fn empty_score(&self) -> Result<ScoreVector>;

    /// Score of a randomly initialised model.
    fn untrained_score(&self) -> Result<ScoreVector> {
        self.empty_score()
    }

    fn num_sources(&self) -> usize {
        self.source_names().len()
    }

    fn num_targets(&self) -> usize {
        self.target_names().len()
    }

    fn range_width(&self) -> f64 {
        let (lo, hi) = self.score_range();
        hi - lo
    }
}

/// Samples and scores subsets against one oracle, checking what comes back.
pub struct Evaluator<'a> {
    oracle: &'a dyn ScoreOracle,
    spec: SampleSpec,
    lens: Vec<usize>,
}

impl<'a> Evaluator<'a> {
    pub fn new(oracle: &'a dyn ScoreOracle, spec: SampleSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Evaluator {
            oracle,
            spec,
            lens: oracle.source_lens(),
        })
    }

    pub fn oracle(&self) -> &'a dyn ScoreOracle {
        self.oracle
    }

    pub fn spec(&self) -> &SampleSpec {
        &self.spec
    }

    /// Score of `subset`; the empty subset maps to the oracle's empty score.
    pub fn score(&self, subset: &SubsetKey) -> Result<ScoreVector> {
        if subset.is_empty() {
            let s = self.oracle.empty_score()?;
            return self.check(s);
        }
        let bundle = stratified_sample(subset, &self.lens, &self.spec)?;
        let s = self.oracle.score(subset, &bundle)?;
        self.check(s)
    }

    fn check(&self, scores: ScoreVector) -> Result<ScoreVector> {
        scores
            .validate(self.oracle.num_targets())
            .map_err(|e| Error::oracle(e.to_string(), Some(format!("{:?}", scores.0))))?;
        Ok(scores)
    }
}
