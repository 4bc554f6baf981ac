//! Source corpus valuation for transfer learning.
//!
//! Estimates how much each source corpus contributes to transfer performance
//! on one or more targets (its Shapley value in the game whose payoff is the
//! score of a model trained on a subset of sources), then uses those values
//! to pick sources, rank sources for unlabeled targets and compare against
//! simpler baselines.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod game;
pub mod oracle;
pub mod ranker;
pub mod sampler;
pub mod select;
pub mod shapley;
pub mod synth;

pub use error::{Error, Result};
pub use game::{make_subset_key, ScoreVector, SourceId, SubsetKey};
pub use oracle::{ClassifierKind, CorpusOracle, Evaluator, ScoreOracle, TabularGame, TabularOracle};
pub use sampler::{stratified_sample, SampleSpec};
pub use shapley::{exact_shapley, seal_shap, EngineConfig, RhoPolicy, ValuationResult};
