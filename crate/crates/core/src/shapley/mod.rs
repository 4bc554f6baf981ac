//! Valuation engines: the sampled estimator, exact enumeration and the
//! baseline valuations.

mod baselines;
mod cache;
mod engine;
mod exact;
mod rho;

pub use baselines::{baseline_loo, baseline_random, baseline_single, greedy_dfs};
pub use cache::{CacheEntry, SubsetScoreCache, CACHE_FORMAT_VERSION};
pub use engine::{seal_shap, Convergence, EngineConfig, EpochTrace, SealShap, ValuationResult};
pub use exact::{exact_shapley, MAX_EXACT_SOURCES};
pub use rho::{resolve_rho, RhoPolicy};

use crate::error::Result;
use crate::oracle::Evaluator;

/// Exact values of the game an oracle induces, with `empty` standing in for
/// the score of the empty subset.
pub fn exact_from_oracle(evaluator: &Evaluator<'_>, empty: &[f64]) -> Result<Vec<Vec<f64>>> {
    let m = evaluator.oracle().num_sources();
    exact_shapley(
        |k| evaluator.score(k),
        m,
        &crate::game::ScoreVector::new(empty.to_vec()),
    )
}
