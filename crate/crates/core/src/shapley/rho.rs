//! Initial score `v_0` used at the start of every permutation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{make_subset_key, ScoreVector, SubsetKey};
use crate::oracle::{Evaluator, ScoreOracle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RhoPolicy {
    /// Score of a randomly initialised model.
    Random,
    /// `(m-1)/m` times the mean single-source score.
    FracSingle,
    Const(f64),
    /// Half the all-sources score.
    AllHalf,
    All,
    /// Mean of the all-sources score and every single-source score.
    Mu,
    /// Score of a model trained on nothing; recovers the classical game.
    EmptyScore,
}

impl fmt::Display for RhoPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RhoPolicy::Random => f.write_str("random"),
            RhoPolicy::FracSingle => f.write_str("frac-single"),
            RhoPolicy::Const(c) => write!(f, "const:{c}"),
            RhoPolicy::AllHalf => f.write_str("all-half"),
            RhoPolicy::All => f.write_str("all"),
            RhoPolicy::Mu => f.write_str("mu"),
            RhoPolicy::EmptyScore => f.write_str("empty"),
        }
    }
}

impl FromStr for RhoPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "random" => RhoPolicy::Random,
            "frac-single" => RhoPolicy::FracSingle,
            "all-half" => RhoPolicy::AllHalf,
            "all" => RhoPolicy::All,
            "mu" => RhoPolicy::Mu,
            "empty" => RhoPolicy::EmptyScore,
            other => {
                let c = other
                    .strip_prefix("const:")
                    .and_then(|c| c.parse::<f64>().ok())
                    .filter(|c| c.is_finite())
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "unknown initial-score policy {other:?} (expected random, frac-single, const:<c>, all-half, all, mu or empty)"
                        ))
                    })?;
                RhoPolicy::Const(c)
            }
        })
    }
}

impl TryFrom<String> for RhoPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RhoPolicy> for String {
    fn from(p: RhoPolicy) -> String {
        p.to_string()
    }
}

/// Resolves `policy` to one initial score per target. Subset scores are
/// requested through `score`, so a caller can route them through a cache.
pub(crate) fn resolve_rho_with(
    policy: RhoPolicy,
    oracle: &dyn ScoreOracle,
    score: &mut dyn FnMut(&SubsetKey) -> Result<ScoreVector>,
) -> Result<Vec<f64>> {
    let m = oracle.num_sources();
    let targets = oracle.num_targets();
    let singles = |score: &mut dyn FnMut(&SubsetKey) -> Result<ScoreVector>| -> Result<Vec<ScoreVector>> {
        (0..m).map(|j| score(&make_subset_key(&[j], m)?)).collect()
    };
    let column_mean = |vs: &[ScoreVector]| -> Vec<f64> {
        (0..targets)
            .map(|t| vs.iter().map(|v| v[t]).sum::<f64>() / vs.len() as f64)
            .collect()
    };
    let rho = match policy {
        RhoPolicy::Random => oracle.untrained_score()?.0,
        RhoPolicy::EmptyScore => oracle.empty_score()?.0,
        RhoPolicy::Const(c) => {
            let (lo, hi) = oracle.score_range();
            if !(lo..=hi).contains(&c) {
                return Err(Error::invalid(format!(
                    "constant initial score {c} outside score range [{lo}, {hi}]"
                )));
            }
            vec![c; targets]
        }
        RhoPolicy::All => score(&SubsetKey::full(m))?.0,
        RhoPolicy::AllHalf => score(&SubsetKey::full(m))?.0.iter().map(|s| s / 2.0).collect(),
        RhoPolicy::FracSingle => {
            if m == 0 {
                return Err(Error::invalid("no sources"));
            }
            let factor = (m as f64 - 1.0) / m as f64;
            column_mean(&singles(score)?).into_iter().map(|s| factor * s).collect()
        }
        RhoPolicy::Mu => {
            let mut all = vec![score(&SubsetKey::full(m))?];
            all.extend(singles(score)?);
            column_mean(&all)
        }
    };
    ScoreVector::new(rho.clone())
        .validate(targets)
        .map_err(|e| Error::oracle(format!("initial score: {e}"), None))?;
    Ok(rho)
}

/// Resolves `policy` against `evaluator`'s oracle, drawing subset samples
/// with its sample spec.
pub fn resolve_rho(policy: RhoPolicy, evaluator: &Evaluator<'_>) -> Result<Vec<f64>> {
    resolve_rho_with(policy, evaluator.oracle(), &mut |k| evaluator.score(k))
}
