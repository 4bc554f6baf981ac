//! Turning source values into a chosen subset of sources.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{make_subset_key, ScoreVector, SubsetKey};
use crate::oracle::Evaluator;

/// Threshold candidates tried when none are configured.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [1e-2, 5e-3, 1e-3];

/// Indices of the `k` highest values, best first; ties go to the smaller
/// index.
pub fn select_topk(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > values.len() {
        return Err(Error::invalid(format!("k must be in 1..={}, got {k}", values.len())));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

/// Indices whose value is strictly greater than `theta`, ascending.
pub fn select_threshold(values: &[f64], theta: f64) -> Vec<usize> {
    (0..values.len()).filter(|&i| values[i] > theta).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub theta: f64,
    pub subset: Vec<usize>,
    /// Dev scores of the model trained on `subset`; absent when the
    /// threshold kept no source or every source.
    pub scores: Option<ScoreVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub chosen: Vec<usize>,
    pub theta_used: Option<f64>,
    pub all_sources_score: f64,
    pub dev_scores: Vec<CandidateScore>,
    pub fallback_all: bool,
}

/// Tries every threshold in `candidates`, scores each resulting proper subset
/// on target `dev_target`, and keeps the best one. Falls back to all sources
/// unless some subset strictly beats them. Equal scores prefer the larger
/// threshold.
pub fn tune_threshold(
    values: &[f64],
    candidates: &[f64],
    evaluator: &Evaluator<'_>,
    dev_target: usize,
) -> Result<SelectionReport> {
    let oracle = evaluator.oracle();
    let m = oracle.num_sources();
    if values.len() != m {
        return Err(Error::invalid(format!("{} values for {m} sources", values.len())));
    }
    if candidates.is_empty() {
        return Err(Error::invalid("no threshold candidates"));
    }
    if dev_target >= oracle.num_targets() {
        return Err(Error::invalid(format!("no target with index {dev_target}")));
    }
    let all_sources_score = evaluator.score(&SubsetKey::full(m))?[dev_target];

    let mut ordered: Vec<f64> = candidates.to_vec();
    ordered.sort_by(|a, b| b.total_cmp(a));

    let mut dev_scores = Vec::with_capacity(ordered.len());
    let mut best: Option<(f64, Vec<usize>, f64)> = None;
    for theta in ordered {
        let subset = select_threshold(values, theta);
        let scores = if subset.is_empty() || subset.len() == m {
            None
        } else {
            let s = evaluator.score(&make_subset_key(&subset, m)?)?;
            if best.as_ref().is_none_or(|(_, _, b)| s[dev_target] > *b) {
                best = Some((theta, subset.clone(), s[dev_target]));
            }
            Some(s)
        };
        dev_scores.push(CandidateScore { theta, subset, scores });
    }

    Ok(match best {
        Some((theta, subset, score)) if score > all_sources_score => SelectionReport {
            chosen: subset,
            theta_used: Some(theta),
            all_sources_score,
            dev_scores,
            fallback_all: false,
        },
        _ => SelectionReport {
            chosen: (0..m).collect(),
            theta_used: None,
            all_sources_score,
            dev_scores,
            fallback_all: true,
        },
    })
}
