//! Reference valuations: single-source transfer, leave-one-out, random
//! values and greedy forward selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::{make_subset_key, SubsetKey};
use crate::oracle::Evaluator;

fn transpose(columns: Vec<Vec<f64>>, targets: usize) -> Vec<Vec<f64>> {
    (0..targets).map(|t| columns.iter().map(|c| c[t]).collect()).collect()
}

/// `value_j = Score({j})`, as a `[target][source]` matrix.
pub fn baseline_single(evaluator: &Evaluator<'_>) -> Result<Vec<Vec<f64>>> {
    let oracle = evaluator.oracle();
    let m = oracle.num_sources();
    let columns = (0..m)
        .map(|j| Ok(evaluator.score(&make_subset_key(&[j], m)?)?.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(transpose(columns, oracle.num_targets()))
}

/// `value_j = Score(D) - Score(D \ {j})`.
pub fn baseline_loo(evaluator: &Evaluator<'_>) -> Result<Vec<Vec<f64>>> {
    let oracle = evaluator.oracle();
    let m = oracle.num_sources();
    if m < 2 {
        return Err(Error::invalid("leave-one-out needs at least two sources"));
    }
    let full = SubsetKey::full(m);
    let all = evaluator.score(&full)?;
    let columns = (0..m)
        .map(|j| {
            let rest = evaluator.score(&full.without(j))?;
            Ok((0..all.len()).map(|t| all[t] - rest[t]).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(transpose(columns, oracle.num_targets()))
}

/// `m` uniform draws from `[0, 1)`.
pub fn baseline_random(m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| rng.gen::<f64>()).collect()
}

/// Greedy forward selection on `target`: start from the best single source,
/// then repeatedly add the source giving the best score together with those
/// already chosen. Ties go to the smallest index.
pub fn greedy_dfs(evaluator: &Evaluator<'_>, target: usize, k: usize) -> Result<Vec<usize>> {
    let oracle = evaluator.oracle();
    let m = oracle.num_sources();
    if k == 0 || k > m {
        return Err(Error::invalid(format!("k must be in 1..={m}, got {k}")));
    }
    if target >= oracle.num_targets() {
        return Err(Error::invalid(format!("no target with index {target}")));
    }
    let mut chosen = SubsetKey::empty();
    let mut order = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for x in (0..m).filter(|&x| !chosen.contains(x)) {
            let s = evaluator.score(&chosen.with(x))?[target];
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((x, s));
            }
        }
        let (x, _) = best.expect("k <= m leaves a candidate");
        chosen = chosen.with(x);
        order.push(x);
    }
    Ok(order)
}
