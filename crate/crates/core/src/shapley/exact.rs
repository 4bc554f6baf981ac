use crate::error::{Error, Result};
use crate::game::{ScoreVector, SubsetKey};

/// Largest universe the exact enumeration accepts.
pub const MAX_EXACT_SOURCES: usize = 16;

/// Exact Shapley values by enumerating all `2^m` subsets.
///
/// `score` is called once for every non-empty subset; the empty subset takes
/// `empty_score`. Returns a `[target][source]` matrix.
pub fn exact_shapley<F>(mut score: F, m: usize, empty_score: &ScoreVector) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&SubsetKey) -> Result<ScoreVector>,
{
    if m > MAX_EXACT_SOURCES {
        return Err(Error::TooLarge {
            m,
            max: MAX_EXACT_SOURCES,
        });
    }
    let targets = empty_score.len();
    empty_score.validate(targets)?;
    if targets == 0 {
        return Err(Error::invalid("empty score has no targets"));
    }

    let n_subsets = 1usize << m;
    let mut table = Vec::with_capacity(n_subsets);
    table.push(empty_score.clone());
    for mask in 1..n_subsets as u64 {
        let key = SubsetKey::from_mask(mask);
        let v = score(&key)?;
        v.validate(targets)
            .map_err(|e| Error::oracle(format!("score of {key}: {e}"), None))?;
        table.push(v);
    }

    // weight of a coalition of size s not containing j: s!(m-s-1)!/m! = 1 / (m * C(m-1, s))
    let mut weight = vec![0.0; m.max(1)];
    let mut binom = 1.0f64;
    for (s, w) in weight.iter_mut().enumerate().take(m) {
        *w = 1.0 / (m as f64 * binom);
        binom = binom * (m - 1 - s) as f64 / (s + 1) as f64;
    }

    let mut phi = vec![vec![0.0; m]; targets];
    for mask in 0..n_subsets {
        let size = mask.count_ones() as usize;
        for j in (0..m).filter(|j| mask >> j & 1 == 0) {
            let with = &table[mask | 1 << j];
            let without = &table[mask];
            for (t, row) in phi.iter_mut().enumerate() {
                row[j] += weight[size] * (with[t] - without[t]);
            }
        }
    }
    Ok(phi)
}
