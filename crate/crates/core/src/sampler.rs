//! Stratified subsampling of a source subset, seeded by the subset itself.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::game::SubsetKey;
use crate::oracle::TrainBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub rate: f64,
    pub base_seed: u64,
}

impl SampleSpec {
    pub fn new(rate: f64, base_seed: u64) -> Result<Self> {
        let spec = SampleSpec { rate, base_seed };
        spec.validate()?;
        Ok(spec)
    }

    /// Every instance of every source.
    pub fn full() -> Self {
        SampleSpec {
            rate: 1.0,
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::invalid(format!(
                "sample rate must be in (0, 1], got {}",
                self.rate
            )));
        }
        Ok(())
    }

    /// `ceil(rate * n)`, clamped to `[1, n]`. Products that land within
    /// rounding noise of an integer are not bumped up.
    pub fn sample_size(&self, n: usize) -> usize {
        let x = self.rate * n as f64;
        let k = if (x - x.round()).abs() < 1e-9 {
            x.round()
        } else {
            x.ceil()
        };
        (k as usize).clamp(1.min(n), n)
    }

    /// Seed of the draw bound to `subset`; stored alongside cached scores.
    pub fn subset_seed(&self, subset: &SubsetKey) -> u64 {
        let mut h = Sha256::new();
        h.update(b"shapsrc/subset");
        h.update(self.base_seed.to_le_bytes());
        h.update(subset.to_bytes());
        first_u64(&h.finalize())
    }
}

fn first_u64(digest: &[u8]) -> u64 {
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn stratum_seed(subset_seed: u64, source: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"shapsrc/stratum");
    h.update(subset_seed.to_le_bytes());
    h.update((source as u64).to_le_bytes());
    first_u64(&h.finalize())
}

/// Draws `ceil(rate * |D_x|)` distinct instance indices from every source of
/// `subset`, independently per source. Indices within a source are returned
/// in ascending (load) order.
pub fn stratified_sample(subset: &SubsetKey, source_lens: &[usize], spec: &SampleSpec) -> Result<TrainBundle> {
    spec.validate()?;
    if subset.is_empty() {
        return Err(Error::invalid("cannot sample an empty subset"));
    }
    let seed = spec.subset_seed(subset);
    let mut per_source = Vec::with_capacity(subset.len());
    for source in subset.iter() {
        let n = *source_lens
            .get(source)
            .ok_or_else(|| Error::invalid(format!("no corpus for source {source}")))?;
        let k = spec.sample_size(n);
        let indices = if k == n {
            (0..n).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(stratum_seed(seed, source));
            let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
            picked.sort_unstable();
            picked
        };
        per_source.push((source, indices));
    }
    Ok(TrainBundle { per_source, seed })
}
