//! Shared domain types: source identities, canonical subset keys and score
//! vectors.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceId {
    pub index: usize,
    pub name: String,
}

/// Validates that `names` can label a dense universe of sources and returns
/// the corresponding ids.
pub fn source_ids<S: AsRef<str>>(names: &[S]) -> Result<Vec<SourceId>> {
    let mut seen = std::collections::HashSet::new();
    names
        .iter()
        .enumerate()
        .map(|(index, name)| {
            let name = name.as_ref();
            if name.is_empty() {
                return Err(Error::invalid(format!("source {index} has an empty name")));
            }
            if !seen.insert(name.to_owned()) {
                return Err(Error::invalid(format!("duplicate source name {name:?}")));
            }
            Ok(SourceId {
                index,
                name: name.to_owned(),
            })
        })
        .collect()
}

/// Canonical identity of an unordered set of sources: members sorted
/// ascending without duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubsetKey(Vec<u32>);

impl SubsetKey {
    pub fn empty() -> Self {
        SubsetKey(Vec::new())
    }

    /// The whole universe `{0, .., m-1}`.
    pub fn full(m: usize) -> Self {
        SubsetKey((0..m as u32).collect())
    }

    pub fn from_mask(mask: u64) -> Self {
        SubsetKey((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn members(&self) -> &[u32] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&i| i as usize)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&(index as u32)).is_ok()
    }

    /// Bitmask form; only valid for universes of at most 64 sources.
    pub fn to_mask(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &i| acc | 1 << i)
    }

    /// A new key with `index` added (no-op if already present).
    pub fn with(&self, index: usize) -> Self {
        let mut members = self.0.clone();
        if let Err(pos) = members.binary_search(&(index as u32)) {
            members.insert(pos, index as u32);
        }
        SubsetKey(members)
    }

    pub fn without(&self, index: usize) -> Self {
        SubsetKey(self.0.iter().copied().filter(|&i| i as usize != index).collect())
    }

    /// Fixed-width little-endian layout: member count as u32, then each
    /// member as u32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.0.len());
        out.extend_from_slice(&(self.0.len() as u32).to_le_bytes());
        for m in &self.0 {
            out.extend_from_slice(&m.to_le_bytes());
        }
        out
    }

    /// Inverse of [`SubsetKey::to_bytes`]. Returns the key and the number of
    /// bytes consumed.
    pub fn from_bytes(bytes: &[u8], universe: usize) -> Result<(Self, usize)> {
        let word = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| Error::invalid("truncated subset key"))
        };
        let n = word(0)? as usize;
        if n > universe {
            return Err(Error::invalid(format!(
                "subset key with {n} members in a universe of {universe}"
            )));
        }
        let members = (0..n)
            .map(|i| word(4 + 4 * i).map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let key = make_subset_key(&members, universe)?;
        if key.0.iter().zip(&members).any(|(&a, &b)| a as usize != b) {
            return Err(Error::invalid("subset key bytes are not canonical"));
        }
        Ok((key, 4 + 4 * n))
    }
}

impl fmt::Display for SubsetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}")
    }
}

/// Builds the canonical key for `members` within a universe of `universe`
/// sources. Duplicates and out-of-range indices are rejected.
pub fn make_subset_key(members: &[usize], universe: usize) -> Result<SubsetKey> {
    let mut sorted = Vec::with_capacity(members.len());
    for &m in members {
        if m >= universe {
            return Err(Error::invalid(format!(
                "source index {m} outside universe of {universe}"
            )));
        }
        sorted.push(m as u32);
    }
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid(format!("duplicate source index in {members:?}")));
    }
    Ok(SubsetKey(sorted))
}

/// Per-target scores of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Self {
        ScoreVector(scores)
    }

    /// Same score on every one of `targets` targets.
    pub fn splat(value: f64, targets: usize) -> Self {
        ScoreVector(vec![value; targets])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Checks arity and finiteness.
    pub fn validate(&self, targets: usize) -> Result<()> {
        if self.0.len() != targets {
            return Err(Error::invalid(format!(
                "score vector has {} entries, expected {targets}",
                self.0.len()
            )));
        }
        if let Some(bad) = self.0.iter().find(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite score {bad}")));
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for ScoreVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
