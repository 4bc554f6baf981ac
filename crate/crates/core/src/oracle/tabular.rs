use std::time::Duration;

use crate::error::{Error, Result};
use crate::game::{ScoreVector, SubsetKey};
use crate::oracle::{ScoreOracle, TrainBundle};

/// A cooperative game given by its full characteristic function: one score
/// vector per subset (indexed by bitmask), the empty subset included.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularGame {
    m: usize,
    targets: usize,
    table: Vec<ScoreVector>,
    range: (f64, f64),
}

const MAX_TABULAR: usize = 20;

impl TabularGame {
    /// Tabulates `rule` over all `2^m` subsets.
    pub fn from_fn(m: usize, targets: usize, mut rule: impl FnMut(&SubsetKey) -> Vec<f64>) -> Result<Self> {
        if m > MAX_TABULAR {
            return Err(Error::invalid(format!(
                "tabular games support at most {MAX_TABULAR} players"
            )));
        }
        if targets == 0 {
            return Err(Error::invalid("a game needs at least one target"));
        }
        let table = (0..1u64 << m)
            .map(|mask| {
                let key = SubsetKey::from_mask(mask);
                let v = ScoreVector::new(rule(&key));
                v.validate(targets)
                    .map_err(|e| Error::invalid(format!("value of {key}: {e}")))?;
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        let (lo, hi) = table
            .iter()
            .flat_map(|v| v.0.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        // a constant game still needs a non-degenerate range
        let range = if hi > lo { (lo, hi) } else { (lo, lo + 1.0) };
        Ok(TabularGame {
            m,
            targets,
            table,
            range,
        })
    }

    /// v(S) = Σ_{i∈S} w_i.
    pub fn additive(weights: &[f64]) -> Result<Self> {
        Self::from_fn(weights.len(), 1, |s| vec![s.iter().map(|i| weights[i]).sum()])
    }

    /// One left glove (player 0) and `m - 1` right gloves: v(S) = 1 iff S
    /// holds player 0 and at least one other player.
    pub fn glove(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid("glove game needs at least two players"));
        }
        Self::from_fn(m, 1, |s| vec![if s.contains(0) && s.len() >= 2 { 1.0 } else { 0.0 }])
    }

    /// Overrides the declared score range.
    pub fn with_range(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid(format!("score range [{lo}, {hi}] is empty")));
        }
        if let Some(v) = self.table.iter().flat_map(|v| v.0.iter()).find(|&&x| x < lo || x > hi) {
            return Err(Error::invalid(format!("tabulated value {v} outside [{lo}, {hi}]")));
        }
        self.range = (lo, hi);
        Ok(self)
    }

    pub fn players(&self) -> usize {
        self.m
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn value(&self, subset: &SubsetKey) -> Result<&ScoreVector> {
        if subset.iter().any(|i| i >= self.m) {
            return Err(Error::invalid(format!(
                "subset {subset} outside a game of {} players",
                self.m
            )));
        }
        Ok(&self.table[subset.to_mask() as usize])
    }

    pub fn empty_value(&self) -> &ScoreVector {
        &self.table[0]
    }
}

/// Looks up the tabulated value of `subset`.
pub fn synthetic_score(game: &TabularGame, subset: &SubsetKey) -> Result<ScoreVector> {
    game.value(subset).cloned()
}

/// Exposes a [`TabularGame`] through the oracle interface. Every source has
/// a single pseudo-instance, so sampling never changes the subset.
pub struct TabularOracle {
    game: TabularGame,
    sources: Vec<String>,
    targets: Vec<String>,
    delay: Duration,
}

impl TabularOracle {
    pub fn new(game: TabularGame) -> Self {
        let sources = (0..game.m).map(|i| format!("s{i}")).collect();
        let targets = (0..game.targets).map(|t| format!("t{t}")).collect();
        TabularOracle {
            game,
            sources,
            targets,
            delay: Duration::ZERO,
        }
    }

    pub fn with_names(mut self, sources: Vec<String>, targets: Vec<String>) -> Result<Self> {
        if sources.len() != self.game.m || targets.len() != self.game.targets {
            return Err(Error::invalid("name lists do not match the game's dimensions"));
        }
        crate::game::source_ids(&sources)?;
        self.sources = sources;
        self.targets = targets;
        Ok(self)
    }

    /// Sleeps this long on every evaluation, standing in for training time.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn game(&self) -> &TabularGame {
        &self.game
    }
}

impl ScoreOracle for TabularOracle {
    fn source_names(&self) -> &[String] {
        &self.sources
    }

    fn target_names(&self) -> &[String] {
        &self.targets
    }

    fn source_lens(&self) -> Vec<usize> {
        vec![1; self.game.m]
    }

    fn score_range(&self) -> (f64, f64) {
        self.game.range
    }

    fn score(&self, subset: &SubsetKey, _bundle: &TrainBundle) -> Result<ScoreVector> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        synthetic_score(&self.game, subset)
    }

    fn empty_score(&self) -> Result<ScoreVector> {
        Ok(self.game.empty_value().clone())
    }
}
