//! Permutation-sampling Shapley estimation with truncation, stratified
//! re-sampling and subset-score caching.
//!
//! Every epoch draws a permutation from a stream keyed by `(seed, epoch)` and
//! every subset draws its training sample from a seed bound to the subset, so
//! an epoch's marginal contributions are a pure function of the epoch number.
//! Epochs can therefore run in parallel; they are folded into the running
//! means strictly in epoch order, and hit/miss counters are reconstructed in
//! that same order, so results do not depend on the worker count.

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{ScoreVector, SubsetKey};
use crate::oracle::{Evaluator, ScoreOracle};
use crate::sampler::SampleSpec;
use crate::shapley::cache::SubsetScoreCache;
use crate::shapley::rho::{resolve_rho_with, RhoPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// Compare the estimates with those from this many epochs earlier.
    pub window: u64,
    /// Stop once no estimate moved by this much over the window. `None`
    /// means 1e-3 of the oracle's score range; `Some(0.0)` never stops early.
    pub epsilon: Option<f64>,
}

impl Default for Convergence {
    fn default() -> Self {
        Convergence {
            window: 10,
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub nepoch: u64,
    /// Truncation tolerance in score units; 0 disables truncation.
    pub tolerance: f64,
    pub rho: RhoPolicy,
    pub sample: SampleSpec,
    pub convergence: Convergence,
    pub seed: u64,
    /// Threads used to run epochs; results do not depend on it.
    pub workers: usize,
    /// When false every non-truncated step retrains.
    pub use_cache: bool,
    /// Keep the estimate matrix after every epoch.
    pub record_history: bool,
}

impl EngineConfig {
    pub fn new(seed: u64) -> Self {
        EngineConfig {
            nepoch: 100,
            tolerance: 0.0,
            rho: RhoPolicy::EmptyScore,
            sample: SampleSpec {
                rate: 1.0,
                base_seed: seed,
            },
            convergence: Convergence::default(),
            seed,
            workers: 1,
            use_cache: true,
            record_history: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nepoch == 0 {
            return Err(Error::invalid("nepoch must be at least 1"));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::invalid(format!(
                "tolerance must be a non-negative number, got {}",
                self.tolerance
            )));
        }
        if self.convergence.window == 0 {
            return Err(Error::invalid("convergence window must be at least 1"));
        }
        if let Some(eps) = self.convergence.epsilon {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::invalid(format!(
                    "convergence epsilon must be non-negative, got {eps}"
                )));
            }
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        self.sample.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: u64,
    /// Largest estimate change over the convergence window, once defined.
    pub max_delta: Option<f64>,
    pub cache_misses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationResult {
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    /// `[target][source]` Shapley estimates.
    pub values: Vec<Vec<f64>>,
    pub epochs_run: u64,
    pub converged: bool,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub oracle_trainings: u64,
    /// Steps where every target was within tolerance of the full score.
    pub truncated_steps: u64,
    pub seed: u64,
    pub rho: Vec<f64>,
    pub full_score: Vec<f64>,
    pub trace: Vec<EpochTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<Vec<Vec<f64>>>>,
}

struct EpochOutcome {
    /// `[target][source]`
    marginals: Vec<Vec<f64>>,
    lookups: Vec<SubsetKey>,
    truncated: u64,
}

/// Replays lookups in sequential order to produce worker-independent
/// hit/miss counts.
struct Accounting {
    use_cache: bool,
    seen: HashSet<SubsetKey>,
    hits: u64,
    misses: u64,
}

impl Accounting {
    fn record(&mut self, key: &SubsetKey) {
        if self.use_cache && !self.seen.insert(key.clone()) {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
    }
}

pub struct SealShap<'a> {
    oracle: &'a dyn ScoreOracle,
    config: EngineConfig,
    cache: Option<Arc<SubsetScoreCache>>,
}

impl<'a> SealShap<'a> {
    pub fn new(oracle: &'a dyn ScoreOracle, config: EngineConfig) -> Self {
        SealShap {
            oracle,
            config,
            cache: None,
        }
    }

    /// Use (and fill) an existing cache, e.g. one loaded from disk.
    pub fn with_cache(mut self, cache: Arc<SubsetScoreCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn run(self) -> Result<ValuationResult> {
        let cfg = &self.config;
        cfg.validate()?;
        let oracle = self.oracle;
        let m = oracle.num_sources();
        let n_targets = oracle.num_targets();
        if m == 0 {
            return Err(Error::invalid("no sources to value"));
        }
        if n_targets == 0 {
            return Err(Error::invalid("no targets"));
        }
        let cache = match self.cache {
            Some(c) => {
                if c.universe() != m || c.targets() != n_targets {
                    return Err(Error::invalid(format!(
                        "cache is for {} sources x {} targets, problem has {m} x {n_targets}",
                        c.universe(),
                        c.targets()
                    )));
                }
                c
            }
            None => Arc::new(SubsetScoreCache::in_memory(m, n_targets)),
        };
        let evaluator = Evaluator::new(oracle, cfg.sample)?;
        let lookup = |key: &SubsetKey| -> Result<ScoreVector> {
            if cfg.use_cache {
                let seed = cfg.sample.subset_seed(key);
                cache.get_or_compute(key, seed, || evaluator.score(key)).map(|(s, _)| s)
            } else {
                evaluator.score(key)
            }
        };

        let mut acct = Accounting {
            use_cache: cfg.use_cache,
            seen: cache.keys().into_iter().collect(),
            hits: 0,
            misses: 0,
        };
        let abort = |acct: &Accounting, epochs: u64, e: Error| Error::Aborted {
            epochs_completed: epochs,
            cache_misses: acct.misses,
            source: Box::new(e),
        };

        let full = SubsetKey::full(m);
        let full_score = lookup(&full).map_err(|e| abort(&acct, 0, e))?;
        acct.record(&full);
        let rho = resolve_rho_with(cfg.rho, oracle, &mut |key| {
            let s = lookup(key)?;
            acct.record(key);
            Ok(s)
        })
        .map_err(|e| abort(&acct, 0, e))?;

        let epsilon = cfg.convergence.epsilon.unwrap_or(1e-3 * oracle.range_width());
        let window = cfg.convergence.window as usize;

        let run_epoch = |epoch: u64| -> Result<EpochOutcome> {
            let mut perm: Vec<usize> = (0..m).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(epoch);
            perm.shuffle(&mut rng);

            let mut marginals = vec![vec![0.0; m]; n_targets];
            let mut lookups = Vec::new();
            let mut truncated = 0;
            let mut prev = rho.clone();
            let mut subset = SubsetKey::empty();
            for &source in &perm {
                subset = subset.with(source);
                let active: Vec<bool> = (0..n_targets)
                    .map(|t| !((full_score[t] - prev[t]).abs() < cfg.tolerance))
                    .collect();
                let next: Vec<f64> = if active.iter().any(|&a| a) {
                    let scores = lookup(&subset)?;
                    lookups.push(subset.clone());
                    (0..n_targets)
                        .map(|t| if active[t] { scores[t] } else { prev[t] })
                        .collect()
                } else {
                    truncated += 1;
                    prev.clone()
                };
                for t in 0..n_targets {
                    marginals[t][source] = next[t] - prev[t];
                }
                prev = next;
            }
            Ok(EpochOutcome {
                marginals,
                lookups,
                truncated,
            })
        };

        let pool = if cfg.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.workers)
                    .build()
                    .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?,
            )
        } else {
            None
        };
        let batch = if cfg.workers > 1 { 2 * cfg.workers as u64 } else { 1 };

        let mut phi = vec![vec![0.0; m]; n_targets];
        let mut recent: VecDeque<Vec<Vec<f64>>> = VecDeque::with_capacity(window + 1);
        recent.push_back(phi.clone());
        let mut trace = Vec::new();
        let mut history = cfg.record_history.then(Vec::new);
        let mut truncated_steps = 0;
        let mut epochs_run = 0;
        let mut converged = false;

        let mut next_epoch = 1u64;
        'outer: while next_epoch <= cfg.nepoch {
            let last = (next_epoch + batch - 1).min(cfg.nepoch);
            let outcomes: Vec<Result<EpochOutcome>> = match &pool {
                Some(pool) => pool.install(|| (next_epoch..=last).into_par_iter().map(run_epoch).collect()),
                None => (next_epoch..=last).map(run_epoch).collect(),
            };
            for (epoch, outcome) in (next_epoch..=last).zip(outcomes) {
                let outcome = outcome.map_err(|e| abort(&acct, epochs_run, e))?;
                let t = epoch as f64;
                for (row, marg) in phi.iter_mut().zip(&outcome.marginals) {
                    for (p, d) in row.iter_mut().zip(marg) {
                        *p = (t - 1.0) / t * *p + 1.0 / t * d;
                    }
                }
                for key in &outcome.lookups {
                    acct.record(key);
                }
                truncated_steps += outcome.truncated;
                epochs_run = epoch;

                recent.push_back(phi.clone());
                if recent.len() > window + 1 {
                    recent.pop_front();
                }
                let max_delta = (recent.len() == window + 1).then(|| {
                    phi.iter()
                        .flatten()
                        .zip(recent[0].iter().flatten())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                });
                trace.push(EpochTrace {
                    epoch,
                    max_delta,
                    cache_misses: acct.misses,
                });
                if let Some(h) = history.as_mut() {
                    h.push(phi.clone());
                }
                if max_delta.is_some_and(|d| d < epsilon) {
                    converged = true;
                    break 'outer;
                }
            }
            next_epoch = last + 1;
        }
        log::debug!(
            "valuation finished after {epochs_run} epochs: {} misses, {} hits, {truncated_steps} truncated steps",
            acct.misses,
            acct.hits
        );

        Ok(ValuationResult {
            sources: oracle.source_names().to_vec(),
            targets: oracle.target_names().to_vec(),
            values: phi,
            epochs_run,
            converged,
            cache_hits: acct.hits,
            cache_misses: acct.misses,
            oracle_trainings: acct.misses,
            truncated_steps,
            seed: cfg.seed,
            rho,
            full_score: full_score.0,
            trace,
            history,
        })
    }
}

/// Runs the estimator with a fresh in-memory cache.
pub fn seal_shap(oracle: &dyn ScoreOracle, config: &EngineConfig) -> Result<ValuationResult> {
    SealShap::new(oracle, config.clone()).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{TabularGame, TabularOracle, TrainBundle};
    use crate::shapley::exact_shapley;

    fn config(seed: u64, nepoch: u64) -> EngineConfig {
        let mut c = EngineConfig::new(seed);
        c.nepoch = nepoch;
        c.convergence.epsilon = Some(0.0);
        c
    }

    #[test]
    fn single_source_gets_its_score() {
        let g = TabularGame::from_fn(1, 1, |s| vec![if s.is_empty() { 0.0 } else { 0.8 }]).unwrap();
        let o = TabularOracle::new(g);
        let mut c = config(3, 7);
        c.rho = RhoPolicy::Const(0.0);
        let r = seal_shap(&o, &c).unwrap();
        assert!((r.values[0][0] - 0.8).abs() < 1e-12);
        assert_eq!(r.epochs_run, 7);
        assert_eq!(r.oracle_trainings, r.cache_misses);
        assert_eq!(r.cache_misses, 1);
    }

    #[test]
    fn glove_converges_to_exact() {
        let g = TabularGame::glove(3).unwrap();
        let exact = exact_shapley(|k| g.value(k).cloned(), 3, g.empty_value()).unwrap();
        let o = TabularOracle::new(g);
        let r = seal_shap(&o, &config(17, 5000)).unwrap();
        for (a, b) in r.values[0].iter().zip(&exact[0]) {
            assert!((a - b).abs() < 0.02, "{:?} vs {:?}", r.values, exact);
        }
        assert_eq!(r.truncated_steps, 0);
    }

    #[test]
    fn reruns_are_identical() {
        let o = TabularOracle::new(
            TabularGame::from_fn(5, 2, |s| vec![s.len() as f64 / 5.0, (s.to_mask() % 7) as f64 / 7.0]).unwrap(),
        );
        let a = seal_shap(&o, &config(1, 50)).unwrap();
        let b = seal_shap(&o, &config(1, 50)).unwrap();
        assert_eq!(a, b);
        let c = seal_shap(&o, &config(2, 50)).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn workers_do_not_change_results() {
        let o = TabularOracle::new(
            TabularGame::from_fn(6, 1, |s| vec![((s.to_mask() * 2654435761) % 1000) as f64 / 1000.0]).unwrap(),
        );
        let mut c = config(5, 120);
        c.convergence.epsilon = None;
        c.tolerance = 0.05;
        let one = seal_shap(&o, &c).unwrap();
        c.workers = 8;
        let eight = seal_shap(&o, &c).unwrap();
        assert_eq!(one, eight);
    }

    #[test]
    fn cache_only_changes_counters() {
        let o = TabularOracle::new(TabularGame::from_fn(5, 1, |s| vec![(s.len() as f64).sqrt()]).unwrap());
        let c = config(9, 40);
        let cached = seal_shap(&o, &c).unwrap();
        let mut nc = c.clone();
        nc.use_cache = false;
        let uncached = seal_shap(&o, &nc).unwrap();
        assert_eq!(cached.values, uncached.values);
        assert_eq!(uncached.cache_hits, 0);
        assert_eq!(uncached.cache_misses, 1 + 40 * 5);
        assert!(cached.cache_misses <= 31);
    }

    #[test]
    fn truncation_skips_steps_near_full_score() {
        // saturating game: any two sources already reach the full score
        let o = TabularOracle::new(TabularGame::from_fn(6, 1, |s| vec![(s.len().min(2)) as f64 / 2.0]).unwrap());
        let mut c = config(4, 30);
        c.tolerance = 0.01;
        let r = seal_shap(&o, &c).unwrap();
        assert_eq!(r.truncated_steps, 30 * 4);
        let total: f64 = r.values[0].iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn converges_early_on_constant_marginals() {
        let o = TabularOracle::new(TabularGame::additive(&[0.1, 0.2, 0.3]).unwrap());
        let mut c = config(0, 1000);
        c.convergence = Convergence {
            window: 5,
            epsilon: None,
        };
        let r = seal_shap(&o, &c).unwrap();
        assert!(r.converged);
        assert_eq!(r.epochs_run, 6);
        assert_eq!(r.trace.len(), 6);
        assert!(r.trace[..4].iter().all(|t| t.max_delta.is_none()));
        assert!(r.trace[4].max_delta.unwrap() > 0.1);
    }

    #[test]
    fn history_is_recorded() {
        let o = TabularOracle::new(TabularGame::additive(&[0.1, 0.2]).unwrap());
        let mut c = config(0, 4);
        c.record_history = true;
        let r = seal_shap(&o, &c).unwrap();
        let h = r.history.unwrap();
        assert_eq!(h.len(), 4);
        assert_eq!(h[3], r.values);
    }

    #[test]
    fn invalid_configs() {
        let o = TabularOracle::new(TabularGame::additive(&[0.1, 0.2]).unwrap());
        for mutate in [
            (|c: &mut EngineConfig| c.nepoch = 0) as fn(&mut EngineConfig),
            |c| c.tolerance = -1.0,
            |c| c.convergence.window = 0,
            |c| c.workers = 0,
            |c| c.sample.rate = 0.0,
        ] {
            let mut c = config(0, 3);
            mutate(&mut c);
            assert!(matches!(seal_shap(&o, &c), Err(Error::InvalidInput(_))));
        }
    }

    struct Failing {
        inner: TabularOracle,
        after: usize,
        calls: std::sync::atomic::AtomicUsize,
    }

    impl ScoreOracle for Failing {
        fn source_names(&self) -> &[String] {
            self.inner.source_names()
        }
        fn target_names(&self) -> &[String] {
            self.inner.target_names()
        }
        fn source_lens(&self) -> Vec<usize> {
            self.inner.source_lens()
        }
        fn score_range(&self) -> (f64, f64) {
            self.inner.score_range()
        }
        fn score(&self, subset: &SubsetKey, bundle: &TrainBundle) -> Result<ScoreVector> {
            if self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) >= self.after {
                return Err(Error::oracle("scorer crashed", Some("{\"id\":3}".into())));
            }
            self.inner.score(subset, bundle)
        }
        fn empty_score(&self) -> Result<ScoreVector> {
            self.inner.empty_score()
        }
    }

    #[test]
    fn oracle_failure_aborts_with_diagnostics() {
        let o = Failing {
            inner: TabularOracle::new(TabularGame::additive(&[0.1, 0.2, 0.3, 0.4]).unwrap()),
            after: 5,
            calls: Default::default(),
        };
        match seal_shap(&o, &config(0, 100)) {
            Err(Error::Aborted {
                source, cache_misses, ..
            }) => {
                assert!(matches!(*source, Error::OracleFailure { .. }));
                assert!(cache_misses >= 1);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_oracle_output_is_a_failure() {
        struct Nan(TabularOracle);
        impl ScoreOracle for Nan {
            fn source_names(&self) -> &[String] {
                self.0.source_names()
            }
            fn target_names(&self) -> &[String] {
                self.0.target_names()
            }
            fn source_lens(&self) -> Vec<usize> {
                self.0.source_lens()
            }
            fn score_range(&self) -> (f64, f64) {
                (0.0, 1.0)
            }
            fn score(&self, _: &SubsetKey, _: &TrainBundle) -> Result<ScoreVector> {
                Ok(ScoreVector::new(vec![f64::NAN]))
            }
            fn empty_score(&self) -> Result<ScoreVector> {
                Ok(ScoreVector::new(vec![0.0]))
            }
        }
        let o = Nan(TabularOracle::new(TabularGame::additive(&[0.1]).unwrap()));
        let err = seal_shap(&o, &config(0, 3)).unwrap_err();
        assert!(matches!(err.root(), Error::OracleFailure { .. }));
    }
}
