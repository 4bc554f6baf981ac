//! Python bindings: games, oracles, the valuation engine, selection and ranking.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use shapsrc_core::corpus::{assign_labels, read_jsonl, SourceCorpus, TargetCorpus};
use shapsrc_core::oracle::{ExternalOptions, ExternalOracle};
use shapsrc_core::ranker::{RankerModel, RankerRow};
use shapsrc_core::select::SelectionReport;
use shapsrc_core::shapley::{exact_from_oracle, resolve_rho, Convergence};
use shapsrc_core::{
    make_subset_key, ClassifierKind, CorpusOracle, Evaluator, RhoPolicy, SampleSpec, ScoreOracle, SourceId,
    TabularGame, TabularOracle,
};

create_exception!(shapsrc, ShapsrcError, PyException);

fn err(e: shapsrc_core::Error) -> PyErr {
    ShapsrcError::new_err(e.to_string())
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for shapsrc_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

/// A characteristic function given by a table of subset scores.
#[pyclass(name = "Game", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGame(TabularGame);

#[pymethods]
impl PyGame {
    #[staticmethod]
    fn additive(weights: Vec<f64>) -> PyResult<Self> {
        TabularGame::additive(&weights).py().map(PyGame)
    }

    #[staticmethod]
    fn glove(players: usize) -> PyResult<Self> {
        TabularGame::glove(players).py().map(PyGame)
    }

    #[staticmethod]
    fn diminishing_returns(weights: Vec<f64>) -> PyResult<Self> {
        shapsrc_core::synth::diminishing_returns_game(&weights).py().map(PyGame)
    }

    #[staticmethod]
    fn random(players: usize, noise: f64, seed: u64) -> PyResult<Self> {
        shapsrc_core::synth::random_game(players, noise, seed).py().map(PyGame)
    }

    /// `values[mask]` is the score vector of the subset whose members are the set bits of `mask`.
    #[staticmethod]
    #[pyo3(signature = (values, range=None))]
    fn from_table(values: Vec<Vec<f64>>, range: Option<(f64, f64)>) -> PyResult<Self> {
        let n = values.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(ShapsrcError::new_err(format!("expected 2^m subset values, found {n}")));
        }
        let targets = values[0].len();
        let g = TabularGame::from_fn(n.trailing_zeros() as usize, targets, |s| {
            values[s.to_mask() as usize].clone()
        })
        .py()?;
        match range {
            Some((lo, hi)) => g.with_range(lo, hi).py().map(PyGame),
            None => Ok(PyGame(g)),
        }
    }

    #[getter]
    fn players(&self) -> usize {
        self.0.players()
    }

    #[getter]
    fn targets(&self) -> usize {
        self.0.targets()
    }

    fn value(&self, members: Vec<usize>) -> PyResult<Vec<f64>> {
        let key = make_subset_key(&members, self.0.players()).py()?;
        Ok(self.0.value(&key).py()?.as_slice().to_vec())
    }
}

/// Anything that can train on a subset of sources and score the targets.
#[pyclass(name = "Oracle", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyOracle(Arc<dyn ScoreOracle>);

fn classifier(name: &str) -> PyResult<ClassifierKind> {
    match name {
        "naive-count" => Ok(ClassifierKind::NaiveCount),
        "nearest-centroid" => Ok(ClassifierKind::NearestCentroid),
        other => Err(ShapsrcError::new_err(format!(
            "unknown classifier {other:?} (expected naive-count or nearest-centroid)"
        ))),
    }
}

#[pymethods]
impl PyOracle {
    #[staticmethod]
    #[pyo3(signature = (game, sources=None, targets=None, delay_ms=0))]
    fn tabular(
        game: &PyGame,
        sources: Option<Vec<String>>,
        targets: Option<Vec<String>>,
        delay_ms: u64,
    ) -> PyResult<Self> {
        let plain = TabularOracle::new(game.0.clone());
        let sources = sources.unwrap_or_else(|| plain.source_names().to_vec());
        let targets = targets.unwrap_or_else(|| plain.target_names().to_vec());
        let oracle = plain
            .with_names(sources, targets)
            .py()?
            .with_delay(Duration::from_millis(delay_ms));
        Ok(PyOracle(Arc::new(oracle)))
    }

    /// Built-in classifier over JSONL corpora given as `(name, path)` pairs.
    #[staticmethod]
    #[pyo3(signature = (sources, targets, classifier="naive-count"))]
    fn corpora(sources: Vec<(String, PathBuf)>, targets: Vec<(String, PathBuf)>, classifier: &str) -> PyResult<Self> {
        let kind = self::classifier(classifier)?;
        let raws = sources
            .iter()
            .chain(&targets)
            .map(|(_, p)| read_jsonl(p))
            .collect::<Result<Vec<_>, _>>()
            .py()?;
        let (labels, _, mut instances) = assign_labels(&raws).py()?;
        let target_instances = instances.split_off(sources.len());
        let sources = sources
            .into_iter()
            .zip(instances)
            .enumerate()
            .map(|(index, ((name, _), inst))| SourceCorpus::new(SourceId { index, name }, inst))
            .collect::<Result<Vec<_>, _>>()
            .py()?;
        let targets = targets
            .into_iter()
            .zip(target_instances)
            .map(|((name, _), inst)| TargetCorpus::new(name, inst))
            .collect::<Result<Vec<_>, _>>()
            .py()?;
        let oracle = CorpusOracle::new(sources, targets, kind, labels.len()).py()?;
        Ok(PyOracle(Arc::new(oracle)))
    }

    /// A scorer program speaking the line-delimited JSON protocol.
    #[staticmethod]
    #[pyo3(signature = (command, sources, targets, processes=1, timeout_secs=None))]
    fn external(
        command: Vec<String>,
        sources: Vec<(String, usize)>,
        targets: Vec<String>,
        processes: usize,
        timeout_secs: Option<f64>,
    ) -> PyResult<Self> {
        let mut opts = ExternalOptions::new(command);
        opts.processes = processes;
        if let Some(t) = timeout_secs {
            opts.timeout = Duration::from_secs_f64(t);
        }
        Ok(PyOracle(Arc::new(ExternalOracle::spawn(&opts, sources, targets).py()?)))
    }

    #[getter]
    fn source_names(&self) -> Vec<String> {
        self.0.source_names().to_vec()
    }

    #[getter]
    fn target_names(&self) -> Vec<String> {
        self.0.target_names().to_vec()
    }

    #[pyo3(signature = (members, sample_rate=1.0, seed=0))]
    fn score(&self, py: Python<'_>, members: Vec<usize>, sample_rate: f64, seed: u64) -> PyResult<Vec<f64>> {
        let spec = SampleSpec::new(sample_rate, seed).py()?;
        let oracle = self.0.clone();
        py.detach(move || {
            let ev = Evaluator::new(oracle.as_ref(), spec)?;
            let key = make_subset_key(&members, oracle.num_sources())?;
            Ok(ev.score(&key)?.as_slice().to_vec())
        })
        .py()
    }
}

#[pyclass(name = "EngineConfig", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyEngineConfig {
    seed: u64,
    nepoch: u64,
    tolerance: f64,
    /// `random`, `frac-single`, `all-half`, `all`, `mu`, `empty` or `const:<x>`.
    rho: String,
    sample_rate: f64,
    window: u64,
    epsilon: Option<f64>,
    workers: usize,
    use_cache: bool,
}

#[pymethods]
impl PyEngineConfig {
    #[new]
    #[pyo3(signature = (seed=0, nepoch=None, tolerance=None, rho=None, sample_rate=None, window=None, epsilon=None, workers=None, use_cache=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        seed: u64,
        nepoch: Option<u64>,
        tolerance: Option<f64>,
        rho: Option<String>,
        sample_rate: Option<f64>,
        window: Option<u64>,
        epsilon: Option<f64>,
        workers: Option<usize>,
        use_cache: Option<bool>,
    ) -> Self {
        let d = shapsrc_core::EngineConfig::new(seed);
        PyEngineConfig {
            seed,
            nepoch: nepoch.unwrap_or(d.nepoch),
            tolerance: tolerance.unwrap_or(d.tolerance),
            rho: rho.unwrap_or_else(|| d.rho.to_string()),
            sample_rate: sample_rate.unwrap_or(d.sample.rate),
            window: window.unwrap_or(d.convergence.window),
            epsilon: epsilon.or(d.convergence.epsilon),
            workers: workers.unwrap_or(d.workers),
            use_cache: use_cache.unwrap_or(d.use_cache),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "EngineConfig(seed={}, nepoch={}, tolerance={}, rho={:?}, sample_rate={}, workers={})",
            self.seed, self.nepoch, self.tolerance, self.rho, self.sample_rate, self.workers
        )
    }
}

impl PyEngineConfig {
    fn to_core(&self) -> PyResult<shapsrc_core::EngineConfig> {
        let cfg = shapsrc_core::EngineConfig {
            nepoch: self.nepoch,
            tolerance: self.tolerance,
            rho: self.rho.parse::<RhoPolicy>().py()?,
            sample: SampleSpec {
                rate: self.sample_rate,
                base_seed: self.seed,
            },
            convergence: Convergence {
                window: self.window,
                epsilon: self.epsilon,
            },
            seed: self.seed,
            workers: self.workers,
            use_cache: self.use_cache,
            record_history: false,
        };
        cfg.validate().py()?;
        Ok(cfg)
    }
}

#[pyclass(name = "ValuationResult", frozen, get_all)]
struct PyValuation {
    sources: Vec<String>,
    targets: Vec<String>,
    /// `[target][source]`.
    values: Vec<Vec<f64>>,
    epochs_run: u64,
    converged: bool,
    cache_hits: u64,
    cache_misses: u64,
    oracle_trainings: u64,
    truncated_steps: u64,
    rho: Vec<f64>,
    full_score: Vec<f64>,
}

#[pymethods]
impl PyValuation {
    fn __repr__(&self) -> String {
        format!(
            "ValuationResult(sources={:?}, epochs_run={}, converged={}, oracle_trainings={})",
            self.sources, self.epochs_run, self.converged, self.oracle_trainings
        )
    }
}

#[pyfunction]
fn seal_shap(py: Python<'_>, oracle: &PyOracle, config: &PyEngineConfig) -> PyResult<PyValuation> {
    let cfg = config.to_core()?;
    let oracle = oracle.0.clone();
    let r = py.detach(move || shapsrc_core::seal_shap(oracle.as_ref(), &cfg)).py()?;
    Ok(PyValuation {
        sources: r.sources,
        targets: r.targets,
        values: r.values,
        epochs_run: r.epochs_run,
        converged: r.converged,
        cache_hits: r.cache_hits,
        cache_misses: r.cache_misses,
        oracle_trainings: r.oracle_trainings,
        truncated_steps: r.truncated_steps,
        rho: r.rho,
        full_score: r.full_score,
    })
}

/// Exact values by enumerating every subset; `rho` sets the empty-coalition score.
#[pyfunction]
#[pyo3(signature = (oracle, rho="empty", sample_rate=1.0, seed=0))]
fn exact_shapley(py: Python<'_>, oracle: &PyOracle, rho: &str, sample_rate: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let policy = rho.parse::<RhoPolicy>().py()?;
    let spec = SampleSpec::new(sample_rate, seed).py()?;
    let oracle = oracle.0.clone();
    py.detach(move || {
        let ev = Evaluator::new(oracle.as_ref(), spec)?;
        let empty = resolve_rho(policy, &ev)?;
        exact_from_oracle(&ev, &empty)
    })
    .py()
}

fn with_evaluator<T: Send>(
    py: Python<'_>,
    oracle: &PyOracle,
    sample_rate: f64,
    seed: u64,
    f: impl FnOnce(&Evaluator<'_>) -> shapsrc_core::Result<T> + Send,
) -> PyResult<T> {
    let spec = SampleSpec::new(sample_rate, seed).py()?;
    let oracle = oracle.0.clone();
    py.detach(move || f(&Evaluator::new(oracle.as_ref(), spec)?)).py()
}

#[pyfunction]
#[pyo3(signature = (oracle, sample_rate=1.0, seed=0))]
fn baseline_single(py: Python<'_>, oracle: &PyOracle, sample_rate: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    with_evaluator(py, oracle, sample_rate, seed, shapsrc_core::shapley::baseline_single)
}

#[pyfunction]
#[pyo3(signature = (oracle, sample_rate=1.0, seed=0))]
fn baseline_loo(py: Python<'_>, oracle: &PyOracle, sample_rate: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    with_evaluator(py, oracle, sample_rate, seed, shapsrc_core::shapley::baseline_loo)
}

#[pyfunction]
fn baseline_random(m: usize, seed: u64) -> Vec<f64> {
    shapsrc_core::shapley::baseline_random(m, seed)
}

#[pyfunction]
#[pyo3(signature = (oracle, target, k, sample_rate=1.0, seed=0))]
fn greedy_dfs(
    py: Python<'_>,
    oracle: &PyOracle,
    target: usize,
    k: usize,
    sample_rate: f64,
    seed: u64,
) -> PyResult<Vec<usize>> {
    with_evaluator(py, oracle, sample_rate, seed, |ev| {
        shapsrc_core::shapley::greedy_dfs(ev, target, k)
    })
}

#[pyfunction]
fn select_topk(values: Vec<f64>, k: usize) -> PyResult<Vec<usize>> {
    shapsrc_core::select::select_topk(&values, k).py()
}

#[pyfunction]
fn select_threshold(values: Vec<f64>, theta: f64) -> Vec<usize> {
    shapsrc_core::select::select_threshold(&values, theta)
}

#[pyclass(name = "Selection", frozen)]
struct PySelection(SelectionReport);

#[pymethods]
impl PySelection {
    #[getter]
    fn chosen(&self) -> Vec<usize> {
        self.0.chosen.clone()
    }

    #[getter]
    fn theta_used(&self) -> Option<f64> {
        self.0.theta_used
    }

    #[getter]
    fn all_sources_score(&self) -> f64 {
        self.0.all_sources_score
    }

    #[getter]
    fn fallback_all(&self) -> bool {
        self.0.fallback_all
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("selection serializes")
    }
}

#[pyfunction]
#[pyo3(signature = (values, thresholds, oracle, dev_target, sample_rate=1.0, seed=0))]
fn tune_threshold(
    py: Python<'_>,
    values: Vec<f64>,
    thresholds: Vec<f64>,
    oracle: &PyOracle,
    dev_target: usize,
    sample_rate: f64,
    seed: u64,
) -> PyResult<PySelection> {
    with_evaluator(py, oracle, sample_rate, seed, |ev| {
        shapsrc_core::select::tune_threshold(&values, &thresholds, ev, dev_target)
    })
    .map(PySelection)
}

#[pyfunction]
#[pyo3(signature = (a, b, n_samples=shapsrc_core::analysis::DEFAULT_BOOTSTRAP_SAMPLES, seed=0))]
fn paired_bootstrap(a: Vec<bool>, b: Vec<bool>, n_samples: usize, seed: u64) -> PyResult<f64> {
    shapsrc_core::analysis::paired_bootstrap(&a, &b, n_samples, seed).py()
}

/// `(spearman, pearson)`.
#[pyfunction]
fn rank_agreement(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = shapsrc_core::analysis::rank_agreement(&a, &b).py()?;
    Ok((r.spearman, r.pearson))
}

#[pyclass(name = "RankerModel", frozen)]
struct PyRanker(RankerModel);

#[pymethods]
impl PyRanker {
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights.clone()
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.0.intercept
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.0.lambda
    }

    fn predict(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        shapsrc_core::ranker::predict_source_values(&self.0, &features).py()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("model serializes")
    }
}

/// Fits a ridge ranker on `(target, source, features, value)` rows.
#[pyfunction]
#[pyo3(name = "train_ranker")]
fn py_train_ranker(rows: Vec<(String, String, Vec<f64>, f64)>, lambda: f64) -> PyResult<PyRanker> {
    let rows: Vec<RankerRow> = rows
        .into_iter()
        .map(|(target, source, features, value)| RankerRow {
            target,
            source,
            features,
            value,
        })
        .collect();
    shapsrc_core::ranker::train_ranker(&rows, lambda).py().map(PyRanker)
}

#[pymodule]
fn shapsrc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ShapsrcError", m.py().get_type::<ShapsrcError>())?;
    m.add_class::<PyGame>()?;
    m.add_class::<PyOracle>()?;
    m.add_class::<PyEngineConfig>()?;
    m.add_class::<PyValuation>()?;
    m.add_class::<PySelection>()?;
    m.add_class::<PyRanker>()?;
    m.add_function(wrap_pyfunction!(seal_shap, m)?)?;
    m.add_function(wrap_pyfunction!(exact_shapley, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_single, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_loo, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_random, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_dfs, m)?)?;
    m.add_function(wrap_pyfunction!(select_topk, m)?)?;
    m.add_function(wrap_pyfunction!(select_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(tune_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(paired_bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(rank_agreement, m)?)?;
    m.add_function(wrap_pyfunction!(py_train_ranker, m)?)?;
    Ok(())
}
