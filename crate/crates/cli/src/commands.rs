use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use shapsrc_core::ranker::{
    build_ranker_dataset, held_out_oracle, lambda_sweep, predict_source_values, train_ranker, FeatureTable,
};
use shapsrc_core::select::{select_topk, tune_threshold, DEFAULT_THRESHOLDS};
use shapsrc_core::shapley::{
    baseline_loo, baseline_random, baseline_single, exact_from_oracle, greedy_dfs, resolve_rho, SealShap,
    SubsetScoreCache, MAX_EXACT_SOURCES,
};
use shapsrc_core::{make_subset_key, Evaluator, SampleSpec, ScoreOracle, SubsetKey};

use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::problem::{hash_bytes, load_corpora, load_problem, target_index, InputHash, Problem};
use crate::report::*;
use crate::{Command, Options};

pub const DEFAULT_LAMBDAS: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// What a finished command wrote.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub report_path: PathBuf,
    pub files: Vec<PathBuf>,
}

struct Context {
    config: LoadedConfig,
    seed: u64,
    out: PathBuf,
    config_hash: String,
}

impl Context {
    fn new(opts: &Options) -> Result<Self, CliError> {
        let config = LoadedConfig::read(&opts.config)?;
        let seed = opts.seed.or(config.config.seed).unwrap_or(0);
        let out = match (&opts.out, &config.config.output_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => config.resolve(o),
            (None, None) => PathBuf::from("out"),
        };
        std::fs::create_dir_all(&out).map_err(|e| CliError::Input {
            path: out.clone(),
            message: format!("cannot create output directory: {e}"),
        })?;
        // settings that cannot change results stay out of the hash
        let mut identity = config.config.clone();
        identity.seed = Some(seed);
        identity.output_dir = None;
        identity.cache = None;
        identity.engine.workers = 1;
        let config_hash = hash_bytes(&serde_json::to_vec(&identity).expect("config serializes"));
        Ok(Context {
            config,
            seed,
            out,
            config_hash,
        })
    }

    fn report(&self, command: &str, problem: &Problem, started: Instant) -> Report {
        self.bare_report(
            command,
            problem.inputs.clone(),
            problem.oracle.source_names().to_vec(),
            problem.oracle.target_names().to_vec(),
            started,
        )
    }

    fn bare_report(
        &self,
        command: &str,
        inputs: Vec<InputHash>,
        sources: Vec<String>,
        targets: Vec<String>,
        started: Instant,
    ) -> Report {
        Report {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            inputs,
            sources,
            targets,
            values: None,
            valuation: None,
            baselines: None,
            selection: None,
            ranking: None,
            wall_time_secs: started.elapsed().as_secs_f64(),
        }
    }

    fn finish(&self, command: &str, report: Report, mut files: Vec<PathBuf>) -> Result<Outcome, CliError> {
        let report_path = self.out.join(format!("{command}.json"));
        report.write_json(&report_path)?;
        files.insert(0, report_path.clone());
        Ok(Outcome {
            report,
            report_path,
            files,
        })
    }

    fn sample(&self) -> SampleSpec {
        SampleSpec {
            rate: self.config.config.engine.sample_rate,
            base_seed: self.seed,
        }
    }
}

pub fn run(command: &Command, opts: &Options) -> Result<Outcome, CliError> {
    if opts.resume && opts.cache.is_none() && matches!(command, Command::Value) {
        let ctx_cache = LoadedConfig::read(&opts.config)?.config.cache;
        if ctx_cache.is_none() {
            return Err(CliError::Usage(
                "--resume needs a cache file (--cache or `cache` in the config)".into(),
            ));
        }
    }
    let ctx = Context::new(opts)?;
    let started = Instant::now();
    match command {
        Command::Value => cmd_value(&ctx, opts, started),
        Command::Exact => cmd_exact(&ctx, started),
        Command::Baselines => cmd_baselines(&ctx, started),
        Command::Select { values } => cmd_select(&ctx, values.as_deref(), started),
        Command::Rank { features, target } => cmd_rank(&ctx, opts, features.as_deref(), target.as_deref(), started),
    }
}

fn cmd_value(ctx: &Context, opts: &Options, started: Instant) -> Result<Outcome, CliError> {
    let problem = load_problem(&ctx.config)?;
    let oracle = problem.oracle.as_ref();
    let engine = ctx.config.engine_config(ctx.seed, opts.workers)?;
    let cache_path = opts
        .cache
        .clone()
        .or_else(|| ctx.config.config.cache.as_ref().map(|p| ctx.config.resolve(p)));
    let mut run = SealShap::new(oracle, engine.clone());
    let mut resumed = false;
    if let (true, Some(path)) = (engine.use_cache, &cache_path) {
        resumed = opts.resume && path.exists();
        let cache = SubsetScoreCache::open(path, oracle.num_sources(), oracle.num_targets(), opts.resume)?;
        log::info!("cache {} holds {} scores", path.display(), cache.len());
        run = run.with_cache(Arc::new(cache));
    }
    let result = run.run()?;
    log::info!(
        "valued {} sources in {} epochs ({} trainings)",
        result.sources.len(),
        result.epochs_run,
        result.oracle_trainings
    );

    let mut files = Vec::new();
    let values_csv = ctx.out.join("values.csv");
    write_matrix_csv(&values_csv, &result.targets, &result.sources, &result.values)?;
    files.push(values_csv);
    let trace_csv = ctx.out.join("trace.csv");
    write_csv(&trace_csv, &["epoch", "max_delta", "cache_misses"], |w| {
        for t in &result.trace {
            let delta = t.max_delta.map(|d| d.to_string()).unwrap_or_default();
            w.write_record([t.epoch.to_string(), delta, t.cache_misses.to_string()])?;
        }
        Ok(())
    })?;
    files.push(trace_csv);
    if let Some(history) = &result.history {
        let path = ctx.out.join("history.csv");
        write_csv(&path, &["epoch", "target", "source", "value"], |w| {
            for (e, matrix) in history.iter().enumerate() {
                for (t, row) in result.targets.iter().zip(matrix) {
                    for (s, v) in result.sources.iter().zip(row) {
                        w.write_record([&(e + 1).to_string(), t, s, &v.to_string()])?;
                    }
                }
            }
            Ok(())
        })?;
        files.push(path);
    }

    let mut report = ctx.report("value", &problem, started);
    report.values = Some(result.values.clone());
    report.valuation = Some(ValuationDetails {
        engine,
        epochs_run: result.epochs_run,
        converged: result.converged,
        rho: result.rho,
        full_score: result.full_score,
        cache: CacheStats {
            path: cache_path,
            resumed,
            hits: result.cache_hits,
            misses: result.cache_misses,
            oracle_trainings: result.oracle_trainings,
            truncated_steps: result.truncated_steps,
        },
        trace: result.trace,
    });
    ctx.finish("value", report, files)
}

fn cmd_exact(ctx: &Context, started: Instant) -> Result<Outcome, CliError> {
    let problem = load_problem(&ctx.config)?;
    let oracle = problem.oracle.as_ref();
    let m = oracle.num_sources();
    if m > MAX_EXACT_SOURCES {
        return Err(CliError::Usage(format!(
            "exact valuation enumerates 2^m subsets and supports at most {MAX_EXACT_SOURCES} sources; \
             this problem has {m}. Use `shapsrc value` for a sampled estimate"
        )));
    }
    let ev = Evaluator::new(oracle, ctx.sample())?;
    let empty = resolve_rho(ctx.config.config.engine.rho, &ev)?;
    let values = exact_from_oracle(&ev, &empty)?;
    let path = ctx.out.join("values.csv");
    write_matrix_csv(&path, oracle.target_names(), oracle.source_names(), &values)?;
    let mut report = ctx.report("exact", &problem, started);
    report.values = Some(values);
    ctx.finish("exact", report, vec![path])
}

fn cmd_baselines(ctx: &Context, started: Instant) -> Result<Outcome, CliError> {
    let problem = load_problem(&ctx.config)?;
    let oracle = problem.oracle.as_ref();
    let ev = Evaluator::new(oracle, ctx.sample())?;
    let m = oracle.num_sources();
    let names = oracle.source_names();
    let single = baseline_single(&ev)?;
    let loo = if m >= 2 { Some(baseline_loo(&ev)?) } else { None };
    let random = baseline_random(m, ctx.seed);
    let greedy = (0..oracle.num_targets())
        .map(|t| Ok(greedy_dfs(&ev, t, m)?.into_iter().map(|i| names[i].clone()).collect()))
        .collect::<Result<Vec<Vec<String>>, CliError>>()?;

    let path = ctx.out.join("baselines.csv");
    let targets = oracle.target_names();
    write_csv(&path, &["method", "target", "source", "value"], |w| {
        let mut matrix = |method: &str, m: &[Vec<f64>]| -> csv::Result<()> {
            for (t, row) in targets.iter().zip(m) {
                for (s, v) in names.iter().zip(row) {
                    w.write_record([method, t, s, &v.to_string()])?;
                }
            }
            Ok(())
        };
        matrix("single", &single)?;
        if let Some(l) = &loo {
            matrix("loo", l)?;
        }
        let rows: Vec<Vec<f64>> = targets.iter().map(|_| random.clone()).collect();
        matrix("random", &rows)?;
        for (t, order) in targets.iter().zip(&greedy) {
            for (rank, s) in order.iter().enumerate() {
                w.write_record(["greedy-rank", t, s, &(rank + 1).to_string()])?;
            }
        }
        Ok(())
    })?;
    let mut report = ctx.report("baselines", &problem, started);
    report.baselines = Some(Baselines {
        single,
        loo,
        random,
        greedy,
    });
    ctx.finish("baselines", report, vec![path])
}

fn cmd_select(ctx: &Context, values_arg: Option<&Path>, started: Instant) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let section = cfg
        .config
        .select
        .clone()
        .ok_or_else(|| cfg.error_at("", "", "the select command needs a [select] section"))?;
    let values_file = values_arg
        .map(Path::to_path_buf)
        .or_else(|| section.values.as_ref().map(|p| cfg.resolve(p)))
        .ok_or_else(|| CliError::Usage("select needs a values file (--values or select.values)".into()))?;
    let values_report = Report::load(&values_file)?;
    let problem = load_problem(cfg)?;
    let oracle = problem.oracle.as_ref();
    if values_report.sources != oracle.source_names() {
        return Err(CliError::Input {
            path: values_file,
            message: "values were computed for a different list of sources".into(),
        });
    }
    let values_target = section
        .values_target
        .clone()
        .unwrap_or_else(|| section.dev_target.clone());
    let row = values_report
        .targets
        .iter()
        .position(|t| *t == values_target)
        .ok_or_else(|| CliError::Input {
            path: values_file.clone(),
            message: format!("no values for target {values_target:?}"),
        })?;
    let values = values_report.values.as_ref().ok_or_else(|| CliError::Input {
        path: values_file.clone(),
        message: "report carries no values".into(),
    })?[row]
        .clone();
    let dev = target_index(cfg, oracle, "select", "dev_target", &section.dev_target)?;
    let thresholds = section
        .thresholds
        .clone()
        .unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
    let ev = Evaluator::new(oracle, ctx.sample())?;
    let selection = tune_threshold(&values, &thresholds, &ev, dev)?;

    let test = match &section.test_target {
        Some(name) => {
            let t = target_index(cfg, oracle, "select", "test_target", name)?;
            let full = Evaluator::new(oracle, SampleSpec::full())?;
            let m = oracle.num_sources();
            Some(TestScores {
                target: name.clone(),
                chosen: full.score(&make_subset_key(&selection.chosen, m)?)?[t],
                all_sources: full.score(&SubsetKey::full(m))?[t],
            })
        }
        None => None,
    };
    if let Some(t) = &test {
        log::info!(
            "test {}: chosen {:.4}, all sources {:.4}",
            t.target,
            t.chosen,
            t.all_sources
        );
    }
    let mut report = ctx.report("select", &problem, started);
    report.selection = Some(Selection {
        values_file,
        values_target,
        dev_target: section.dev_target.clone(),
        chosen_sources: selection
            .chosen
            .iter()
            .map(|&i| oracle.source_names()[i].clone())
            .collect(),
        report: selection,
        test,
    });
    ctx.finish("select", report, vec![])
}

fn cmd_rank(
    ctx: &Context,
    opts: &Options,
    features_arg: Option<&Path>,
    target_arg: Option<&str>,
    started: Instant,
) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let section = cfg.config.rank.clone();
    let target = target_arg
        .map(str::to_owned)
        .or_else(|| section.as_ref().map(|s| s.target.clone()))
        .ok_or_else(|| CliError::Usage("rank needs a target (--target or rank.target)".into()))?;
    let features_path = features_arg
        .map(Path::to_path_buf)
        .or_else(|| {
            section
                .as_ref()
                .and_then(|s| s.features.as_ref())
                .map(|p| cfg.resolve(p))
        })
        .ok_or_else(|| CliError::Usage("rank needs a feature CSV (--features or rank.features)".into()))?;
    if !features_path.exists() {
        return Err(CliError::Input {
            path: features_path,
            message: "feature file not found".into(),
        });
    }
    let features = FeatureTable::from_csv(&features_path)?;

    let (corpora, mut inputs) = load_corpora(cfg)?;
    inputs.push(InputHash {
        sha256: hash_bytes(&std::fs::read(&features_path).map_err(|e| CliError::Input {
            path: features_path.clone(),
            message: e.to_string(),
        })?),
        path: features_path.clone(),
    });
    let names: Vec<String> = corpora.sources.iter().map(|s| s.id.name.clone()).collect();
    let engine = cfg.engine_config(ctx.seed, opts.workers)?;
    let n_labels = corpora.labels.len();
    let rows = build_ranker_dataset(&names, &features, &engine, |j| {
        Ok(Box::new(held_out_oracle(&corpora.sources, j, corpora.kind, n_labels)?) as Box<dyn ScoreOracle>)
    })?;

    let lambdas = section
        .as_ref()
        .and_then(|s| s.lambdas.clone())
        .unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
    let sweep = lambda_sweep(&rows, &lambdas)?;
    let lambda = match section.as_ref().and_then(|s| s.lambda) {
        Some(l) => l,
        // smallest loss; ties prefer the stronger penalty
        None => sweep
            .iter()
            .fold(None::<&shapsrc_core::ranker::LambdaLoss>, |best, x| match best {
                Some(b) if b.loss < x.loss || (b.loss == x.loss && b.lambda >= x.lambda) => Some(b),
                _ => Some(x),
            })
            .map(|b| b.lambda)
            .ok_or_else(|| cfg.error_at("rank", "lambdas", "rank.lambdas is empty"))?,
    };
    let model = train_ranker(&rows, lambda)?;
    // a target that is itself one of the corpora is not its own source
    let candidates: Vec<String> = names.iter().filter(|s| **s != target).cloned().collect();
    let target_features = candidates
        .iter()
        .map(|s| features.get(&target, s).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>, _>>()?;
    let predicted = predict_source_values(&model, &target_features)?;
    let ranked = |k: usize| -> Result<Vec<String>, CliError> {
        Ok(select_topk(&predicted, k)?
            .into_iter()
            .map(|i| candidates[i].clone())
            .collect())
    };
    let order = ranked(candidates.len())?;
    let top_k = section.as_ref().and_then(|s| s.top_k).map(ranked).transpose()?;

    let model_path = ctx.out.join("rank_model.json");
    write_file(
        &model_path,
        format!("{}\n", serde_json::to_string_pretty(&model).expect("model serializes")).as_bytes(),
    )?;
    let pred_path = ctx.out.join("predictions.csv");
    write_csv(&pred_path, &["target", "source", "predicted"], |w| {
        for (s, v) in candidates.iter().zip(&predicted) {
            w.write_record([target.as_str(), s, &v.to_string()])?;
        }
        Ok(())
    })?;
    let mut report = ctx.bare_report("rank", inputs, candidates, vec![target.clone()], started);
    report.ranking = Some(Ranking {
        target,
        lambda,
        sweep,
        model,
        predicted,
        order,
        top_k,
        training_rows: rows.len(),
    });
    ctx.finish("rank", report, vec![model_path, pred_path])
}
