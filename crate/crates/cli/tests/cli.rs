mod common;

use std::path::Path;

use common::{run_ok, s, shapsrc, write, write_task};
use shapsrc_cli::{Report, SCHEMA_VERSION};
use shapsrc_core::ranker::held_out_oracle;
use shapsrc_core::synth::{FlipNoise, TextTaskSpec};
use shapsrc_core::{seal_shap, ClassifierKind, EngineConfig};

fn glove_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    write(
        dir,
        "glove.toml",
        &format!(
            "seed = 4\noutput_dir = \"out\"\n\n[oracle]\nkind = \"tabular\"\ngame = \"glove\"\nplayers = 3\n\n[engine]\nnepoch = 3000\nepsilon = 0.0\n{extra}"
        ),
    )
}

fn additive_config(dir: &Path) -> std::path::PathBuf {
    write(
        dir,
        "additive.toml",
        "output_dir = \"out\"\n\n[oracle]\nkind = \"tabular\"\ngame = \"additive\"\nweights = [0.1, 0.5, 0.25, 0.15]\n",
    )
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn exact_glove_and_additive() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_ok(&["exact", "--config", s(&glove_config(dir.path(), ""))]);
    let v = &r.values.unwrap()[0];
    assert!(close(v, &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1e-12), "{v:?}");

    let r = run_ok(&["exact", "--config", s(&additive_config(dir.path()))]);
    assert!(close(&r.values.unwrap()[0], &[0.1, 0.5, 0.25, 0.15], 1e-12));
    assert_eq!(r.sources, ["s0", "s1", "s2", "s3"]);
    assert!(dir.path().join("out/exact.json").exists());
    assert!(dir.path().join("out/values.csv").exists());
}

#[test]
fn value_on_glove_matches_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = glove_config(dir.path(), "");
    let est = run_ok(&["value", "--config", s(&cfg)]).values.unwrap();
    let exact = run_ok(&["exact", "--config", s(&cfg)]).values.unwrap();
    assert!(close(&est[0], &exact[0], 0.02), "{est:?} vs {exact:?}");
    let csv = std::fs::read_to_string(dir.path().join("out/values.csv")).unwrap();
    assert!(csv.starts_with("target,source,value\n"));
    assert!(dir.path().join("out/trace.csv").exists());
}

#[test]
fn exact_refuses_more_than_sixteen_sources() {
    let dir = tempfile::tempdir().unwrap();
    let mut toml = String::from("[oracle]\nkind = \"naive-count\"\n\n");
    for i in 0..20 {
        let text = format!("{{\"text\": \"w{i} x\", \"label\": \"a\"}}\n{{\"text\": \"v{i} y\", \"label\": \"b\"}}\n");
        write(dir.path(), &format!("s{i}.jsonl"), &text);
        toml += &format!("[[sources]]\nname = \"s{i}\"\npath = \"s{i}.jsonl\"\n\n");
    }
    write(dir.path(), "t.jsonl", "{\"text\": \"w1 x\", \"label\": \"a\"}\n");
    toml += "[[targets]]\nname = \"t\"\npath = \"t.jsonl\"\n";
    let cfg = write(dir.path(), "big.toml", &toml);
    let out = shapsrc(&["exact", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("shapsrc value"), "{err}");
}

#[test]
fn missing_corpus_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[oracle]\nkind = \"naive-count\"\n\n[[sources]]\nname = \"a\"\npath = \"nowhere.jsonl\"\n\n[[targets]]\nname = \"t\"\npath = \"t.jsonl\"\n",
    );
    let out = shapsrc(&["value", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.jsonl"));
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "[oracle]\nkind = \"tabular\"\ngame = \"glove\"\nplayers = 3\n\n[engine]\nnepoch = \"many\"\n",
    );
    let out = shapsrc(&["value", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml:7"), "{err}");

    let cfg = write(
        dir.path(),
        "bad2.toml",
        "[oracle]\nkind = \"tabular\"\ngame = \"glove\"\nplayers = 3\n\n[engine]\nnepoch = 10\nsample_rate = 1.5\n",
    );
    let out = shapsrc(&["value", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad2.toml:8"), "{err}");
}

#[test]
fn resume_hits_the_cache_and_keeps_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "seed = 1\noutput_dir = \"out\"\ncache = \"scores.cache\"\n\n[oracle]\nkind = \"tabular\"\ngame = \"additive\"\nweights = [0.3, 0.2, 0.1, 0.4, 0.05]\n\n[engine]\nnepoch = 30\nepsilon = 0.0\n",
    );
    let cold = run_ok(&["value", "--config", s(&cfg)]);
    let warm = run_ok(&["value", "--config", s(&cfg), "--resume"]);
    let (c, w) = (cold.valuation.unwrap().cache, warm.valuation.unwrap().cache);
    assert!(c.misses > 0 && !c.resumed);
    assert!(w.resumed && w.hits > 0 && w.misses == 0);
    assert_eq!(cold.values, warm.values);
    assert_eq!(cold.config_hash, warm.config_hash);

    // resuming with nothing to resume from is a usage error
    let plain = glove_config(dir.path(), "");
    assert_eq!(
        shapsrc(&["value", "--config", s(&plain), "--resume"]).status.code(),
        Some(2)
    );
}

#[test]
fn worker_count_does_not_change_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = glove_config(dir.path(), "");
    let one = run_ok(&[
        "value",
        "--config",
        s(&cfg),
        "--workers",
        "1",
        "--out",
        s(&dir.path().join("w1")),
    ]);
    let eight = run_ok(&[
        "value",
        "--config",
        s(&cfg),
        "--workers",
        "8",
        "--out",
        s(&dir.path().join("w8")),
    ]);
    assert_eq!(one.values, eight.values);
    assert_eq!(one.config_hash, eight.config_hash);
    let (a, b) = (one.valuation.unwrap(), eight.valuation.unwrap());
    assert_eq!(a.cache.misses, b.cache.misses);
    assert_eq!(a.epochs_run, b.epochs_run);
}

#[test]
fn baselines_on_known_games() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_ok(&["baselines", "--config", s(&additive_config(dir.path()))]);
    let b = r.baselines.unwrap();
    let w = [0.1, 0.5, 0.25, 0.15];
    assert!(close(&b.single[0], &w, 1e-12));
    assert!(close(&b.loo.unwrap()[0], &w, 1e-12));
    assert_eq!(b.greedy[0], ["s1", "s2", "s3", "s0"]);

    let r = run_ok(&["baselines", "--config", s(&glove_config(dir.path(), ""))]);
    let b = r.baselines.unwrap();
    assert!(close(&b.single[0], &[0.0; 3], 1e-12));
    assert!(close(&b.loo.unwrap()[0], &[1.0, 0.0, 0.0], 1e-12));

    let first = run_ok(&["baselines", "--config", s(&glove_config(dir.path(), "")), "--seed", "1"])
        .baselines
        .unwrap();
    let second = run_ok(&["baselines", "--config", s(&glove_config(dir.path(), "")), "--seed", "2"])
        .baselines
        .unwrap();
    assert_ne!(first.random, second.random);
    assert_eq!(first.single, second.single);
    assert_eq!(first.loo, second.loo);
    assert_eq!(first.greedy, second.greedy);
}

#[test]
fn report_roundtrips_and_refuses_other_versions() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_ok(&["value", "--config", s(&glove_config(dir.path(), ""))]);
    assert_eq!(r.schema_version, SCHEMA_VERSION);
    let path = dir.path().join("copy.json");
    r.write_json(&path).unwrap();
    assert_eq!(Report::load(&path).unwrap(), r);

    let mut raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    raw["schema_version"] = serde_json::json!(SCHEMA_VERSION + 1);
    std::fs::write(&path, raw.to_string()).unwrap();
    let err = Report::load(&path).unwrap_err().to_string();
    assert!(err.contains("schema version"), "{err}");
}

#[test]
fn select_drops_the_noisy_source() {
    let dir = tempfile::tempdir().unwrap();
    let task = TextTaskSpec {
        noisy_sources: vec![3],
        seed: 1,
        signal: 0.2,
        class_vocab: 40,
        domain_signal: 0.2,
        target_domain: Some(3),
        noise: FlipNoise::Swap(0, 1),
        ..Default::default()
    }
    .generate()
    .unwrap();
    let toml = format!(
        "seed = 1\noutput_dir = \"out\"\n\n[oracle]\nkind = \"naive-count\"\n\n[engine]\nnepoch = 60\n\n[select]\ndev_target = \"dev\"\ntest_target = \"test\"\nvalues = \"out/value.json\"\n\n{}",
        write_task(dir.path(), &task)
    );
    let cfg = write(dir.path(), "noisy.toml", &toml);
    let values = run_ok(&["value", "--config", s(&cfg)]).values.unwrap();
    let dev = &values[0];
    let worst = (0..dev.len()).min_by(|&a, &b| dev[a].total_cmp(&dev[b])).unwrap();
    assert_eq!(worst, 3, "{dev:?}");

    let sel = run_ok(&["select", "--config", s(&cfg)]).selection.unwrap();
    assert!(
        !sel.chosen_sources.contains(&"src3".to_string()),
        "{:?}",
        sel.chosen_sources
    );
    let test = sel.test.unwrap();
    assert!(
        test.chosen > test.all_sources,
        "{} vs {}",
        test.chosen,
        test.all_sources
    );
}

fn rank_fixture(dir: &Path, with_missing_row: bool) -> (std::path::PathBuf, Vec<f64>, Vec<String>) {
    let task = TextTaskSpec {
        sources: 5,
        per_source: 200,
        seed: 3,
        domain_signal: 0.15,
        ..Default::default()
    }
    .generate()
    .unwrap();
    let names: Vec<String> = task.sources.iter().map(|c| c.id.name.clone()).collect();
    let mut engine = EngineConfig::new(6);
    engine.nepoch = 20;
    // one feature per pair: the held-out value itself
    let mut csv = String::from("target,source,value\n");
    let mut target_values = Vec::new();
    for j in 0..names.len() {
        let oracle = held_out_oracle(&task.sources, j, ClassifierKind::NaiveCount, task.labels.len()).unwrap();
        let v = seal_shap(&oracle, &engine).unwrap().values.remove(0);
        let others = names.iter().enumerate().filter(|&(x, _)| x != j).map(|(_, n)| n);
        for (k, (src, val)) in others.zip(&v).enumerate() {
            if with_missing_row && j == 2 && k == 1 {
                continue;
            }
            csv += &format!("{},{src},{val}\n", names[j]);
        }
        if j == 0 {
            target_values = v;
        }
    }
    write(dir, "features.csv", &csv);
    let toml = format!(
        "seed = 6\noutput_dir = \"out\"\n\n[oracle]\nkind = \"naive-count\"\n\n[engine]\nnepoch = 20\n\n[rank]\ntarget = \"src0\"\nfeatures = \"features.csv\"\nlambdas = [1e-6, 0.01, 1.0]\ntop_k = 2\n\n{}",
        write_task(dir, &task)
    );
    let candidates = names[1..].to_vec();
    (write(dir, "rank.toml", &toml), target_values, candidates)
}

#[test]
fn rank_with_identity_feature_recovers_value_order() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, values, candidates) = rank_fixture(dir.path(), false);
    let r = run_ok(&["rank", "--config", s(&cfg)]);
    let ranking = r.ranking.unwrap();
    assert_eq!(ranking.sweep.len(), 3);
    assert_eq!(ranking.training_rows, 20);
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let want: Vec<String> = idx[..2].iter().map(|&i| candidates[i].clone()).collect();
    assert_eq!(ranking.top_k.unwrap(), want);
    assert_eq!(r.sources, candidates);
    assert!(dir.path().join("out/rank_model.json").exists());
    assert!(dir.path().join("out/predictions.csv").exists());
}

#[test]
fn rank_names_a_missing_feature_row() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _, _) = rank_fixture(dir.path(), true);
    let out = shapsrc(&["rank", "--config", s(&cfg)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("src2") && err.contains("src1"), "{err}");
}
