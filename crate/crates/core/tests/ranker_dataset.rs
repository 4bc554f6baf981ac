use shapsrc_core::oracle::TabularGame;
use shapsrc_core::ranker::*;
use shapsrc_core::synth::TextTaskSpec;
use shapsrc_core::*;

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i}")).collect()
}

fn table(names: &[String], f: impl Fn(usize, usize) -> Vec<f64>) -> FeatureTable {
    let mut t = FeatureTable::new(vec!["a".into(), "b".into()]);
    for (j, target) in names.iter().enumerate() {
        for (x, source) in names.iter().enumerate() {
            if x != j {
                t.insert(target, source, f(j, x)).unwrap();
            }
        }
    }
    t
}

/// Oracle over every corpus but `j`, built from `rule(j, members)` where
/// members are original corpus indices.
fn held_out_game(names: &[String], j: usize, rule: impl Fn(usize, &[usize]) -> f64) -> Result<Box<dyn ScoreOracle>> {
    let others: Vec<usize> = (0..names.len()).filter(|&x| x != j).collect();
    let game = TabularGame::from_fn(others.len(), 1, |s| {
        let members: Vec<usize> = s.iter().map(|i| others[i]).collect();
        vec![rule(j, &members)]
    })?;
    let oracle = TabularOracle::new(game).with_names(
        others.iter().map(|&x| names[x].clone()).collect(),
        vec![names[j].clone()],
    )?;
    Ok(Box::new(oracle))
}

#[test]
fn three_corpora_give_six_rows_with_exact_values() {
    let n = names(3);
    let weight = |j: usize, x: usize| 0.1 * (1 + x) as f64 + 0.05 * j as f64;
    let features = table(&n, |j, x| vec![j as f64, x as f64]);
    let mut cfg = EngineConfig::new(4);
    cfg.nepoch = 30;
    let rows = build_ranker_dataset(&n, &features, &cfg, |j| {
        held_out_game(&n, j, |j, s| s.iter().map(|&x| weight(j, x)).sum())
    })
    .unwrap();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let (j, x) = (
            n.iter().position(|c| *c == r.target).unwrap(),
            n.iter().position(|c| *c == r.source).unwrap(),
        );
        assert_ne!(j, x);
        // additive games have constant marginals, so the estimate is exact
        assert!((r.value - weight(j, x)).abs() < 1e-12);
        assert_eq!(r.features, vec![j as f64, x as f64]);
    }
}

#[test]
fn symmetric_sources_get_matching_rows() {
    let n = names(4);
    // corpora 1 and 2 are interchangeable; the game only counts how many
    // of them are present, with diminishing returns
    let rule = |_j: usize, s: &[usize]| {
        let pair = s.iter().filter(|&&x| x == 1 || x == 2).count() as f64;
        let rest = s.iter().filter(|&&x| x == 0 || x == 3).count() as f64;
        1.0 - (-(0.4 * pair + 0.2 * rest)).exp() + 0.1 * pair * rest
    };
    let features = table(&n, |_, x| {
        if x == 1 || x == 2 {
            vec![1.0, 1.0]
        } else {
            vec![0.0, x as f64]
        }
    });
    let mut cfg = EngineConfig::new(8);
    cfg.nepoch = 3000;
    cfg.convergence.epsilon = Some(0.0);
    let rows = build_ranker_dataset(&n, &features, &cfg, |j| held_out_game(&n, j, rule)).unwrap();
    for target in ["c0", "c3"] {
        let pick = |src: &str| rows.iter().find(|r| r.target == target && r.source == src).unwrap();
        let (a, b) = (pick("c1"), pick("c2"));
        assert_eq!(a.features, b.features);
        assert!((a.value - b.value).abs() < 0.02, "{} vs {}", a.value, b.value);
    }
}

#[test]
fn missing_features_are_named_before_any_valuation() {
    let n = names(3);
    let mut features = FeatureTable::new(vec!["a".into()]);
    features.insert("c0", "c1", vec![1.0]).unwrap();
    let mut calls = 0;
    let err = build_ranker_dataset(&n, &features, &EngineConfig::new(0), |j| {
        calls += 1;
        held_out_game(&n, j, |_, s| s.len() as f64)
    })
    .unwrap_err();
    assert_eq!(calls, 0);
    let msg = err.to_string();
    assert!(msg.contains("c0") && msg.contains("c2"), "{msg}");
}

#[test]
fn wrong_oracle_shape_and_too_few_corpora() {
    let n = names(3);
    let features = table(&n, |_, _| vec![0.0, 0.0]);
    let err = build_ranker_dataset(&n, &features, &EngineConfig::new(0), |_| {
        held_out_game(&n, 0, |_, s| s.len() as f64)
    });
    assert!(err.is_err());
    let two = names(2);
    let err = build_ranker_dataset(&two, &table(&two, |_, _| vec![0.0, 0.0]), &EngineConfig::new(0), |j| {
        held_out_game(&two, j, |_, s| s.len() as f64)
    });
    assert!(err.is_err());
}

#[test]
fn ranker_learns_from_built_dataset() {
    // value of x for target j is linear in (feature a, feature b)
    let n = names(5);
    let feat = |j: usize, x: usize| vec![((j * 7 + x * 3) % 5) as f64, x as f64];
    let value = |j: usize, x: usize| {
        let f = feat(j, x);
        0.05 + 0.02 * f[0] + 0.03 * f[1]
    };
    let features = table(&n, feat);
    let mut cfg = EngineConfig::new(1);
    cfg.nepoch = 10;
    let rows = build_ranker_dataset(&n, &features, &cfg, |j| {
        held_out_game(&n, j, |j, s| s.iter().map(|&x| value(j, x)).sum())
    })
    .unwrap();
    let model = train_ranker(&rows, 1e-9).unwrap();
    assert!((model.weights[0] - 0.02).abs() < 1e-6 && (model.weights[1] - 0.03).abs() < 1e-6);
    let sweep = lambda_sweep(&rows, &[1e-9, 1.0, 1e6]).unwrap();
    assert_eq!(sweep.len(), 3);
    assert!(sweep[0].loss < sweep[2].loss);
}

#[test]
fn held_out_oracle_trains_on_the_rest() {
    let task = TextTaskSpec {
        per_source: 30,
        sources: 3,
        ..Default::default()
    }
    .generate()
    .unwrap();
    let oracle = held_out_oracle(&task.sources, 1, ClassifierKind::NaiveCount, 3).unwrap();
    assert_eq!(oracle.source_names(), ["src0".to_string(), "src2".to_string()]);
    assert_eq!(oracle.target_names(), ["src1".to_string()]);
    assert!(held_out_oracle(&task.sources, 3, ClassifierKind::NaiveCount, 3).is_err());
}
