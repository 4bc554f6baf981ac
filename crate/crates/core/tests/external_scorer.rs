use std::path::PathBuf;
use std::time::Duration;

use shapsrc_core::oracle::{ExternalOptions, ExternalOracle};
use shapsrc_core::shapley::exact_from_oracle;
use shapsrc_core::*;

/// Common preamble: answers the handshake, then hands each request to
/// `reply(req)` and prints whatever it returns.
const PRELUDE: &str = r#"
import json, sys
hello = json.loads(sys.stdin.readline())
print(json.dumps({"ok": True, "score_range": [0.0, 1.0]}), flush=True)
for line in sys.stdin:
    req = json.loads(line)
    out = reply(req)
    if out is None:
        break
    print(out if isinstance(out, str) else json.dumps(out), flush=True)
"#;

fn script(dir: &tempfile::TempDir, name: &str, body: &str) -> Vec<String> {
    let path: PathBuf = dir.path().join(name);
    std::fs::write(&path, format!("{body}\n{PRELUDE}")).unwrap();
    vec!["python3".into(), path.to_string_lossy().into_owned()]
}

fn spawn(command: Vec<String>, processes: usize) -> Result<ExternalOracle> {
    let mut opts = ExternalOptions::new(command);
    opts.processes = processes;
    opts.timeout = Duration::from_secs(5);
    ExternalOracle::spawn(
        &opts,
        vec![("en".into(), 4), ("de".into(), 6), ("fr".into(), 2)],
        vec!["es".into(), "it".into()],
    )
}

fn failure_payload(e: &Error) -> Option<&str> {
    match e.root() {
        Error::OracleFailure { payload, .. } => payload.as_deref(),
        other => panic!("expected an oracle failure, got {other:?}"),
    }
}

#[test]
fn echo_scores_pass_through_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(
        &dir,
        "echo.py",
        r#"def reply(req): return {"id": req["id"], "scores": [0.71, 0.66]}"#,
    );
    let oracle = spawn(cmd, 1).unwrap();
    assert_eq!(oracle.score_range(), (0.0, 1.0));
    let ev = Evaluator::new(&oracle, SampleSpec::full()).unwrap();
    let scores = ev.score(&make_subset_key(&[0, 1], 3).unwrap()).unwrap();
    assert_eq!(scores.0, vec![0.71, 0.66]);
}

#[test]
fn requests_carry_sampled_indices() {
    // score = instances trained on / 100, and number of sources / 10
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(
        &dir,
        "count.py",
        r#"def reply(req):
    n = sum(len(t["indices"]) for t in req["train"])
    assert req["targets"] == ["es", "it"]
    return {"id": req["id"], "scores": [n / 100, len(req["train"]) / 10]}"#,
    );
    let oracle = spawn(cmd, 1).unwrap();
    let ev = Evaluator::new(&oracle, SampleSpec::new(0.5, 3).unwrap()).unwrap();
    let s = ev.score(&make_subset_key(&[0, 1, 2], 3).unwrap()).unwrap();
    // ceil(0.5 * 4) + ceil(0.5 * 6) + ceil(0.5 * 2)
    assert_eq!(s.0, vec![0.06, 0.3]);
    assert_eq!(oracle.empty_score().unwrap().0, vec![0.0, 0.0]);
}

#[test]
fn wrong_arity_is_an_oracle_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(
        &dir,
        "short.py",
        r#"def reply(req): return {"id": req["id"], "scores": [0.5]}"#,
    );
    let oracle = spawn(cmd, 1).unwrap();
    let ev = Evaluator::new(&oracle, SampleSpec::full()).unwrap();
    let err = ev.score(&SubsetKey::full(3)).unwrap_err();
    assert!(failure_payload(&err).unwrap().contains("[0.5]"), "{err}");
}

#[test]
fn nan_is_an_oracle_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(
        &dir,
        "nan.py",
        r#"def reply(req): return '{"id": %d, "scores": [NaN, 0.5]}' % req["id"]"#,
    );
    let oracle = spawn(cmd, 1).unwrap();
    let ev = Evaluator::new(&oracle, SampleSpec::full()).unwrap();
    let err = ev.score(&SubsetKey::full(3)).unwrap_err();
    assert!(failure_payload(&err).unwrap().contains("NaN"));
}

#[test]
fn malformed_exit_and_timeout_fail() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = script(&dir, "garbage.py", r#"def reply(req): return "not json""#);
    let e = spawn(garbage, 1).unwrap().empty_score().unwrap_err();
    assert_eq!(failure_payload(&e), Some("not json"));

    let quits = script(&dir, "quits.py", "def reply(req): return None");
    let e = spawn(quits, 1).unwrap().empty_score().unwrap_err();
    assert!(e.to_string().contains("exited"), "{e}");

    let slow = script(&dir, "slow.py", "import time\ndef reply(req):\n    time.sleep(30)");
    let mut opts = ExternalOptions::new(slow);
    opts.timeout = Duration::from_millis(300);
    let oracle = ExternalOracle::spawn(&opts, vec![("a".into(), 1)], vec!["t".into()]).unwrap();
    let e = oracle.empty_score().unwrap_err();
    assert!(e.to_string().contains("timed out"), "{e}");
    // the stuck process is retired, so later calls fail fast
    assert!(oracle
        .empty_score()
        .unwrap_err()
        .to_string()
        .contains("all scorer processes"));
}

#[test]
fn mismatched_id_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(
        &dir,
        "id.py",
        r#"def reply(req): return {"id": req["id"] + 1, "scores": [0.1, 0.2]}"#,
    );
    let e = spawn(cmd, 1).unwrap().empty_score().unwrap_err();
    assert!(e.to_string().contains("does not match"));
}

#[test]
fn refused_handshake_and_missing_program() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("refuse.py");
    std::fs::write(
        &path,
        "import sys\nsys.stdin.readline()\nprint('{\"ok\": false, \"score_range\": [0, 1]}', flush=True)\n",
    )
    .unwrap();
    let refuse = vec!["python3".to_string(), path.to_string_lossy().into_owned()];
    assert!(matches!(spawn(refuse, 1), Err(Error::OracleFailure { .. })));
    assert!(matches!(
        spawn(vec!["/nonexistent/scorer".into()], 1),
        Err(Error::OracleFailure { .. })
    ));
    assert!(spawn(vec![], 1).is_err());
}

#[test]
fn engine_surfaces_scorer_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(
        &dir,
        "flaky.py",
        r#"def reply(req):
    if len(req["train"]) == 2:
        return {"id": req["id"], "scores": [0.5]}
    return {"id": req["id"], "scores": [0.5, 0.5]}"#,
    );
    let oracle = spawn(cmd, 1).unwrap();
    let mut cfg = EngineConfig::new(1);
    cfg.nepoch = 5;
    let err = seal_shap(&oracle, &cfg).unwrap_err();
    assert!(matches!(err, Error::Aborted { .. }), "{err}");
    assert!(failure_payload(&err).is_some());
}

/// A scorer that is a deterministic function of which sources were used:
/// an additive game with weights 0.1, 0.2, 0.3 on the first target and
/// 0.3, 0.2, 0.1 on the second.
const ADDITIVE: &str = r#"W = {"en": (0.1, 0.3), "de": (0.2, 0.2), "fr": (0.3, 0.1)}
def reply(req):
    used = [t["source"] for t in req["train"]]
    return {"id": req["id"], "scores": [sum(W[s][0] for s in used), sum(W[s][1] for s in used)]}"#;

#[test]
fn pooled_processes_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(&dir, "additive.py", ADDITIVE);
    let one = spawn(cmd.clone(), 1).unwrap();
    let four = spawn(cmd, 4).unwrap();
    let mut cfg = EngineConfig::new(7);
    cfg.nepoch = 30;
    cfg.workers = 1;
    let a = seal_shap(&one, &cfg).unwrap();
    cfg.workers = 4;
    let b = seal_shap(&four, &cfg).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.cache_misses, b.cache_misses);
    for (got, want) in a.values.iter().zip([[0.1, 0.2, 0.3], [0.3, 0.2, 0.1]]) {
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }
    let ev = Evaluator::new(&four, SampleSpec::full()).unwrap();
    let exact = exact_from_oracle(&ev, &[0.0, 0.0]).unwrap();
    assert!((exact[1][0] - 0.3).abs() < 1e-12);
}
