"""Smoke test for the shapsrc extension module.

Build and run from the repository root:

    cargo build --release -p shapsrc-py --features extension-module
    cp target/release/libshapsrc.so python/shapsrc.so
    python3 python/smoke_test.py
"""

import json
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import shapsrc


def close(a, b, tol):
    return len(a) == len(b) and all(abs(x - y) <= tol for x, y in zip(a, b))


def main():
    glove = shapsrc.Oracle.tabular(shapsrc.Game.glove(3))
    exact = shapsrc.exact_shapley(glove)[0]
    assert close(exact, [2 / 3, 1 / 6, 1 / 6], 1e-12), exact

    cfg = shapsrc.EngineConfig(seed=4, nepoch=3000, epsilon=0.0, workers=2)
    res = shapsrc.seal_shap(glove, cfg)
    assert close(res.values[0], exact, 0.02), res.values
    assert res.epochs_run == 3000 and res.oracle_trainings <= 8

    additive = shapsrc.Oracle.tabular(shapsrc.Game.additive([0.1, 0.5, 0.25, 0.15]))
    assert close(shapsrc.baseline_single(additive)[0], [0.1, 0.5, 0.25, 0.15], 1e-12)
    assert shapsrc.greedy_dfs(additive, 0, 2) == [1, 2]
    assert shapsrc.select_topk([0.1, 0.5, 0.25, 0.15], 2) == [1, 2]
    assert shapsrc.select_threshold([0.1, 0.5, 0.25, 0.15], 0.2) == [1, 2]

    assert shapsrc.paired_bootstrap([True] * 4, [False] * 4) == 0.0
    spearman, pearson = shapsrc.rank_agreement([1.0, 2.0, 3.0], [2.0, 4.0, 7.0])
    assert abs(spearman - 1.0) < 1e-12 and pearson > 0.9, (spearman, pearson)

    rows = [("t%d" % t, "s%d" % s, [float(s), float(t)], 0.5 * s - 0.2 * t) for t in range(3) for s in range(4)]
    model = shapsrc.train_ranker(rows, 1e-9)
    assert close(model.weights, [0.5, -0.2], 1e-6), model.weights
    assert json.loads(model.to_json())["lambda"] == 1e-9

    with tempfile.TemporaryDirectory() as d:
        def corpus(name, docs):
            path = os.path.join(d, name + ".jsonl")
            with open(path, "w") as f:
                for text, label in docs:
                    f.write(json.dumps({"text": text, "label": label}) + "\n")
            return (name, path)

        good = [("red apple", "a"), ("blue sky", "b")] * 10
        bad = [("red apple", "b"), ("blue sky", "a")] * 25
        oracle = shapsrc.Oracle.corpora(
            [corpus("good1", good), corpus("good2", good), corpus("bad", bad)],
            [corpus("dev", good)],
        )
        assert oracle.source_names == ["good1", "good2", "bad"]
        values = shapsrc.seal_shap(oracle, shapsrc.EngineConfig(seed=1, nepoch=30)).values[0]
        assert values[2] < min(values[0], values[1]), values
        sel = shapsrc.tune_threshold(values, [0.01, 0.0], oracle, 0)
        assert 2 not in sel.chosen, sel.to_json()

    try:
        shapsrc.EngineConfig(sample_rate=2.0).rho = "nonsense"
        shapsrc.seal_shap(glove, shapsrc.EngineConfig(rho="nonsense"))
    except shapsrc.ShapsrcError as e:
        assert "nonsense" in str(e)
    else:
        raise AssertionError("bad rho accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
