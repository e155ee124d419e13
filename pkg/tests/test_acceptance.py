"""Acceptance criteria, one marked test (or group) per criterion.

Run ``pytest tests/test_acceptance.py`` to get a PASS/FAIL line per
criterion in the terminal summary.
"""
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import greedy_tree_impurities, knn_brute_force, tree_suite
from scintclass.cli import main
from scintclass.evaluate import cross_validate
from scintclass.learners import ModelParams
from scintclass.learners.bagging import BaggedTrees
from scintclass.learners.knn import WeightedKNN
from scintclass.learners.svm import SVM
from scintclass.learners.tree import DecisionTree
from scintclass.metrics import ConfusionMatrix, accuracy, precision_recall
from scintclass.pipeline import SplitPlan, classify_s4
from scintclass.synth import SynthSpec, generate
from scintclass.tuner import SearchSpace, tune

criterion = pytest.mark.criterion


def cli(*argv):
    return main([str(a) for a in argv])


# 1 ---------------------------------------------------------------------------

PRINTED = {
    "balanced": (
        [[19225, 2076, 276], [3336, 17063, 2780], [398, 3820, 19903]],
        81.58, (83.74, 74.32, 86.69), (89.11, 73.61, 82.51),
    ),
    "imbalanced": (
        [[377197, 7969, 400], [1627, 7460, 715], [64, 288, 1180]],
        97.21, (99.56, 47.47, 51.42), (97.83, 76.11, 77.02),
    ),
}


@criterion(1, "metrics reproduce the printed confusion-matrix rates within 0.02 points, < 1 s")
@pytest.mark.parametrize("table", sorted(PRINTED))
def test_metrics_match_printed_tables(table):
    cells, acc, recalls, precisions = PRINTED[table]
    t0 = time.perf_counter()
    cm = ConfusionMatrix(np.array(cells))
    got_acc = 100 * accuracy(cm)
    rates = [precision_recall(cm, c) for c in (1, 2, 3)]
    elapsed = time.perf_counter() - t0
    assert abs(got_acc - acc) <= 0.02
    for (p, r), want_r, want_p in zip(rates, recalls, precisions):
        assert abs(100 * r - want_r) <= 0.02
        assert abs(100 * p - want_p) <= 0.02
    assert elapsed < 1.0


# 2 ---------------------------------------------------------------------------

@criterion(2, "S4 class-bin boundaries")
def test_class_bin_boundaries():
    got = [int(classify_s4(v)) for v in (0.05, 0.19, 0.20, 0.29, 0.30, 1.0)]
    assert got == [1, 1, 2, 2, 3, 3]


# 3 ---------------------------------------------------------------------------

@criterion(3, "provenance sidecar step counts match analytic expectations")
def test_pipeline_counts_in_sidecar(tmp_path):
    rows, rejects = 600, 4
    props = (0.5, 0.3, 0.2)
    assert cli("synth", "--rows", rows, "--proportions", ",".join(map(str, props)), "--rejects", rejects,
               "--seed", 11, "--out", tmp_path / "s") == 0
    assert cli("preprocess", "--ismr", tmp_path / "s" / "ismr.csv", "--solar", tmp_path / "s" / "solar.csv",
               "--balance", "--seed", 11, "--out-dir", tmp_path / "p") == 0
    c = json.loads((tmp_path / "p" / "dataset.provenance.json").read_text())["counts"]
    per_class = [int(rows * p) for p in props]
    raw = rows + 5 * rejects
    assert c["raw"] == raw
    assert c["after_elevation_cutoff"] == raw - rejects
    assert c["after_negative_s4"] == raw - 2 * rejects
    assert c["after_s4_floor"] == raw - 3 * rejects
    assert c["after_index_join"] == rows
    assert (c["missing_f107"], c["no_solar_day"]) == (rejects, rejects)
    assert c["class_counts"] == {str(k + 1): n for k, n in enumerate(per_class)}
    assert c["balanced_per_class"] == min(per_class)
    assert c["balanced_total"] == 3 * min(per_class)


# 4 ---------------------------------------------------------------------------

@criterion(4, "greedy tree impurity equals brute-force oracle on >= 100 small datasets, < 30 s")
def test_tree_matches_exhaustive_oracle():
    suite = tree_suite(150, seed=2024)
    t0 = time.perf_counter()
    mismatches = []
    for i, (X, y, budget) in enumerate(suite):
        got = DecisionTree(max_splits=budget).fit(X, y).training_impurity()
        if not any(abs(got - float(v)) <= 1e-12 for v in greedy_tree_impurities(X, y, budget)):
            mismatches.append(i)
    elapsed = time.perf_counter() - t0
    assert len(suite) >= 100
    assert mismatches == []
    assert elapsed < 30.0


# 5 ---------------------------------------------------------------------------

@criterion(5, "KNN identical to brute-force scan, 100 queries x 200 exemplars")
def test_knn_matches_brute_force():
    rng = np.random.default_rng(2024)
    X = rng.normal(size=(200, 7)) * rng.uniform(0.5, 20, 7)
    y = rng.integers(1, 4, 200)
    Q = rng.normal(size=(100, 7)) * X.std(axis=0)
    knn = WeightedKNN(k=10).fit(X, y)
    assert np.array_equal(knn.predict(Q), knn_brute_force(X, y, Q, 10))


# 6 ---------------------------------------------------------------------------

@criterion(6, "single un-bootstrapped bagged tree equals a plain tree on 1 000 rows")
def test_degenerate_ensemble_identity():
    data = generate(SynthSpec(n_rows=1000, separation=1.0, seed=3)).dataset
    bag = BaggedTrees(n_learners=1, bootstrap=False, max_splits=None).fit(data.X, data.y)
    tree = DecisionTree(max_splits=None).fit(data.X, data.y)
    assert np.array_equal(bag.predict(data.X), tree.predict(data.X))
    assert np.array_equal(bag.predict_scores(data.X), tree.predict_scores(data.X))


# 7 ---------------------------------------------------------------------------

@criterion(7, "SVM duals feasible (0 <= a <= C, |sum a y| <= 1e-8); XOR trains to 100%")
def test_svm_kkt_and_xor():
    data = generate(SynthSpec(n_rows=300, separation=1.0, seed=4)).dataset
    for C in (0.5, 1.0, 5.0):
        svm = SVM(box_constraint=C).fit(data.X, data.y)
        assert len(svm.machines) == 3
        for _, m in svm.machines:
            assert np.all(m.alpha >= 0.0) and np.all(m.alpha <= C)
            assert abs(float(m.alpha @ m.y)) <= 1e-8
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = [1, 1, 2, 2]
    assert SVM().fit(X, y).predict(X).tolist() == y


# 8 ---------------------------------------------------------------------------

@criterion(8, "tuner within 5% of the exhaustive optimum on a 20x20 grid, 50 iterations, < 1 min")
def test_tuner_against_grid_search():
    def objective(p):
        return 0.9 * np.exp(-((p["a"] - 15) ** 2 + (p["b"] - 4) ** 2) / 30.0)

    space = SearchSpace.of(a=(1, 20), b=(1, 20))
    best = max(objective({"a": a, "b": b}) for a in range(1, 21) for b in range(1, 21))
    t0 = time.perf_counter()
    res = tune(objective, space, n_iterations=50, seed=2024)
    elapsed = time.perf_counter() - t0
    assert len(res.history) == 50
    assert res.best.objective >= 0.95 * best
    assert elapsed < 60.0


# 9 ---------------------------------------------------------------------------

@criterion(9, "synth -> preprocess -> 10-fold bagged CV reaches >= 0.90 and beats 1/3, < 2 min")
def test_end_to_end_desk_scale(tmp_path):
    t0 = time.perf_counter()
    assert cli("synth", "--rows", 3000, "--separation", 3, "--seed", 2024, "--out", tmp_path / "s") == 0
    assert cli("preprocess", "--ismr", tmp_path / "s" / "ismr.csv", "--solar", tmp_path / "s" / "solar.csv",
               "--balance", "--out-dir", tmp_path / "p") == 0
    assert cli("eval", "--data", tmp_path / "p" / "dataset.csv", "--model", "bagged", "--split", "kfold",
               "--k", 10, "--out-dir", tmp_path / "e") == 0
    elapsed = time.perf_counter() - t0
    metrics = json.loads((tmp_path / "e" / "metrics.json").read_text())
    assert metrics["n_folds"] == 10 and metrics["total"] == 3000
    assert metrics["accuracy"] >= 0.90 and metrics["accuracy"] > 1 / 3
    assert elapsed < 120.0


# 10 --------------------------------------------------------------------------

@criterion(10, "imbalanced fixture: bagged majority-class recall exceeds minority recall")
def test_imbalance_bias_direction():
    data = generate(SynthSpec.from_counts((3789, 157, 23), seed=2024)).dataset
    res = cross_validate(ModelParams.defaults("bagged"), data, SplitPlan(kind="kfold", k=10, seed=1), seed=2)
    recalls = [precision_recall(res.pooled, c)[1] for c in (1, 2, 3)]
    assert recalls[0] > recalls[1] and recalls[0] > recalls[2]


# 11 --------------------------------------------------------------------------

CEDAR = os.environ.get("SCINT_CEDAR_DIR")


@criterion(11, "full-scale run on downloaded observations within 3 points (needs SCINT_CEDAR_DIR)")
@pytest.mark.skipif(not CEDAR, reason="set SCINT_CEDAR_DIR to a directory with ismr.csv and solar.csv")
@pytest.mark.parametrize("balanced, target", [(True, 81.58), (False, 97.21)])
def test_full_scale(tmp_path, balanced, target):
    src = Path(CEDAR)
    extra = ["--config", src / "config.json"] if (src / "config.json").exists() else []
    pre = tmp_path / "p"
    assert cli("preprocess", *extra, "--ismr", src / "ismr.csv", "--solar", src / "solar.csv",
               "--balance" if balanced else "--no-balance", "--out-dir", pre) == 0
    split = ["--split", "kfold", "--k", 10] if balanced else ["--split", "holdout", "--train-fraction", 0.9]
    assert cli("eval", *extra, "--data", pre / "dataset.csv", "--model", "bagged", *split,
               "--out-dir", tmp_path / "e") == 0
    acc = 100 * json.loads((tmp_path / "e" / "metrics.json").read_text())["accuracy"]
    assert abs(acc - target) <= 3.0
