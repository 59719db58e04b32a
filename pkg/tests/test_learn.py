import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import f1_score, precision_score, recall_score

from scadafusion.errors import ColumnMismatch, ConfigError, FoldTooSmall, LengthMismatch, SingleClassTraining
from scadafusion.learn import (ALGOS, ClassifierSpec, Model, evaluate, grid_search, stratified_folds,
                               stratified_split, train)

from conftest import as_matrix, blobs

FAST = {"MLP": {"epochs": 60}, "RF": {"n_estimators": 30}}


def spec(algo, **kw):
    return ClassifierSpec(algo, {**FAST.get(algo, {}), **kw}, seed=1)


@pytest.mark.parametrize("algo", ALGOS)
def test_blobs_fit(algo):
    X, y = blobs(200, sep=6.0)
    m = train(spec(algo), as_matrix(X), y)
    assert evaluate(y, m.predict(as_matrix(X))).weighted_f1 >= 0.95


@pytest.mark.parametrize("algo", ALGOS)
def test_probabilities_normalised_and_deterministic(algo):
    X, y = blobs(120, sep=2.0, seed=4)
    a = train(spec(algo), X, y).predict_proba(X)
    b = train(spec(algo), X, y).predict_proba(X)
    assert np.allclose(a.sum(axis=1), 1, atol=1e-9) and np.all(a >= 0)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("algo", ALGOS)
def test_json_round_trip(algo):
    X, y = blobs(80, sep=2.0, seed=2, classes=3)
    m = train(spec(algo), as_matrix(X), y)
    back = Model.from_json(m.to_json())
    assert np.array_equal(back.predict_proba(as_matrix(X)), m.predict_proba(as_matrix(X)))
    assert back.fingerprint == m.fingerprint


def test_dt_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], float)
    y = np.array([0, 1, 1, 0])
    m = train(ClassifierSpec("DT"), X, y)
    assert m.predict(X).tolist() == y.tolist()


def test_gnb_separated_gaussians():
    rng = np.random.default_rng(0)
    y = np.arange(2000) % 2
    X = rng.normal(size=(2000, 1)) + np.where(y == 1, 3.0, -3.0)[:, None]
    tr, te = stratified_split(y, 0.3, 0)
    m = train(ClassifierSpec("GNB"), X[tr], y[tr])
    assert evaluate(y[te], m.predict(X[te])).weighted_f1 >= 0.95


def test_knn_own_point():
    X, y = blobs(40, sep=0.5, seed=3)
    P = train(ClassifierSpec("KNN", {"k": 1}), X, y).predict_proba(X)
    assert np.array_equal(P[np.arange(len(y)), y], np.ones(len(y)))


def test_svc_probability_monotone_in_margin():
    X, y = blobs(200, sep=2.0, seed=5)
    m = train(ClassifierSpec("SVC"), X, y)
    est = m._est
    grid = np.c_[np.linspace(-5, 10, 200), np.linspace(-5, 10, 200)]
    f = est.decision_function(grid)[:, 0]
    p = m.predict_proba(grid)[:, 1]
    order = np.argsort(f)
    assert np.all(np.diff(p[order]) >= -1e-12)


def test_tie_goes_to_smaller_class():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array(["b", "a", "b", "a"])
    m = train(ClassifierSpec("DT"), X, y)
    assert m.predict(X).tolist() == ["a"] * 4


def test_training_errors():
    with pytest.raises(SingleClassTraining):
        train(ClassifierSpec("LR"), np.zeros((3, 2)), [1, 1, 1])
    with pytest.raises(LengthMismatch):
        train(ClassifierSpec("LR"), np.zeros((3, 2)), [0, 1])
    with pytest.raises(ConfigError):
        ClassifierSpec("DT", {"depth": 3})
    with pytest.raises(ConfigError):
        ClassifierSpec("XGB")
    X, y = blobs(20)
    m = train(ClassifierSpec("LR"), as_matrix(X), y)
    with pytest.raises(ColumnMismatch):
        m.predict(as_matrix(X, prefix="g"))
    with pytest.raises(ColumnMismatch):
        m.predict(np.zeros((2, 3)))


def test_evaluate_examples():
    t = np.array([1] * 60 + [0] * 40)
    p = np.array([1] * 40 + [0] * 20 + [1] * 10 + [0] * 30)
    m = evaluate(t, p)
    assert m.precision[1] == pytest.approx(0.8)
    assert m.recall[1] == pytest.approx(2 / 3)
    assert m.f1[1] == pytest.approx(0.7272727, abs=1e-6)
    assert m.confusion.tolist() == [[30, 10], [20, 40]]
    same = evaluate(t, t)
    assert same.row() == (1.0, 1.0, 1.0)
    one = evaluate([0, 0, 1, 1], [1, 1, 1, 1])
    assert one.recall.tolist() == [0, 1] and one.weighted_recall == 0.5
    with pytest.raises(LengthMismatch):
        evaluate([0], [0, 1])


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=60))
def test_weighted_metrics_match_oracles(pairs):
    t = np.array([a for a, _ in pairs])
    p = np.array([b for _, b in pairs])
    m = evaluate(t, p)
    labels = sorted(set(t) | set(p))
    kw = dict(average="weighted", labels=labels, zero_division=0)
    assert m.weighted_f1 == pytest.approx(f1_score(t, p, **kw))
    assert m.weighted_recall == pytest.approx(recall_score(t, p, **kw))
    assert m.weighted_precision == pytest.approx(precision_score(t, p, **kw))
    # brute-force confusion counts
    for i, c in enumerate(m.classes):
        tp = sum(1 for a, b in pairs if a == c and b == c)
        fp = sum(1 for a, b in pairs if a != c and b == c)
        fn = sum(1 for a, b in pairs if a == c and b != c)
        prec = tp / (tp + fp) if tp + fp else 0
        rec = tp / (tp + fn) if tp + fn else 0
        assert m.f1[i] == pytest.approx(2 * prec * rec / (prec + rec) if prec + rec else 0)
    assert min(m.f1) - 1e-12 <= m.weighted_f1 <= max(m.f1) + 1e-12


def test_grid_search():
    X = np.tile(np.array([[0, 0], [0, 1], [1, 0], [1, 1]], float), (10, 1))
    y = np.tile([0, 1, 1, 0], 10)
    best, score = grid_search(ClassifierSpec("DT"), X, y, {"max_depth": [1, None]}, folds=2)
    assert best == {"max_depth": None} and score == 1.0
    one, _ = grid_search(ClassifierSpec("LR"), X, y, {"l2": [0.5]}, folds=2)
    assert one == {"l2": 0.5}
    Xb, yb = blobs(60, sep=1.0)
    r1 = grid_search(ClassifierSpec("KNN"), Xb, yb, {"k": [1, 3, 5]}, folds=3)
    assert r1 == grid_search(ClassifierSpec("KNN"), Xb, yb, {"k": [1, 3, 5]}, folds=3)
    with pytest.raises(FoldTooSmall):
        stratified_folds([0, 0, 1], 2)


def test_split_stratified():
    y = np.array([0] * 70 + [1] * 30)
    tr, te = stratified_split(y, 0.3, 0)
    assert len(te) == 30 and (y[te] == 1).sum() == 9
    assert not set(tr) & set(te)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000), st.sampled_from(["exp", "cube", "affine"]))
def test_trees_invariant_to_monotone_transforms(seed, kind):
    X, y = blobs(150, p=3, sep=1.0, seed=seed)
    f = {"exp": np.exp, "cube": lambda a: a ** 3, "affine": lambda a: 7 * a - 2}[kind]
    for algo, kw in (("DT", {}), ("RF", {"n_estimators": 10})):
        a = train(ClassifierSpec(algo, kw, seed=seed), X, y).predict(X)
        b = train(ClassifierSpec(algo, kw, seed=seed), f(X), y).predict(f(X))
        assert np.array_equal(a, b)


def test_single_tree_forest_equals_tree():
    X, y = blobs(200, p=4, sep=1.0, seed=8)
    dt = train(ClassifierSpec("DT"), X, y)
    rf = train(ClassifierSpec("RF", {"n_estimators": 1, "max_features": None, "bootstrap": False}), X, y)
    assert np.array_equal(dt.predict_proba(X), rf.predict_proba(X))
