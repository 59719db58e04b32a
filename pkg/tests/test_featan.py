import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from scadafusion.errors import DegenerateMatrix, TooFewRows
from scadafusion.featan import pca_fit_transform, pearson_matrix, select_features, shapiro_rank, shapiro_w

# W from scipy.stats.shapiro on default_rng(2024).standard_normal(500) and on a 250/250 two-point sample
W_NORMAL_500 = 0.9968198927571671
W_TWO_POINT = 0.6365428322476134


def test_pearson_basic():
    x = np.arange(10.0)
    R = pearson_matrix(np.c_[x, -x, x ** 2]).values
    assert R[0, 0] == 1 and R[0, 1] == pytest.approx(-1)
    assert np.allclose(R, R.T)


def test_pearson_direct_formula():
    X = np.random.default_rng(3).normal(size=(50, 5))
    R = pearson_matrix(X).values
    n = len(X)
    for i in range(5):
        for j in range(5):
            a, b = X[:, i], X[:, j]
            cov = sum((a[k] - a.mean()) * (b[k] - b.mean()) for k in range(n)) / (n - 1)
            assert R[i, j] == pytest.approx(cov / (a.std(ddof=1) * b.std(ddof=1)), abs=1e-12)


def test_pearson_constant_column_flagged():
    X = np.c_[np.arange(5.0), np.full(5, 2.0)]
    cm = pearson_matrix(X, ["a", "b"])
    assert cm.constant == ["b"] and cm.values[0, 1] == 0
    with pytest.raises(TooFewRows):
        pearson_matrix(np.zeros((1, 2)))


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.integers(2, 40), st.integers(1, 8))
def test_pearson_psd(seed, n, p):
    X = np.random.default_rng(seed).normal(size=(n, p))
    R = pearson_matrix(X).values
    assert np.linalg.eigvalsh(R).min() >= -1e-10
    assert np.all(np.abs(R) <= 1)


def test_pca_line():
    x = np.linspace(0, 1, 20)
    model, Z = pca_fit_transform(np.c_[x, 2 * x])
    assert model.k == 1 and model.explained_variance_ratio[0] == pytest.approx(1)
    with pytest.raises(DegenerateMatrix):
        pca_fit_transform(np.ones((5, 3)))


def test_pca_isotropic_ratios():
    X = np.random.default_rng(0).normal(size=(20_000, 4))
    model, _ = pca_fit_transform(X, 0.999)
    assert np.allclose(model.explained_variance_ratio, 0.25, atol=0.01)


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.floats(0.5, 0.99))
def test_pca_properties(seed, thr):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 6)) @ rng.normal(size=(6, 6))
    model, Z = pca_fit_transform(X, thr)
    V = model.components
    assert np.allclose(V.T @ V, np.eye(model.k), atol=1e-8)
    r = model.explained_variance_ratio
    assert np.all(np.diff(r) <= 1e-12) and r.sum() <= 1 + 1e-12
    assert r.sum() >= thr - 1e-9
    err = ((X - model.reconstruct(Z)) ** 2).sum()
    assert err <= (1 - thr) * model.total_variance + 1e-9
    pivot = np.abs(V).argmax(axis=0)
    assert np.all(V[pivot, np.arange(model.k)] > 0)


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_pca_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 5)) * [5, 3, 2, 1, 0.5]
    Q = special_ortho_group.rvs(5, random_state=seed)
    a, _ = pca_fit_transform(X, 1.0)
    b, _ = pca_fit_transform(X @ Q, 1.0)
    assert np.allclose(a.explained_variance_ratio, b.explained_variance_ratio, atol=1e-8)


def test_shapiro_frozen_references():
    x = np.random.default_rng(2024).standard_normal(500)
    assert shapiro_w(x) == pytest.approx(W_NORMAL_500, abs=1e-8) and shapiro_w(x) > 0.99
    two = np.r_[np.zeros(250), np.ones(250)]
    assert shapiro_w(two) == pytest.approx(W_TWO_POINT, abs=1e-8)
    assert select_features({"m": shapiro_w(two)}) == []


@settings(max_examples=60)
@given(st.integers(3, 400), st.integers(0, 10_000), st.sampled_from(["normal", "exponential", "uniform"]))
def test_shapiro_matches_scipy(n, seed, dist):
    x = getattr(np.random.default_rng(seed), dist)(size=n)
    assert shapiro_w(x) == pytest.approx(scipy.stats.shapiro(x).statistic, abs=1e-6)


def test_shapiro_rank_and_selection():
    rng = np.random.default_rng(1)
    X = np.c_[rng.normal(size=300), np.full(300, 4.0), rng.integers(0, 2, 300)]
    scores = shapiro_rank(X, ["n", "c", "b"])
    assert scores["c"] == 0
    assert select_features(scores, 0) == ["n", "b"]
    assert select_features(scores) == ["n"]
    with pytest.raises(TooFewRows):
        shapiro_rank(X[:2])


def test_shapiro_subsamples_long_columns():
    x = np.random.default_rng(0).normal(size=(12_000, 1))
    assert shapiro_rank(x)["x0"] > 0.99


@given(st.dictionaries(st.text(min_size=1, max_size=3), st.floats(0, 1)), st.floats(0, 1), st.floats(0, 1))
def test_selection_monotone(scores, c1, c2):
    lo, hi = sorted((c1, c2))
    assert set(select_features(scores, hi)) <= set(select_features(scores, lo))
