import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn import metrics as skm

from scadafusion.cluster import (ALGOS, adjusted_rand, calinski_harabasz, cluster, cluster_quality,
                                 davies_bouldin, kmeans_pp, lloyd, robustness_stats, silhouette,
                                 silhouette_samples)
from scadafusion.errors import KOutOfRange, LengthMismatch, SingleCluster, ZeroMean


def three_blobs(n=60, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0], [10, 0], [0, 10]], float)
    y = np.arange(n) % 3
    return rng.normal(scale=0.5, size=(n, 2)) + centers[y], y


def rings(n=300, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    theta = rng.uniform(0, 2 * np.pi, n)
    r = np.where(y == 0, 1.0, 4.0) + rng.normal(scale=0.05, size=n)
    return np.c_[r * np.cos(theta), r * np.sin(theta)], y


@pytest.mark.parametrize("algo", ALGOS)
def test_separated_blobs_recovered(algo):
    X, y = three_blobs()
    res = cluster(algo, X, 3, seed=1)
    assert adjusted_rand(y, res.labels) == 1.0
    assert set(res.labels.tolist()) == {0, 1, 2}


@pytest.mark.parametrize("algo", ALGOS)
def test_deterministic(algo):
    X, _ = three_blobs(90, seed=4)
    X = X + np.random.default_rng(1).normal(scale=3, size=X.shape)
    a, b = cluster(algo, X, 4, seed=7), cluster(algo, X, 4, seed=7)
    assert np.array_equal(a.labels, b.labels)
    assert a.labels.max() < a.k and np.bincount(a.labels).min() >= 1


def test_k_equals_rows():
    X = np.random.default_rng(0).normal(size=(6, 2))
    res = cluster("KMEANS", X, 6)
    assert sorted(res.labels.tolist()) == list(range(6)) and res.inertia == 0
    with pytest.raises(KOutOfRange):
        cluster("KMEANS", X, 7)
    with pytest.raises(KOutOfRange):
        cluster("KMEANS", X, 1)


def test_rings_spectral_beats_kmeans():
    X, y = rings()
    spec = adjusted_rand(y, cluster("SPECTRAL", X, 2).labels)
    km = adjusted_rand(y, cluster("KMEANS", X, 2).labels)
    assert spec > km and spec > 0.9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6))
def test_lloyd_inertia_non_increasing(seed, k):
    X = np.random.default_rng(seed).normal(size=(80, 3))
    _, _, trace = lloyd(X, kmeans_pp(X, k, np.random.default_rng(seed)))
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))


def test_silhouette_hand_value():
    X = np.array([[0, 0], [0, 1], [10, 0], [10, 1]], float)
    lab = [0, 0, 1, 1]
    b = (10 + math.sqrt(101)) / 2
    assert silhouette_samples(X, lab)[0] == pytest.approx((b - 1) / b)
    assert silhouette(X, lab) == pytest.approx(0.9002487577582194, abs=1e-12)


def test_singleton_silhouette_zero():
    X = np.array([[0.0], [5.0], [5.1]])
    assert silhouette_samples(X, [0, 1, 1])[0] == 0


def _two_blobs(sep):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(100, 2))
    y = np.arange(100) % 2
    return X + sep * y[:, None], y


def test_db_grows_as_clusters_merge():
    vals = [davies_bouldin(*_two_blobs(s)) for s in (8.0, 2.0, 0.5)]
    assert vals[0] < vals[1] < vals[2]


def test_ch_grows_with_separation():
    vals = [calinski_harabasz(*_two_blobs(s)) for s in (1.0, 3.0, 9.0)]
    assert vals[0] < vals[1] < vals[2]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_quality_matches_sklearn(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 3))
    lab = np.arange(40) % k
    rng.shuffle(lab)
    q = cluster_quality(X, lab)
    assert q["silhouette"] == pytest.approx(skm.silhouette_score(X, lab), abs=1e-10)
    assert q["calinski_harabasz"] == pytest.approx(skm.calinski_harabasz_score(X, lab), rel=1e-10)
    assert q["davies_bouldin"] == pytest.approx(skm.davies_bouldin_score(X, lab), rel=1e-10)
    assert -1 <= q["silhouette"] <= 1 and q["davies_bouldin"] >= 0 and q["calinski_harabasz"] >= 0


def test_single_cluster_rejected():
    with pytest.raises(SingleCluster):
        silhouette(np.zeros((3, 2)), [0, 0, 0])


def test_ari_examples():
    assert adjusted_rand([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)
    assert adjusted_rand([0, 0, 1, 2], [5, 5, 7, 9]) == 1.0
    with pytest.raises(LengthMismatch):
        adjusted_rand([0], [0, 1])


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=2, max_size=40), st.permutations([0, 1, 2, 3]))
def test_ari_matches_sklearn_and_relabeling(pairs, perm):
    t = np.array([a for a, _ in pairs])
    p = np.array([b for _, b in pairs])
    ari = adjusted_rand(t, p)
    assert ari == pytest.approx(skm.adjusted_rand_score(t, p), abs=1e-12)
    assert adjusted_rand(t, np.array(perm)[p]) == pytest.approx(ari, abs=1e-12)
    assert ari <= 1 + 1e-12


def test_robustness_stats():
    r = robustness_stats([1, 3])
    assert (r.mean, r.variance) == (2, 2) and r.nvar == pytest.approx(math.sqrt(2) / 2)
    c = robustness_stats([4, 4, 4])
    assert c.variance == 0 and c.nvar == 0
    with pytest.warns(ZeroMean):
        assert math.isnan(robustness_stats([-1, 1]).nvar)


@given(st.lists(st.floats(0.1, 100), min_size=2, max_size=10), st.floats(0.01, 100))
def test_nvar_scale_invariant(series, c):
    a = robustness_stats(series)
    b = robustness_stats([c * v for v in series])
    assert b.nvar == pytest.approx(a.nvar, rel=1e-9, abs=1e-12)
    assert a.nvar * a.mean == pytest.approx(math.sqrt(a.variance), rel=1e-9, abs=1e-12)
