import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import pdist, squareform
from scipy.stats import special_ortho_group

from scadafusion.errors import ConfigError, PerplexityTooLarge, ShapeMismatch, TooFewRows
from scadafusion.manifold import (ALGOS, classical_mds, conditional_p, embed, joint_p, lle_weights,
                                  smacof, stress)


def swiss_roll_grid(n_arc=75, n_height=4, height=6.0, seed=0):
    """Swiss roll sampled on a regular (angle, height) grid plus small jitter; returns X and arc length."""
    rng = np.random.default_rng(seed)
    t = np.linspace(1.5 * np.pi, 4.5 * np.pi, n_arc)
    T, H = (a.ravel() for a in np.meshgrid(t, np.linspace(0, height, n_height), indexing="ij"))
    X = np.c_[T * np.cos(T), H, T * np.sin(T)] + rng.uniform(-0.05, 0.05, (len(T), 3))
    arc = 0.5 * (T * np.sqrt(1 + T ** 2) + np.arcsinh(T))
    return X, arc


def test_planar_points_mds_zero_stress():
    rng = np.random.default_rng(0)
    P = rng.normal(size=(30, 2))
    X = np.c_[P, np.zeros(30)] @ special_ortho_group.rvs(3, random_state=1)
    e = embed("MDS", X, 2, {"max_iter": 3000, "tol": 1e-12})
    assert stress(X, e.coords) < 1e-6


def test_isomap_unrolls_swiss_roll():
    X, arc = swiss_roll_grid()
    assert len(X) == 300
    Y = embed("ISOMAP", X, 2).coords
    rho = max(abs(scipy.stats.spearmanr(Y[:, j], arc)[0]) for j in range(2))
    assert rho > 0.9


def test_tsne_affinities():
    X = np.random.default_rng(0).normal(size=(60, 4))
    P = joint_p(X, 10.0)
    np.fill_diagonal(P, 0)
    assert np.allclose(P, P.T) and P.sum() == pytest.approx(1, abs=1e-12)
    C = conditional_p(squareform(pdist(X)) ** 2, 10.0)
    for row in C:
        nz = row[row > 0]
        assert 2 ** (-(nz * np.log2(nz)).sum()) == pytest.approx(10.0, rel=0.01)
    with pytest.raises(PerplexityTooLarge):
        joint_p(X[:5], 10.0)


def test_tsne_gradient_settles():
    # the start is a tiny random cloud, so the gradient is compared with its peak
    X = np.random.default_rng(0).normal(size=(60, 4))
    g = np.array([norm for norm, _ in embed("TSNE", X, 2, {"perplexity": 10.0}).trace])
    assert g[-1] < 1e-3 * g.max()


def test_stress_examples():
    X = np.random.default_rng(0).normal(size=(10, 3))
    assert stress(X, X) == 0
    assert stress(X, X @ special_ortho_group.rvs(3, random_state=2)) == pytest.approx(0, abs=1e-10)
    Y = np.random.default_rng(1).normal(size=(10, 3))
    total = 0.0
    for i in range(10):
        for j in range(10):
            if i != j:
                total += (np.linalg.norm(Y[i] - Y[j]) - np.linalg.norm(X[i] - X[j])) ** 2
    assert stress(X, Y) == pytest.approx(math.sqrt(total), abs=1e-10)
    with pytest.raises(ShapeMismatch):
        stress(X, Y[:5])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_smacof_monotone(seed):
    X = np.random.default_rng(seed).normal(size=(25, 5))
    _, trace = smacof(squareform(pdist(X)), 2, seed)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(trace, trace[1:]))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 8))
def test_lle_rows_sum_to_one(seed, k):
    X = np.random.default_rng(seed).normal(size=(30, 3))
    W = lle_weights(X, k).toarray()
    assert np.allclose(W.sum(axis=1), 1, atol=1e-9)
    assert np.all(np.diag(W) == 0)


def test_complete_graph_isomap_is_classical_mds():
    X = np.random.default_rng(0).normal(size=(20, 4))
    n = len(X)
    iso = embed("ISOMAP", X, 2, {"n_neighbors": n - 1}).coords
    cm = classical_mds(squareform(pdist(X)), 2)
    assert np.allclose(pdist(iso), pdist(cm), atol=1e-8)


def test_spectral_embedding_permutation_equivariant():
    X = np.random.default_rng(3).normal(size=(50, 3))
    perm = np.random.default_rng(4).permutation(50)
    a = embed("SPECTRAL", X, 2).coords
    b = embed("SPECTRAL", X[perm], 2).coords
    assert np.allclose(squareform(pdist(a))[np.ix_(perm, perm)], squareform(pdist(b)), atol=1e-8)


@pytest.mark.parametrize("algo", ALGOS)
def test_embed_contract(algo):
    X = np.random.default_rng(0).normal(size=(40, 5))
    params = {"TSNE": {"perplexity": 8.0, "n_iter": 300}}.get(algo)
    a = embed(algo, X, 2, params, seed=3)
    b = embed(algo, X, 2, params, seed=3)
    assert a.coords.shape == (40, 2) and np.all(np.isfinite(a.coords))
    assert np.array_equal(a.coords, b.coords)
    Z = a.transform(X[:5] + 1e-3)
    assert Z.shape == (5, 2) and np.all(np.isfinite(Z))


def test_embed_errors():
    X = np.zeros((8, 3))
    with pytest.raises(TooFewRows):
        embed("LLE", X, 2)
    with pytest.raises(ConfigError):
        embed("UMAP", X, 2)
    with pytest.raises(ConfigError):
        embed("MDS", X, 2, {"n_neighbors": 3})
