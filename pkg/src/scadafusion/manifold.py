"""Nonlinear embeddings (LLE, Laplacian eigenmaps, SMACOF MDS, Isomap, exact t-SNE)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, solve
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import (ConfigError, DisconnectedGraph, PerplexityTooLarge, ShapeMismatch,
                     TooFewRows)

ALGOS = ("LLE", "SPECTRAL", "MDS", "ISOMAP", "TSNE")
DEFAULTS = {
    "LLE": {"n_neighbors": 10, "reg": 1e-3},
    "SPECTRAL": {"n_neighbors": 10},
    "MDS": {"max_iter": 300, "tol": 1e-6, "n_init": 4},
    "ISOMAP": {"n_neighbors": 10},
    "TSNE": {"perplexity": 30.0, "n_iter": 1000, "exaggeration": 12.0, "exaggeration_iter": 250,
             "learning_rate": 200.0},
}


@dataclass
class Embedding:
    coords: np.ndarray
    algo: str
    params: dict
    seed: int
    X_fit: np.ndarray = field(repr=False)
    trace: list = field(default_factory=list, repr=False)
    flags: list[str] = field(default_factory=list)

    def transform(self, X_new, n_neighbors: int = 10, reg: float = 1e-3) -> np.ndarray:
        """Place unseen rows by barycentric interpolation over their training neighbours."""
        X_new = np.asarray(X_new, float)
        k = min(n_neighbors, len(self.X_fit))
        D = cdist(X_new, self.X_fit, "sqeuclidean")
        nn = np.argsort(D, axis=1, kind="stable")[:, :k]
        out = np.empty((len(X_new), self.coords.shape[1]))
        for i, (x, nb) in enumerate(zip(X_new, nn)):
            out[i] = barycentric_weights(x, self.X_fit[nb], reg) @ self.coords[nb]
        return out


# --- neighbourhoods ---------------------------------------------------------

def knn_indices(D2: np.ndarray, k: int) -> np.ndarray:
    D2 = D2.copy()
    np.fill_diagonal(D2, np.inf)
    return np.argsort(D2, axis=1, kind="stable")[:, :k]


def bridge_components(adj: dict[int, set], D: np.ndarray, flags: list) -> list[tuple[int, int]]:
    """Join components of a neighbour graph with shortest inter-component edges."""
    n = len(D)
    added = []
    while True:
        rows = [i for i in adj for _ in adj[i]]
        cols = [j for i in adj for j in adj[i]]
        g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        n_comp, comp = connected_components(g, directed=False)
        if n_comp == 1:
            break
        mask = comp[:, None] == comp[None, :]
        i, j = np.unravel_index(int(np.where(mask, np.inf, D).argmin()), D.shape)
        adj[i].add(j)
        adj[j].add(i)
        added.append((int(i), int(j)))
    if added:
        warnings.warn(f"neighbour graph disconnected; added {len(added)} bridging edge(s)", DisconnectedGraph)
        flags.append(f"bridged {len(added)}")
    return added


def neighbour_graph(X, k, flags) -> tuple[dict[int, set], np.ndarray]:
    D = squareform(pdist(X))
    nn = knn_indices(D ** 2, k)
    adj = {i: set() for i in range(len(X))}
    for i, row in enumerate(nn):
        for j in row:
            adj[i].add(int(j))
            adj[int(j)].add(i)
    bridge_components(adj, D, flags)
    return adj, D


# --- LLE ----------------------------------------------------------------------

def barycentric_weights(x, neighbours, reg=1e-3) -> np.ndarray:
    Z = neighbours - x
    C = Z @ Z.T
    tr = np.trace(C)
    C = C + (reg * tr if tr > 0 else reg) * np.eye(len(C))
    w = solve(C, np.ones(len(C)), assume_a="pos")
    return w / w.sum()


def lle_weights(X, n_neighbors=10, reg=1e-3, flags=None) -> csr_matrix:
    flags = [] if flags is None else flags
    D2 = cdist(X, X, "sqeuclidean")
    nn = knn_indices(D2, n_neighbors)
    neigh = [list(map(int, row)) for row in nn]
    adj = {i: set(r) for i, r in enumerate(neigh)}
    for j, r in enumerate(neigh):
        for i in r:
            adj[i].add(j)
    for i, j in bridge_components(adj, np.sqrt(D2), flags):
        for a, b in ((i, j), (j, i)):
            if b not in neigh[a]:
                neigh[a].append(b)
    rows, cols, vals = [], [], []
    for i, nb in enumerate(neigh):
        w = barycentric_weights(X[i], X[nb], reg)
        rows += [i] * len(nb)
        cols += nb
        vals += w.tolist()
    return csr_matrix((vals, (rows, cols)), shape=(len(X), len(X)))


def lle(X, d, seed=0, n_neighbors=10, reg=1e-3):
    flags = []
    W = lle_weights(X, n_neighbors, reg, flags).toarray()
    IW = np.eye(len(X)) - W
    M = IW.T @ IW
    _, V = eigh(M, subset_by_index=[0, d])
    return V[:, 1:], flags, []


# --- Laplacian eigenmaps --------------------------------------------------------

def spectral_embedding(X, d, seed=0, n_neighbors=10):
    flags = []
    adj, _ = neighbour_graph(X, n_neighbors, flags)
    n = len(X)
    A = np.zeros((n, n))
    for i, nb in adj.items():
        A[i, list(nb)] = 1.0
    deg = A.sum(axis=1)
    dinv = 1 / np.sqrt(deg)
    L = np.eye(n) - A * dinv[:, None] * dinv[None, :]
    _, V = eigh(L, subset_by_index=[0, d])
    Y = V[:, 1:] * dinv[:, None]
    pivot = np.abs(Y).argmax(axis=0)
    Y *= np.where(Y[pivot, np.arange(d)] < 0, -1.0, 1.0)
    return Y, flags, []


# --- metric MDS -----------------------------------------------------------------

def raw_stress(D, Y) -> float:
    """Half the ordered-pair sum: sum over i<j of (|y_i - y_j| - D_ij)^2."""
    return float(((pdist(Y) - squareform(D, checks=False)) ** 2).sum())


def smacof(D, d, seed=0, max_iter=300, tol=1e-6, init=None):
    n = len(D)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    Y = rng.uniform(size=(n, d)) if init is None else np.asarray(init, float).copy()
    Y -= Y.mean(axis=0)
    trace = [raw_stress(D, Y)]
    for _ in range(max_iter):
        Dy = squareform(pdist(Y))
        ratio = np.divide(D, Dy, out=np.zeros_like(D), where=Dy > 0)
        B = -ratio
        B[np.arange(n), np.arange(n)] = ratio.sum(axis=1)
        Y = B @ Y / n
        s = raw_stress(D, Y)
        prev = trace[-1]
        trace.append(s)
        if prev == 0 or (prev - s) / prev < tol:
            break
    return Y, trace


def mds(X, d, seed=0, max_iter=300, tol=1e-6, n_init=4):
    """Best of ``n_init`` seeded random starts; the trace is that of the winning start."""
    D = squareform(pdist(X))
    runs = [smacof(D, d, np.random.default_rng(child), max_iter, tol)
            for child in np.random.SeedSequence(seed).spawn(n_init)]
    Y, trace = min(runs, key=lambda r: r[1][-1])
    return Y, [], trace


# --- Isomap -----------------------------------------------------------------------

def classical_mds(D, d) -> np.ndarray:
    n = len(D)
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (D ** 2) @ J
    w, V = eigh(B, subset_by_index=[n - d, n - 1])
    w, V = w[::-1], V[:, ::-1]
    Y = V * np.sqrt(np.maximum(w, 0))
    pivot = np.abs(Y).argmax(axis=0)
    return Y * np.where(Y[pivot, np.arange(d)] < 0, -1.0, 1.0)


def geodesic_distances(X, n_neighbors=10, flags=None) -> np.ndarray:
    flags = [] if flags is None else flags
    adj, D = neighbour_graph(X, n_neighbors, flags)
    n = len(X)
    rows = [i for i in adj for _ in adj[i]]
    cols = [j for i in adj for j in adj[i]]
    G = csr_matrix((D[rows, cols], (rows, cols)), shape=(n, n))
    return shortest_path(G, method="D", directed=False)


def isomap(X, d, seed=0, n_neighbors=10):
    flags = []
    G = geodesic_distances(X, n_neighbors, flags)
    return classical_mds(G, d), flags, []


# --- t-SNE ------------------------------------------------------------------------

def conditional_p(D2: np.ndarray, perplexity: float, tol=1e-5, max_iter=200) -> np.ndarray:
    """Row-stochastic Gaussian affinities whose entropy matches log(perplexity)."""
    n = len(D2)
    target = math.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        d = np.delete(D2[i], i)
        d = d - d.min()
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_iter):
            p = np.exp(-d * beta)
            s = p.sum()
            H = math.log(s) + beta * float(d @ p) / s
            if abs(H - target) < tol:
                break
            if H > target:
                lo = beta
                beta = beta * 2 if hi == np.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = (beta + lo) / 2
        P[i, np.arange(n) != i] = p / s
    return P


def joint_p(X, perplexity) -> np.ndarray:
    n = len(X)
    if perplexity >= n - 1:
        raise PerplexityTooLarge(f"perplexity {perplexity} needs more than {n} rows")
    P = conditional_p(cdist(X, X, "sqeuclidean"), perplexity)
    P = (P + P.T) / (2 * n)
    return np.maximum(P, 1e-300)


def tsne_gradient(P, Y):
    num = 1 / (1 + cdist(Y, Y, "sqeuclidean"))
    np.fill_diagonal(num, 0)
    Q = np.maximum(num / num.sum(), 1e-300)
    PQ = (P - Q) * num
    grad = 4 * ((np.diag(PQ.sum(axis=1)) - PQ) @ Y)
    mask = P > 0
    kl = float((P[mask] * np.log(P[mask] / Q[mask])).sum())
    return grad, kl


def tsne(X, d, seed=0, perplexity=30.0, n_iter=1000, exaggeration=12.0, exaggeration_iter=250,
         learning_rate=200.0):
    P = joint_p(X, perplexity)
    np.fill_diagonal(P, 0)
    rng = np.random.default_rng(seed)
    Y = 1e-4 * rng.standard_normal((len(X), d))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    trace = []
    for it in range(n_iter):
        early = it < exaggeration_iter
        grad, kl = tsne_gradient(P * exaggeration if early else P, Y)
        trace.append((float(np.linalg.norm(grad)), kl))
        momentum = 0.5 if early else 0.8
        same = np.sign(grad) == np.sign(update)
        gains = np.maximum(np.where(same, gains * 0.8, gains + 0.2), 0.01)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
    return Y, [], trace


# --- front door ---------------------------------------------------------------------

_IMPL = {"LLE": lle, "SPECTRAL": spectral_embedding, "MDS": mds, "ISOMAP": isomap, "TSNE": tsne}


def embed(algo: str, X, d: int = 2, params: dict | None = None, seed: int = 0) -> Embedding:
    if algo not in _IMPL:
        raise ConfigError(f"unknown embedding {algo!r}; choose from {ALGOS}")
    X = np.asarray(X, float)
    p = dict(DEFAULTS[algo])
    unknown = set(params or {}) - set(p)
    if unknown:
        raise ConfigError(f"{algo}: unknown parameters {sorted(unknown)}")
    p.update(params or {})
    if d < 1:
        raise ConfigError("target dimension must be >= 1")
    k = p.get("n_neighbors")
    if k is not None and len(X) <= k:
        raise TooFewRows(f"{algo} needs more than {k} rows")
    if len(X) <= d:
        raise TooFewRows("need more rows than target dimensions")
    coords, flags, trace = _IMPL[algo](X, d, seed, **p)
    return Embedding(np.asarray(coords), algo, p, seed, X.copy(), trace, flags)


def stress(X_high, Y_low) -> float:
    """Square root of the squared distance mismatch summed over ordered pairs."""
    X_high, Y_low = np.asarray(X_high, float), np.asarray(Y_low, float)
    if len(X_high) != len(Y_low):
        raise ShapeMismatch(f"{len(X_high)} vs {len(Y_low)} rows")
    return math.sqrt(2 * float(((pdist(Y_low) - pdist(X_high)) ** 2).sum()))
