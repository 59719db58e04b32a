"""Clustering (k-means, Ward agglomerative, spectral, BIRCH) and validity metrics."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.linalg import eigh
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh

from .errors import (ConfigError, DisconnectedGraph, KOutOfRange, LengthMismatch, SingleCluster,
                     ZeroMean)
from .learn.knn import sq_distances

ALGOS = ("KMEANS", "AGGLOMERATIVE", "SPECTRAL", "BIRCH")


@dataclass
class ClusterResult:
    labels: np.ndarray
    k: int
    algo: str
    seed: int
    trace: list = field(default_factory=list)  # inertia per iteration, or merge heights
    inertia: float | None = None
    flags: list[str] = field(default_factory=list)


def _relabel(labels: np.ndarray) -> np.ndarray:
    """Renumber clusters in order of first appearance."""
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv].astype(np.int64)


# --- k-means ----------------------------------------------------------------

def kmeans_pp(X, k, rng) -> np.ndarray:
    n = len(X)
    centers = [int(rng.integers(n))]
    d2 = sq_distances(X, X[centers[0]][None])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            remaining = np.setdiff1d(np.arange(n), centers)
            nxt = int(rng.choice(remaining))
        centers.append(nxt)
        d2 = np.minimum(d2, sq_distances(X, X[nxt][None])[:, 0])
    return X[centers].copy()


def lloyd(X, centers, max_iter=300, tol=1e-4):
    """Returns (labels, centers, inertia trace).  The trace never increases."""
    tol_abs = tol * float(X.var(axis=0).mean())
    trace = []
    for _ in range(max_iter):
        d = sq_distances(X, centers)
        labels = d.argmin(axis=1)
        cost = d[np.arange(len(X)), labels]
        trace.append(float(cost.sum()))
        new = centers.copy()
        for c in range(len(centers)):
            members = labels == c
            if members.any():
                new[c] = X[members].mean(axis=0)
            else:
                # an empty cluster takes over the worst-served point
                far = int(cost.argmax())
                new[c] = X[far]
                labels[far] = c
                cost[far] = 0.0
        shift = float(((new - centers) ** 2).sum())
        centers = new
        if shift <= tol_abs:
            break
    d = sq_distances(X, centers)
    labels = d.argmin(axis=1)
    trace.append(float(d[np.arange(len(X)), labels].sum()))
    return labels, centers, trace


def kmeans(X, k, seed=0, n_init=10, max_iter=300, tol=1e-4) -> ClusterResult:
    X = np.asarray(X, float)
    best = None
    for child in np.random.SeedSequence(seed).spawn(n_init):
        rng = np.random.default_rng(child)
        labels, centers, trace = lloyd(X, kmeans_pp(X, k, rng), max_iter, tol)
        if best is None or trace[-1] < best[2][-1]:
            best = (labels, centers, trace)
    labels, centers, trace = best
    return ClusterResult(_relabel(labels), k, "KMEANS", seed, trace, trace[-1])


# --- agglomerative ------------------------------------------------------------

def cut_linkage(Z: np.ndarray, n: int, k: int) -> np.ndarray:
    """Apply the first n-k merges of a linkage matrix with union-find."""
    parent = list(range(2 * n - 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for step in range(n - k):
        a, b = int(Z[step, 0]), int(Z[step, 1])
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    return _relabel(np.array([find(i) for i in range(n)]))


def agglomerative(X, k, seed=0, method="ward") -> ClusterResult:
    X = np.asarray(X, float)
    if method not in ("ward", "average", "complete", "single"):
        raise ConfigError(f"unknown linkage {method!r}")
    Z = linkage(X, method=method)
    labels = cut_linkage(Z, len(X), k)
    return ClusterResult(labels, k, "AGGLOMERATIVE", seed, Z[:, 2].tolist())


# --- spectral -----------------------------------------------------------------

def knn_graph(X, n_neighbors=10) -> csr_matrix:
    """Symmetric binary k-NN adjacency (an edge if either endpoint lists the other)."""
    n = len(X)
    kk = min(n_neighbors, n - 1)
    rows, cols = [], []
    for s in range(0, n, 1024):
        d = sq_distances(X[s:s + 1024], X)
        d[np.arange(len(d)), np.arange(s, s + len(d))] = np.inf
        nn = np.argsort(d, axis=1, kind="stable")[:, :kk]
        rows.append(np.repeat(np.arange(s, s + len(d)), kk))
        cols.append(nn.ravel())
    r, c = np.concatenate(rows), np.concatenate(cols)
    A = csr_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    A = A.maximum(A.T)
    return A


def normalized_adjacency(A, seed=0, eps=1e-8):
    """D^-1/2 A D^-1/2, densified with an eps all-pairs term if A is disconnected."""
    n = A.shape[0]
    n_comp, _ = connected_components(A, directed=False)
    flags = []
    if n_comp > 1:
        warnings.warn(f"neighbour graph has {n_comp} components; adding {eps} connectivity",
                      DisconnectedGraph)
        A = A.toarray() + eps * (1 - np.eye(n))
        flags.append("disconnected")
    deg = np.asarray(A.sum(axis=1)).ravel()
    dinv = 1 / np.sqrt(deg)
    if isinstance(A, np.ndarray):
        S = A * dinv[:, None] * dinv[None, :]
    else:
        S = A.multiply(dinv[:, None]).multiply(dinv[None, :]).tocsr()
    return S, flags


def top_eigenvectors(S, k, seed=0) -> tuple[np.ndarray, np.ndarray]:
    """k largest eigenpairs of a symmetric matrix (ascending order of eigenvalue)."""
    n = S.shape[0]
    if isinstance(S, np.ndarray) or n <= 300:
        M = S if isinstance(S, np.ndarray) else S.toarray()
        w, V = eigh(M, subset_by_index=[n - k, n - 1])
    else:
        v0 = np.random.default_rng(seed).uniform(-1, 1, n)
        w, V = eigsh(S, k=k, which="LA", v0=v0, tol=1e-10)
        order = np.argsort(w)
        w, V = w[order], V[:, order]
    # fix eigenvector signs so results do not depend on the solver
    pivot = np.abs(V).argmax(axis=0)
    V = V * np.where(V[pivot, np.arange(V.shape[1])] < 0, -1.0, 1.0)
    return w, V


def spectral(X, k, seed=0, n_neighbors=10) -> ClusterResult:
    X = np.asarray(X, float)
    S, flags = normalized_adjacency(knn_graph(X, n_neighbors), seed)
    # smallest eigenvalues of I - S are the largest of S
    _, U = top_eigenvectors(S, k, seed)
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    U = U / np.where(norms > 0, norms, 1.0)
    inner = kmeans(U, k, seed)
    return ClusterResult(inner.labels, k, "SPECTRAL", seed, inner.trace, None, flags)


# --- BIRCH --------------------------------------------------------------------

class _CF:
    __slots__ = ("n", "ls", "ss", "child")

    def __init__(self, n, ls, ss, child=None):
        self.n, self.ls, self.ss, self.child = n, ls, ss, child

    @property
    def centroid(self):
        return self.ls / self.n

    def radius_with(self, x) -> float:
        n = self.n + 1
        ls = self.ls + x
        ss = self.ss + float(x @ x)
        return math.sqrt(max(ss / n - float(ls @ ls) / n ** 2, 0.0))

    def absorb(self, x):
        self.n += 1
        self.ls = self.ls + x
        self.ss += float(x @ x)

    def add(self, other):
        self.n += other.n
        self.ls = self.ls + other.ls
        self.ss += other.ss


class _Node:
    def __init__(self, leaf: bool):
        self.leaf = leaf
        self.entries: list[_CF] = []

    def summary(self) -> _CF:
        cf = _CF(0, np.zeros_like(self.entries[0].ls), 0.0, self)
        for e in self.entries:
            cf.add(e)
        return cf


class CFTree:
    def __init__(self, threshold=0.5, branching=50):
        self.threshold, self.branching = threshold, branching
        self.root = _Node(leaf=True)

    def _closest(self, node, x) -> int:
        cents = np.array([e.centroid for e in node.entries])
        return int(((cents - x) ** 2).sum(axis=1).argmin())

    def _split(self, node) -> tuple[_Node, _Node]:
        cents = np.array([e.centroid for e in node.entries])
        d = sq_distances(cents, cents)
        i, j = np.unravel_index(int(d.argmax()), d.shape)
        a, b = _Node(node.leaf), _Node(node.leaf)
        for idx, e in enumerate(node.entries):
            (a if d[idx, i] <= d[idx, j] else b).entries.append(e)
        return a, b

    def _insert(self, node, x):
        """Insert x below node; returns a pair of nodes if node had to split."""
        if node.leaf:
            if node.entries:
                c = self._closest(node, x)
                if node.entries[c].radius_with(x) <= self.threshold:
                    node.entries[c].absorb(x)
                    return None
            node.entries.append(_CF(1, x.copy(), float(x @ x)))
        else:
            c = self._closest(node, x)
            split = self._insert(node.entries[c].child, x)
            if split is None:
                node.entries[c].absorb(x)
                return None
            node.entries[c:c + 1] = [s.summary() for s in split]
        if len(node.entries) > self.branching:
            return self._split(node)
        return None

    def insert(self, x):
        split = self._insert(self.root, x)
        if split is not None:
            self.root = _Node(leaf=False)
            self.root.entries = [s.summary() for s in split]

    def leaves(self) -> list[_CF]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.leaf:
                out.extend(node.entries)
            else:
                stack.extend(e.child for e in reversed(node.entries))
        return out


def birch(X, k, seed=0, threshold=0.5, branching=50) -> ClusterResult:
    X = np.asarray(X, float)
    flags = []
    while True:
        tree = CFTree(threshold, branching)
        for x in X:
            tree.insert(x)
        subs = tree.leaves()
        if len(subs) >= k or threshold < 1e-12:
            break
        threshold /= 2
        flags.append(f"threshold halved to {threshold:g}")
    cents = np.array([s.centroid for s in subs])
    sub_labels = cut_linkage(linkage(cents, "ward"), len(cents), k) if len(cents) > k else np.arange(len(cents))
    nearest = sq_distances(X, cents).argmin(axis=1)
    labels = _relabel(sub_labels[nearest])
    k_eff = int(labels.max()) + 1
    if k_eff < k:
        flags.append(f"only {k_eff} clusters populated")
    return ClusterResult(labels, k_eff, "BIRCH", seed, [len(subs)], None, flags)


def cluster(algo: str, X, k: int, seed: int = 0, **params) -> ClusterResult:
    X = np.asarray(X, float)
    if not 2 <= k <= len(X):
        raise KOutOfRange(f"k={k} outside [2, {len(X)}]")
    fn = {"KMEANS": kmeans, "AGGLOMERATIVE": agglomerative, "SPECTRAL": spectral, "BIRCH": birch}.get(algo)
    if fn is None:
        raise ConfigError(f"unknown clustering algorithm {algo!r}; choose from {ALGOS}")
    return fn(X, k, seed, **params)


# --- validity metrics ---------------------------------------------------------

def _groups(labels):
    labels = np.asarray(labels)
    ids, inv = np.unique(labels, return_inverse=True)
    if len(ids) < 2:
        raise SingleCluster("metric needs at least two clusters")
    return ids, inv


def silhouette(X, labels) -> float:
    return float(silhouette_samples(X, labels).mean())


def silhouette_samples(X, labels) -> np.ndarray:
    X = np.asarray(X, float)
    ids, inv = _groups(labels)
    k, n = len(ids), len(X)
    sizes = np.bincount(inv, minlength=k).astype(float)
    onehot = np.eye(k)[inv]
    sums = np.zeros((n, k))
    for s in range(0, n, 1024):
        sums[s:s + 1024] = np.sqrt(sq_distances(X[s:s + 1024], X)) @ onehot
    own = sizes[inv]
    a = np.divide(sums[np.arange(n), inv], own - 1, out=np.zeros(n), where=own > 1)
    other = sums / sizes
    other[np.arange(n), inv] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.divide(b - a, denom, out=np.zeros(n), where=denom > 0)
    s[own == 1] = 0.0
    return s


def calinski_harabasz(X, labels) -> float:
    X = np.asarray(X, float)
    ids, inv = _groups(labels)
    n, k = len(X), len(ids)
    mean = X.mean(axis=0)
    between = within = 0.0
    for c in range(k):
        Xc = X[inv == c]
        mc = Xc.mean(axis=0)
        between += len(Xc) * float(((mc - mean) ** 2).sum())
        within += float(((Xc - mc) ** 2).sum())
    if within == 0:
        return 1.0
    return between * (n - k) / (within * (k - 1))


def davies_bouldin(X, labels) -> float:
    X = np.asarray(X, float)
    ids, inv = _groups(labels)
    k = len(ids)
    cents = np.array([X[inv == c].mean(axis=0) for c in range(k)])
    scatter = np.array([np.sqrt(((X[inv == c] - cents[c]) ** 2).sum(axis=1)).mean() for c in range(k)])
    M = np.sqrt(sq_distances(cents, cents))
    if scatter.max() == 0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        R = (scatter[:, None] + scatter[None, :]) / M
    R[np.arange(k), np.arange(k)] = -np.inf
    return float(R.max(axis=1).mean())


def cluster_quality(X, labels) -> dict[str, float]:
    return {"silhouette": silhouette(X, labels), "calinski_harabasz": calinski_harabasz(X, labels),
            "davies_bouldin": davies_bouldin(X, labels)}


def _pairs(v) -> int:
    return v * (v - 1) // 2


def adjusted_rand(y_true, labels) -> float:
    t, p = np.asarray(y_true), np.asarray(labels)
    if len(t) != len(p):
        raise LengthMismatch(f"{len(t)} vs {len(p)} labels")
    _, ti = np.unique(t, return_inverse=True)
    _, pi = np.unique(p, return_inverse=True)
    table = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    index = sum(_pairs(int(v)) for v in table.ravel())
    sa = sum(_pairs(int(v)) for v in table.sum(axis=1))
    sb = sum(_pairs(int(v)) for v in table.sum(axis=0))
    total = _pairs(len(t))
    if total == 0:
        return 1.0
    expected = Fraction(sa * sb, total)
    maximum = Fraction(sa + sb, 2)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


# --- robustness ---------------------------------------------------------------

@dataclass
class RobustnessStats:
    mean: float
    variance: float
    nvar: float


def robustness_stats(series) -> RobustnessStats:
    """Sample mean, sample variance and sd/|mean|."""
    x = np.asarray(series, float)
    if len(x) == 0:
        raise ConfigError("empty metric series")
    mean = float(x.mean())
    var = float(x.var(ddof=1)) if len(x) > 1 else 0.0
    if mean == 0:
        warnings.warn("mean is zero; normalised variance undefined", ZeroMean)
        return RobustnessStats(mean, var, float("nan"))
    return RobustnessStats(mean, var, math.sqrt(var) / abs(mean))
