"""CART decision tree and random forest.

Splits take the form ``x[f] <= v`` where ``v`` is an observed training value
(the left side of the gap), so any strictly increasing transform of a feature
maps every split to an equivalent one and predictions do not change.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _score(counts, n, entropy):
    # larger is better; equals minus the size-weighted impurity up to a constant
    acc = 0.0
    for c in counts:
        if entropy:
            if c > 0:
                acc += c * np.log(c / n)
        else:
            acc += c * c
    return acc if entropy else acc / n


@njit(cache=True)
def _best_split(X, idx, y, n_classes, f, total, min_leaf, entropy):
    """Best ``x[f] <= v`` split of the rows ``idx``: (score, v); score -inf if none."""
    m = idx.shape[0]
    xs = np.empty(m)
    for i in range(m):
        xs[i] = X[idx[i], f]
    order = np.argsort(xs)
    left = np.zeros(n_classes)
    right = np.empty(n_classes)
    best, best_v = -np.inf, 0.0
    for i in range(m - 1):
        left[y[idx[order[i]]]] += 1.0
        a, b = xs[order[i]], xs[order[i + 1]]
        n_left = i + 1
        if a < b and n_left >= min_leaf and m - n_left >= min_leaf:
            for c in range(n_classes):
                right[c] = total[c] - left[c]
            s = _score(left, float(n_left), entropy) + _score(right, float(m - n_left), entropy)
            if s > best:
                best, best_v = s, a
    return best, best_v


@njit(cache=True)
def _grow(X, y, n_classes, max_depth, min_split, min_leaf, max_features, entropy, keys):
    n, p = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, n_classes))
    depth = np.zeros(cap, np.int64)
    rows = np.arange(n)
    # node k owns rows[start[k]:stop[k]]
    start = np.zeros(cap, np.int64)
    stop = np.zeros(cap, np.int64)
    stop[0] = n
    n_nodes = 1
    stack = [0]
    while len(stack) > 0:
        node = stack.pop()
        idx = rows[start[node]:stop[node]]
        total = np.zeros(n_classes)
        for i in idx:
            total[y[i]] += 1.0
        value[node] = total / idx.shape[0]
        present = 0
        for c in range(n_classes):
            if total[c] > 0:
                present += 1
        if present < 2 or idx.shape[0] < min_split or (max_depth >= 0 and depth[node] >= max_depth):
            continue
        if max_features >= p:
            order = np.arange(p)
        else:
            order = np.argsort(keys[node])
        best_s, best_f, best_v = -np.inf, -1, 0.0
        seen = 0
        for f in order:
            lo, hi = np.inf, -np.inf
            for i in idx:
                v = X[i, f]
                lo = min(lo, v)
                hi = max(hi, v)
            if lo == hi:
                continue
            seen += 1
            s, v = _best_split(X, idx, y, n_classes, f, total, min_leaf, entropy)
            if s > best_s or (s == best_s and s > -np.inf and f < best_f):
                best_s, best_f, best_v = s, f, v
            if seen >= max_features:
                break
        if best_f < 0:
            continue
        # partition rows in place, keeping relative order on each side
        lo_part = idx[X[idx, best_f] <= best_v]
        hi_part = idx[X[idx, best_f] > best_v]
        s0 = start[node]
        rows[s0:s0 + lo_part.shape[0]] = lo_part
        rows[s0 + lo_part.shape[0]:stop[node]] = hi_part
        feature[node], threshold[node] = best_f, best_v
        l, r = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = l, r
        start[l], stop[l] = s0, s0 + lo_part.shape[0]
        start[r], stop[r] = s0 + lo_part.shape[0], stop[node]
        depth[l] = depth[r] = depth[node] + 1
        stack.append(r)
        stack.append(l)
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes])


class TreeArrays:
    """Flat node storage; leaves have feature -1."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r, nd = rows[inner], node[inner]
            go_left = X[r, f[inner]] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def proba(self, X):
        return self.value[self.apply(X)]

    @property
    def depth(self) -> int:
        d = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def to_state(self):
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_state(cls, s):
        return cls(s["feature"], s["threshold"], s["left"], s["right"], s["value"])


def grow_tree(X, y, n_classes, *, criterion="gini", max_depth=None, min_samples_split=2,
              min_samples_leaf=1, max_features=None, rng=None) -> TreeArrays:
    n, p = X.shape
    mf = p if max_features is None else min(int(max_features), p)
    # per-node random keys decide the order in which features are examined
    keys = rng.random((2 * n + 1, p)) if mf < p else np.zeros((1, p))
    arrays = _grow(np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(y, dtype=np.int64),
                   n_classes, -1 if max_depth is None else int(max_depth), int(min_samples_split),
                   int(min_samples_leaf), mf, criterion == "entropy", keys)
    return TreeArrays(*arrays)


def resolve_max_features(spec, p: int):
    if spec is None:
        return None
    if spec == "sqrt":
        return max(1, int(math.sqrt(p)))
    if spec == "log2":
        return max(1, int(math.log2(p)))
    if isinstance(spec, float):
        return max(1, int(spec * p))
    return int(spec)


class DecisionTree:
    def __init__(self, criterion="gini", max_depth=None, min_samples_split=2, min_samples_leaf=1,
                 max_features=None):
        self.params = dict(criterion=criterion, max_depth=max_depth, min_samples_split=min_samples_split,
                           min_samples_leaf=min_samples_leaf, max_features=max_features)
        self.tree = None

    def fit(self, X, y, n_classes, rng):
        p = dict(self.params)
        p["max_features"] = resolve_max_features(p["max_features"], X.shape[1])
        self.tree = grow_tree(X, y, n_classes, rng=rng, **p)
        return self

    def predict_proba(self, X):
        return self.tree.proba(X)

    def to_state(self):
        return {"tree": self.tree.to_state()}

    def load_state(self, s):
        self.tree = TreeArrays.from_state(s["tree"])


class RandomForest:
    def __init__(self, n_estimators=100, criterion="gini", max_depth=None, min_samples_split=2,
                 min_samples_leaf=1, max_features="sqrt", bootstrap=True):
        self.params = dict(n_estimators=n_estimators, criterion=criterion, max_depth=max_depth,
                           min_samples_split=min_samples_split, min_samples_leaf=min_samples_leaf,
                           max_features=max_features, bootstrap=bootstrap)
        self.trees: list[TreeArrays] = []

    def fit(self, X, y, n_classes, rng):
        p = self.params
        mf = resolve_max_features(p["max_features"], X.shape[1])
        n = len(X)
        self.trees = []
        for seed in rng.integers(0, 2**63, size=p["n_estimators"]):
            r = np.random.default_rng(int(seed))
            idx = r.integers(0, n, size=n) if p["bootstrap"] else np.arange(n)
            self.trees.append(grow_tree(X[idx], y[idx], n_classes, criterion=p["criterion"],
                                        max_depth=p["max_depth"], min_samples_split=p["min_samples_split"],
                                        min_samples_leaf=p["min_samples_leaf"], max_features=mf, rng=r))
        return self

    def predict_proba(self, X):
        return np.mean([t.proba(X) for t in self.trees], axis=0)

    def to_state(self):
        return {"trees": [t.to_state() for t in self.trees]}

    def load_state(self, s):
        self.trees = [TreeArrays.from_state(t) for t in s["trees"]]
