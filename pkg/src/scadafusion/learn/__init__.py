"""Supervised classifiers with a shared probability interface, metrics and tuning."""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import (ColumnMismatch, ConfigError, FoldTooSmall, LengthMismatch, NonFiniteInput,
                      SingleClassTraining)
from ..fusion import FeatureMatrix
from .bayes import BernoulliNB, GaussianNB
from .knn import KNN
from .linear import LinearSVC, LogisticRegression
from .mlp import MLP
from .tree import DecisionTree, RandomForest

ESTIMATORS = {
    "SVC": LinearSVC,
    "LR": LogisticRegression,
    "GNB": GaussianNB,
    "BNB": BernoulliNB,
    "DT": DecisionTree,
    "RF": RandomForest,
    "MLP": MLP,
    "KNN": KNN,
}
ALGOS = tuple(ESTIMATORS)
MODEL_FORMAT = 1


def default_params(algo: str) -> dict:
    return dict(ESTIMATORS[algo]().params)


@dataclass(frozen=True)
class ClassifierSpec:
    algo: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.algo not in ESTIMATORS:
            raise ConfigError(f"unknown classifier {self.algo!r}; choose from {ALGOS}")
        unknown = set(self.params) - set(default_params(self.algo))
        if unknown:
            raise ConfigError(f"{self.algo}: unknown hyperparameters {sorted(unknown)}")

    def resolved(self) -> dict:
        p = default_params(self.algo)
        p.update(self.params)
        return p

    def with_params(self, **kw) -> "ClassifierSpec":
        p = dict(self.params)
        p.update(kw)
        return ClassifierSpec(self.algo, p, self.seed)


def fingerprint(names) -> str:
    return hashlib.sha256("\x1f".join(names).encode()).hexdigest()[:16]


def _as_matrix(X) -> tuple[np.ndarray, list[str]]:
    if isinstance(X, FeatureMatrix):
        return X.values, X.names
    A = np.asarray(X, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    return A, [f"x{i}" for i in range(A.shape[1])]


def _labels(y) -> np.ndarray:
    return np.asarray(getattr(y, "labels", y))


class Model:
    """A fitted classifier bound to its class list and training columns."""

    def __init__(self, spec: ClassifierSpec, classes, columns, estimator):
        self.spec = spec
        self.classes = list(classes)
        self.columns = list(columns)
        self.fingerprint = fingerprint(self.columns)
        self._est = estimator

    @property
    def algo(self) -> str:
        return self.spec.algo

    def _check(self, X) -> np.ndarray:
        A, names = _as_matrix(X)
        if isinstance(X, FeatureMatrix):
            if fingerprint(names) != self.fingerprint:
                raise ColumnMismatch("feature columns differ from the training columns")
        elif A.shape[1] != len(self.columns):
            raise ColumnMismatch(f"expected {len(self.columns)} columns, got {A.shape[1]}")
        if not np.isfinite(A).all():
            raise NonFiniteInput("non-finite feature values")
        return A

    def predict_proba(self, X) -> np.ndarray:
        P = self._est.predict_proba(self._check(X))
        return P / P.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum, and classes are sorted ascending
        return np.asarray(self.classes)[np.argmax(self.predict_proba(X), axis=1)]

    def to_json(self) -> str:
        return json.dumps({
            "format": MODEL_FORMAT,
            "algo": self.spec.algo,
            "params": self.spec.resolved(),
            "seed": self.spec.seed,
            "classes": [c.item() if hasattr(c, "item") else c for c in self.classes],
            "columns": self.columns,
            "fingerprint": self.fingerprint,
            "state": self._est.to_state(),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Model":
        d = json.loads(text)
        if d.get("format") != MODEL_FORMAT:
            raise ConfigError(f"unsupported model format {d.get('format')!r}")
        spec = ClassifierSpec(d["algo"], d["params"], d["seed"])
        est = ESTIMATORS[spec.algo](**spec.resolved())
        est.load_state(d["state"])
        return cls(spec, d["classes"], d["columns"], est)


def train(spec: ClassifierSpec, X, y) -> Model:
    A, names = _as_matrix(X)
    labels = _labels(y)
    if len(A) != len(labels):
        raise LengthMismatch(f"{len(A)} rows but {len(labels)} labels")
    if not np.isfinite(A).all():
        raise NonFiniteInput("non-finite feature values")
    classes, yi = np.unique(labels, return_inverse=True)
    if len(classes) < 2:
        raise SingleClassTraining("training labels contain a single class")
    est = ESTIMATORS[spec.algo](**spec.resolved())
    est.fit(A, yi.astype(np.int64), len(classes), np.random.default_rng(spec.seed))
    return Model(spec, classes.tolist(), names, est)


def predict_proba(model: Model, X) -> np.ndarray:
    return model.predict_proba(X)


def predict(model: Model, X) -> np.ndarray:
    return model.predict(X)


# --- metrics ----------------------------------------------------------------

@dataclass
class Metrics:
    classes: list
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray  # rows: truth, columns: prediction

    def _weighted(self, v):
        total = self.support.sum()
        return float(v @ self.support / total) if total else 0.0

    @property
    def weighted_precision(self) -> float:
        return self._weighted(self.precision)

    @property
    def weighted_recall(self) -> float:
        return self._weighted(self.recall)

    @property
    def weighted_f1(self) -> float:
        return self._weighted(self.f1)

    def row(self) -> tuple[float, float, float]:
        """(F1, Rec., Prec.) in table order."""
        return self.weighted_f1, self.weighted_recall, self.weighted_precision


def evaluate(y_true, y_pred, classes=None) -> Metrics:
    t, p = _labels(y_true), _labels(y_pred)
    if len(t) != len(p):
        raise LengthMismatch(f"{len(t)} true labels vs {len(p)} predictions")
    classes = sorted(set(t.tolist()) | set(p.tolist())) if classes is None else list(classes)
    index = {c: i for i, c in enumerate(classes)}
    k = len(classes)
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.array([index[v] for v in t.tolist()], dtype=np.int64),
                   np.array([index[v] for v in p.tolist()], dtype=np.int64)), 1)
    tp = np.diag(cm).astype(float)
    pred_pos, support = cm.sum(axis=0), cm.sum(axis=1)
    prec = np.divide(tp, pred_pos, out=np.zeros(k), where=pred_pos > 0)
    rec = np.divide(tp, support, out=np.zeros(k), where=support > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros(k), where=denom > 0)
    return Metrics(classes, prec, rec, f1, support, cm)


# --- splitting and tuning ---------------------------------------------------

def stratified_split(y, test_fraction=0.3, seed=0) -> tuple[np.ndarray, np.ndarray]:
    labels = _labels(y)
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        n_test = int(round(test_fraction * len(idx)))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def stratified_folds(y, folds: int, seed=0) -> np.ndarray:
    labels = _labels(y)
    if folds < 2:
        raise FoldTooSmall("need at least 2 folds")
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < folds:
        raise FoldTooSmall(f"smallest class has {counts.min()} rows, fewer than {folds} folds")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for c in classes:
        idx = rng.permutation(np.flatnonzero(labels == c))
        fold[idx] = (np.arange(len(idx)) + offset) % folds
        offset += len(idx)
    return fold


def grid_points(grid: dict) -> list[dict]:
    if not grid:
        raise ConfigError("empty hyperparameter grid")
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def cross_val_f1(spec: ClassifierSpec, X, y, folds=5) -> float:
    A, names = _as_matrix(X)
    labels = _labels(y)
    fold = stratified_folds(labels, folds, spec.seed)
    scores = []
    for f in range(folds):
        tr, te = fold != f, fold == f
        m = train(spec, FeatureMatrix(A[tr], _infos(names)), labels[tr])
        scores.append(evaluate(labels[te], m.predict(A[te])).weighted_f1)
    return float(np.mean(scores))


def _infos(names):
    from ..fusion import ColumnInfo
    return [ColumnInfo(n, "numeric", None, None) for n in names]


def grid_search(spec: ClassifierSpec, X, y, grid: dict, folds=5) -> tuple[dict, float]:
    """Best grid point by stratified k-fold weighted F1; ties keep the earliest point."""
    best, best_score = None, -np.inf
    for point in grid_points(grid):
        score = cross_val_f1(spec.with_params(**point), X, y, folds)
        if score > best_score:
            best, best_score = point, score
    return best, float(best_score)
