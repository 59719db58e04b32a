"""Two-view co-training over the cyber and physical feature blocks.

Each loop both view classifiers are retrained on the shared labeled set, each
picks its most confident unlabeled row for every class, and the picks move to
the labeled set with the picking classifier's predicted label.  Prediction
adds the two views' probability vectors and renormalises.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ColumnMismatch, ColumnNotFound, SingleClassSeed
from .features import CYBER_COLUMNS, PHYSICAL_COLUMNS
from .fusion import FeatureMatrix
from .learn import ClassifierSpec, Model, train


@dataclass(frozen=True)
class ViewSplit:
    cyber: tuple[str, ...] = CYBER_COLUMNS
    physical: tuple[str, ...] = PHYSICAL_COLUMNS

    def __post_init__(self):
        overlap = set(self.cyber) & set(self.physical)
        if overlap:
            raise ColumnNotFound(f"views overlap on {sorted(overlap)}")

    @classmethod
    def at(cls, names, index: int) -> "ViewSplit":
        """First ``index`` columns form the cyber view, the rest the physical view."""
        names = list(names)
        return cls(tuple(names[:index]), tuple(names[index:]))


def split_views(X: FeatureMatrix, split: ViewSplit) -> tuple[FeatureMatrix, FeatureMatrix]:
    names = set(X.names)
    missing = [c for c in (*split.cyber, *split.physical) if c not in names]
    if missing:
        raise ColumnNotFound(f"columns not in matrix: {missing}")
    uncovered = names - set(split.cyber) - set(split.physical)
    if uncovered:
        raise ColumnNotFound(f"columns outside both views: {sorted(uncovered)}")
    return X.select(split.cyber), X.select(split.physical)


@dataclass
class Pick:
    row: int  # index into the original unlabeled matrix
    label: object
    confidence: float
    view: str


@dataclass
class CoModel:
    cyber: Model
    physical: Model
    split: ViewSplit
    classes: list
    pool_sizes: list[int] = field(default_factory=list)  # pool size before each loop, then final
    picks: list[list[Pick]] = field(default_factory=list)

    @property
    def loops(self) -> int:
        return len(self.picks)


def _select(model: Model, X: np.ndarray, pool: list[int], view: str) -> list[Pick]:
    P = model.predict_proba(X[pool])
    chosen = []
    taken = set()
    for ci in range(P.shape[1]):
        col = np.where([i in taken for i in range(len(pool))], -np.inf, P[:, ci])
        j = int(np.argmax(col))  # first maximum: lowest pool position
        if not np.isfinite(col[j]):
            break
        taken.add(j)
        row = P[j]
        chosen.append(Pick(pool[j], model.classes[int(np.argmax(row))], float(row.max()), view))
    return chosen


def _merge(picks: list[Pick]) -> list[Pick]:
    """One label per row: higher confidence wins, ties keep the earlier (cyber) pick."""
    out: dict[int, Pick] = {}
    for p in picks:
        cur = out.get(p.row)
        if cur is None or p.confidence > cur.confidence:
            out[p.row] = p
    return [out[r] for r in sorted(out)]


def cotrain_fit(base: ClassifierSpec, labeled: tuple[FeatureMatrix, np.ndarray], unlabeled: FeatureMatrix,
                split: ViewSplit | None = None, max_loops: int = 50) -> CoModel:
    split = split or ViewSplit()
    X_lab, y_lab = labeled
    y_lab = np.asarray(getattr(y_lab, "labels", y_lab))
    if len(np.unique(y_lab)) < 2:
        raise SingleClassSeed("labeled seed set must contain at least two classes")
    lc, lp = split_views(X_lab, split)
    uc, up = split_views(unlabeled, split)
    Xc, Xp = lc.values.copy(), lp.values.copy()
    labels = list(y_lab.tolist())
    pool = list(range(len(unlabeled.values)))
    cy_cols, ph_cols = lc.columns, lp.columns
    sizes, history = [], []

    def fit():
        return (train(base, FeatureMatrix(Xc, cy_cols), np.asarray(labels)),
                train(base, FeatureMatrix(Xp, ph_cols), np.asarray(labels)))

    mc, mp = fit()
    for _ in range(max_loops):
        if not pool:
            break
        sizes.append(len(pool))
        picks = _merge(_select(mc, uc.values, pool, "cyber") + _select(mp, up.values, pool, "physical"))
        rows = [p.row for p in picks]
        Xc = np.vstack([Xc, uc.values[rows]])
        Xp = np.vstack([Xp, up.values[rows]])
        labels.extend(p.label for p in picks)
        chosen = set(rows)
        pool = [r for r in pool if r not in chosen]
        history.append(picks)
        mc, mp = fit()
    sizes.append(len(pool))
    return CoModel(mc, mp, split, list(mc.classes), sizes, history)


def fuse_scores(p_cyber: np.ndarray, p_physical: np.ndarray) -> np.ndarray:
    s = np.asarray(p_cyber, float) + np.asarray(p_physical, float)
    return s / s.sum(axis=1, keepdims=True)


def cotrain_predict(m: CoModel, X: FeatureMatrix) -> tuple[np.ndarray, np.ndarray]:
    try:
        xc, xp = X.select(m.split.cyber), X.select(m.split.physical)
    except ValueError as exc:
        raise ColumnMismatch(f"matrix lacks view columns: {exc}") from None
    P = fuse_scores(m.cyber.predict_proba(xc), m.physical.predict_proba(xp))
    return np.asarray(m.classes)[np.argmax(P, axis=1)], P


def labeled_unlabeled_split(n: int, ratio=(1, 2), seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Random split of row indices into labeled and unlabeled parts at ``ratio``."""
    a, b = ratio
    perm = np.random.default_rng(seed).permutation(n)
    n_lab = int(round(n * a / (a + b)))
    return np.sort(perm[:n_lab]), np.sort(perm[n_lab:])
