"""Feature analysis: Pearson correlation, PCA by SVD, Shapiro-Wilk ranking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DegenerateMatrix, TooFewRows
from .fusion import FeatureMatrix

MAX_SHAPIRO_ROWS = 5000


def _unpack(X, names=None):
    if isinstance(X, FeatureMatrix):
        return np.asarray(X.values, float), X.names
    A = np.asarray(X, float)
    return A, list(names) if names is not None else [f"x{i}" for i in range(A.shape[1])]


@dataclass
class CorrelationMatrix:
    values: np.ndarray
    names: list[str]
    constant: list[str]  # columns with zero variance (off-diagonal set to 0)


def pearson_matrix(X, names=None) -> CorrelationMatrix:
    A, names = _unpack(X, names)
    if len(A) < 2:
        raise TooFewRows("correlation needs at least 2 rows")
    C = A - A.mean(axis=0)
    sd = np.sqrt((C ** 2).sum(axis=0))
    const = sd == 0
    Z = np.divide(C, sd, out=np.zeros_like(C), where=~const)
    R = np.clip(Z.T @ Z, -1.0, 1.0)
    np.fill_diagonal(R, 1.0)
    return CorrelationMatrix(R, names, [n for n, c in zip(names, const) if c])


@dataclass
class PcaModel:
    means: np.ndarray
    components: np.ndarray  # p x k, orthonormal columns
    explained_variance_ratio: np.ndarray
    singular_values: np.ndarray  # all of them, not only the retained k
    names: list[str]

    @property
    def k(self) -> int:
        return self.components.shape[1]

    def transform(self, X) -> np.ndarray:
        A, _ = _unpack(X)
        return (A - self.means) @ self.components

    def reconstruct(self, Z) -> np.ndarray:
        return Z @ self.components.T + self.means

    @property
    def total_variance(self) -> float:
        """Sum of squared centred entries of the fitted data."""
        return float((self.singular_values ** 2).sum())


def pca_fit_transform(X, variance_threshold: float = 0.95, names=None) -> tuple[PcaModel, np.ndarray]:
    A, names = _unpack(X, names)
    means = A.mean(axis=0)
    C = A - means
    _, s, Vt = np.linalg.svd(C, full_matrices=False)
    energy = s ** 2
    total = energy.sum()
    if total <= 0:
        raise DegenerateMatrix("all columns are constant")
    ratio = energy / total
    k = int(np.searchsorted(np.cumsum(ratio), variance_threshold - 1e-12) + 1)
    k = min(k, len(s))
    V = Vt[:k].T.copy()
    # deterministic sign: the largest-magnitude loading of each component is positive
    pivot = np.abs(V).argmax(axis=0)
    V *= np.where(V[pivot, np.arange(k)] < 0, -1.0, 1.0)
    model = PcaModel(means, V, ratio[:k], s, names)
    return model, C @ V


# --- Shapiro-Wilk (Royston 1992 approximation of the coefficients) ---------

_C1 = np.array([0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056])
_C2 = np.array([0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633])


def _poly(c, x):
    return sum(ci * x ** i for i, ci in enumerate(c))


def shapiro_coefficients(n: int) -> np.ndarray:
    if n < 3:
        raise TooFewRows("Shapiro-Wilk needs at least 3 values")
    if n == 3:
        r = np.sqrt(0.5)
        return np.array([-r, 0.0, r])
    i = np.arange(1, n + 1)
    m = ndtri((i - 0.375) / (n + 0.25))
    mm = float(m @ m)
    u = 1 / np.sqrt(n)
    a = m / np.sqrt(mm)
    an = a[-1] + _poly(_C1, u)
    if n > 5:
        an1 = a[-2] + _poly(_C2, u)
        phi = (mm - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an ** 2 - 2 * an1 ** 2)
        a = m / np.sqrt(phi)
        a[-1], a[-2], a[0], a[1] = an, an1, -an, -an1
    else:
        phi = (mm - 2 * m[-1] ** 2) / (1 - 2 * an ** 2)
        a = m / np.sqrt(phi)
        a[-1], a[0] = an, -an
    return a


def shapiro_w(x) -> float:
    """W statistic; 0 for a constant sample."""
    x = np.sort(np.asarray(x, float))
    ss = float(((x - x.mean()) ** 2).sum())
    if ss == 0:
        return 0.0
    a = shapiro_coefficients(len(x))
    return float(min((a @ x) ** 2 / ss, 1.0))


def shapiro_rank(X, names=None, seed: int = 0) -> dict[str, float]:
    """Per-column W score; columns longer than 5000 rows are subsampled."""
    A, names = _unpack(X, names)
    if len(A) < 3:
        raise TooFewRows("Shapiro-Wilk needs at least 3 rows")
    if len(A) > MAX_SHAPIRO_ROWS:
        rows = np.sort(np.random.default_rng(seed).choice(len(A), MAX_SHAPIRO_ROWS, replace=False))
        A = A[rows]
    return {n: shapiro_w(A[:, j]) for j, n in enumerate(names)}


def select_features(scores: dict[str, float], cutoff: float = 0.7) -> list[str]:
    # constant columns score exactly 0 and never qualify
    return [n for n, w in scores.items() if w > 0 and w >= cutoff]
