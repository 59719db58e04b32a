"""Logistic regression and a linear SVM with sigmoid-calibrated outputs."""
from __future__ import annotations

import numpy as np


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class LogisticRegression:
    """Multinomial logistic regression by full-batch gradient descent."""

    def __init__(self, learning_rate=0.1, l2=1e-4, epochs=1000):
        self.params = dict(learning_rate=learning_rate, l2=l2, epochs=epochs)

    def fit(self, X, y, n_classes, rng):
        n, p = X.shape
        Y = np.eye(n_classes)[y]
        W = np.zeros((p, n_classes))
        b = np.zeros(n_classes)
        lr, l2 = self.params["learning_rate"], self.params["l2"]
        for _ in range(self.params["epochs"]):
            G = softmax(X @ W + b) - Y
            W -= lr * (X.T @ G / n + l2 * W)
            b -= lr * G.mean(axis=0)
        self.W, self.b = W, b
        return self

    def predict_proba(self, X):
        return softmax(X @ self.W + self.b)

    def to_state(self):
        return {"W": self.W.tolist(), "b": self.b.tolist()}

    def load_state(self, s):
        self.W, self.b = np.asarray(s["W"], float).reshape(-1, len(s["b"])), np.asarray(s["b"], float)


def platt_fit(f: np.ndarray, t: np.ndarray, max_iter=100) -> tuple[float, float]:
    """Fit P(t=1|f) = 1/(1+exp(A f + B)) by Newton's method with Platt's target smoothing."""
    n_pos = float(t.sum())
    n_neg = len(t) - n_pos
    hi = (n_pos + 1) / (n_pos + 2)
    lo = 1 / (n_neg + 2)
    target = np.where(t == 1, hi, lo)
    A, B = 0.0, float(np.log((n_neg + 1) / (n_pos + 1)))

    def objective(A, B):
        z = A * f + B
        # log(1+exp(z)) - (1-target)*z, written stably
        return float(np.sum(np.logaddexp(0, z) - (1 - target) * z))

    fval = objective(A, B)
    for _ in range(max_iter):
        z = A * f + B
        p = 1 / (1 + np.exp(np.clip(z, -500, 500)))  # P(t=1)
        d1 = target - p
        w = p * (1 - p)
        gA, gB = float(f @ d1), float(d1.sum())
        if abs(gA) < 1e-5 and abs(gB) < 1e-5:
            break
        h11 = float(f * f @ w) + 1e-12
        h22 = float(w.sum()) + 1e-12
        h21 = float(f @ w)
        det = h11 * h22 - h21 * h21
        dA = -(h22 * gA - h21 * gB) / det
        dB = -(-h21 * gA + h11 * gB) / det
        gd = gA * dA + gB * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2
        else:
            break
    return A, B


class LinearSVC:
    """Pegasos subgradient SVM, one-vs-rest, with a Platt sigmoid per class."""

    def __init__(self, lam=1e-4, epochs=20):
        self.params = dict(lam=lam, epochs=epochs)

    def _pegasos(self, Xa, s, rng):
        lam = self.params["lam"]
        n, p = Xa.shape
        w = np.zeros(p)
        radius = 1 / np.sqrt(lam)
        t = 0
        for _ in range(self.params["epochs"]):
            for i in rng.permutation(n):
                t += 1
                eta = 1.0 / (lam * t)
                margin = s[i] * (Xa[i] @ w)
                w *= 1 - eta * lam
                if margin < 1:
                    w += eta * s[i] * Xa[i]
                norm = np.linalg.norm(w)
                if norm > radius:
                    w *= radius / norm
        return w

    def fit(self, X, y, n_classes, rng):
        Xa = np.hstack([X, np.ones((len(X), 1))])
        targets = [1] if n_classes == 2 else range(n_classes)
        self.W, self.platt = [], []
        for c in targets:
            s = np.where(y == c, 1.0, -1.0)
            w = self._pegasos(Xa, s, rng)
            self.W.append(w)
            self.platt.append(platt_fit(Xa @ w, (y == c).astype(float)))
        self.W = np.array(self.W)
        self.n_classes = n_classes
        return self

    def decision_function(self, X):
        return np.hstack([X, np.ones((len(X), 1))]) @ self.W.T

    def predict_proba(self, X):
        f = self.decision_function(X)
        P = np.column_stack([1 / (1 + np.exp(np.clip(A * f[:, j] + B, -500, 500)))
                             for j, (A, B) in enumerate(self.platt)])
        if self.n_classes == 2:
            return np.column_stack([1 - P[:, 0], P[:, 0]])
        P = np.clip(P, 1e-15, None)
        return P / P.sum(axis=1, keepdims=True)

    def to_state(self):
        return {"W": self.W.tolist(), "platt": [list(ab) for ab in self.platt], "n_classes": self.n_classes}

    def load_state(self, s):
        self.W = np.asarray(s["W"], float)
        self.platt = [tuple(ab) for ab in s["platt"]]
        self.n_classes = s["n_classes"]
        self.n_classes = s["n_classes"]
