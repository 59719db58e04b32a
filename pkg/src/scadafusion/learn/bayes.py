"""Gaussian and Bernoulli naive Bayes."""
from __future__ import annotations

import numpy as np

from .linear import softmax


class GaussianNB:
    def __init__(self, var_smoothing=1e-9):
        self.params = dict(var_smoothing=var_smoothing)

    def fit(self, X, y, n_classes, rng):
        eps = self.params["var_smoothing"] * float(X.var(axis=0).max())
        self.theta = np.zeros((n_classes, X.shape[1]))
        self.var = np.ones((n_classes, X.shape[1]))
        self.log_prior = np.full(n_classes, -np.inf)
        for c in range(n_classes):
            Xc = X[y == c]
            if len(Xc):
                self.theta[c] = Xc.mean(axis=0)
                self.var[c] = Xc.var(axis=0)
                self.log_prior[c] = np.log(len(Xc) / len(X))
        self.var = self.var + max(eps, 1e-300)
        return self

    def joint_log_likelihood(self, X):
        ll = -0.5 * (np.log(2 * np.pi * self.var).sum(axis=1)[None, :]
                     + (((X[:, None, :] - self.theta[None]) ** 2) / self.var[None]).sum(axis=2))
        return ll + self.log_prior

    def predict_proba(self, X):
        return softmax(self.joint_log_likelihood(X))

    def to_state(self):
        return {"theta": self.theta.tolist(), "var": self.var.tolist(), "log_prior": self.log_prior.tolist()}

    def load_state(self, s):
        self.theta, self.var = np.asarray(s["theta"], float), np.asarray(s["var"], float)
        self.log_prior = np.asarray(s["log_prior"], float)


class BernoulliNB:
    """Features are min-max scaled on the training range, then binarized."""

    def __init__(self, alpha=1.0, binarize=0.5):
        self.params = dict(alpha=alpha, binarize=binarize)

    def _binary(self, X):
        span = np.where(self.hi > self.lo, self.hi - self.lo, 1.0)
        return ((X - self.lo) / span > self.params["binarize"]).astype(float)

    def fit(self, X, y, n_classes, rng):
        self.lo, self.hi = X.min(axis=0), X.max(axis=0)
        B = self._binary(X)
        a = self.params["alpha"]
        counts = np.array([B[y == c].sum(axis=0) for c in range(n_classes)])
        n_c = np.bincount(y, minlength=n_classes).astype(float)
        p = (counts + a) / (n_c[:, None] + 2 * a)
        self.log_p, self.log_q = np.log(p), np.log1p(-p)
        with np.errstate(divide="ignore"):
            self.log_prior = np.log(n_c / n_c.sum())
        return self

    def predict_proba(self, X):
        B = self._binary(X)
        return softmax(B @ self.log_p.T + (1 - B) @ self.log_q.T + self.log_prior)

    def to_state(self):
        return {k: getattr(self, k).tolist() for k in ("lo", "hi", "log_p", "log_q", "log_prior")}

    def load_state(self, s):
        for k in ("lo", "hi", "log_p", "log_q", "log_prior"):
            setattr(self, k, np.asarray(s[k], float))
