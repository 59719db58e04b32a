"""One-hidden-layer ReLU network trained with minibatch SGD on cross-entropy."""
from __future__ import annotations

import numpy as np

from .linear import softmax


class MLP:
    def __init__(self, hidden=100, learning_rate=1e-3, epochs=200, batch_size=32, momentum=0.9, l2=1e-4):
        self.params = dict(hidden=hidden, learning_rate=learning_rate, epochs=epochs,
                           batch_size=batch_size, momentum=momentum, l2=l2)

    def fit(self, X, y, n_classes, rng):
        P = self.params
        n, p = X.shape
        h = P["hidden"]
        # Glorot-uniform initialisation
        b1_lim, b2_lim = np.sqrt(6 / (p + h)), np.sqrt(6 / (h + n_classes))
        W1 = rng.uniform(-b1_lim, b1_lim, (p, h))
        W2 = rng.uniform(-b2_lim, b2_lim, (h, n_classes))
        b1, b2 = np.zeros(h), np.zeros(n_classes)
        vel = [np.zeros_like(a) for a in (W1, b1, W2, b2)]
        Y = np.eye(n_classes)[y]
        bs = min(P["batch_size"], n)
        lr, mom, l2 = P["learning_rate"], P["momentum"], P["l2"]
        for _ in range(P["epochs"]):
            order = rng.permutation(n)
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                xb, yb = X[idx], Y[idx]
                z = xb @ W1 + b1
                a = np.maximum(z, 0)
                g_out = (softmax(a @ W2 + b2) - yb) / len(idx)
                gW2 = a.T @ g_out + l2 * W2
                g_hid = (g_out @ W2.T) * (z > 0)
                gW1 = xb.T @ g_hid + l2 * W1
                grads = (gW1, g_hid.sum(axis=0), gW2, g_out.sum(axis=0))
                for param, v, g in zip((W1, b1, W2, b2), vel, grads):
                    v *= mom
                    v -= lr * g
                    param += v
        self.W1, self.b1, self.W2, self.b2 = W1, b1, W2, b2
        return self

    def predict_proba(self, X):
        return softmax(np.maximum(X @ self.W1 + self.b1, 0) @ self.W2 + self.b2)

    def to_state(self):
        return {k: getattr(self, k).tolist() for k in ("W1", "b1", "W2", "b2")}

    def load_state(self, s):
        for k in ("W1", "b1", "W2", "b2"):
            setattr(self, k, np.asarray(s[k], float))
