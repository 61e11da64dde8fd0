"""Train error, Monte Carlo test error and a bounded-Lipschitz test panel."""
from dataclasses import dataclass

import numpy as np

from . import network as nw
from .data_model import generate_features


@dataclass
class ErrorRecord:
    t: int
    train: float
    test: float
    test_se: float = 0.0

    @property
    def gap(self):
        return abs(self.test - self.train)


def gap(record):
    return record.gap


def train_error(W, X, Y_q, acts):
    """(1/m) ||Y - G_L(X)||^2; twice the training loss."""
    r = Y_q - nw.forward(X, W, acts).output
    return float(np.sum(r * r) / X.shape[0])


def test_error_mc(W, acts, mu_star, link, xi_pool, feature_dist, N_new, rng,
                  target=None, batch=10000, x_new=None):
    """Test error on fresh features with the noise averaged exactly over xi_pool.

    For a fresh x and a uniformly chosen training noise value,
    E (phi(x) + xi - f(x))^2 = E e^2 + 2 mean(xi) E e + mean(xi^2) with e = phi - f.
    ``target`` overrides the regression function x -> E[Y | x] (multi-index).
    ``x_new`` supplies the fresh features instead of drawing them (so a run
    can reuse one test batch across iterations).  Returns (estimate, SE).
    """
    if x_new is not None:
        N_new = x_new.shape[0]
    if N_new < 2:
        raise ValueError("N_new must be at least 2")
    xi_pool = np.asarray(xi_pool, dtype=float)
    xbar, x2 = xi_pool.mean(), np.mean(xi_pool ** 2)
    if target is None:
        target = lambda x: link.value(x @ mu_star)   # noqa: E731
    vals = np.empty(N_new)
    for lo in range(0, N_new, batch):
        hi = min(N_new, lo + batch)
        x = (x_new[lo:hi] if x_new is not None
             else generate_features(hi - lo, W.n, feature_dist, rng))
        e = target(x) - nw.predict(x, W, acts)
        vals[lo:hi] = e * e + 2.0 * xbar * e + x2
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(N_new))


# ---- bounded-Lipschitz panel ----------------------------------------------

@dataclass
class BLPanel:
    """Fixed functions y -> clip(<a_j, tanh(y - b_j)>, -1, 1), ||a_j|| = 1.

    Each member is bounded by 1 and 1-Lipschitz, so the largest gap in panel
    means lower-bounds the bounded-Lipschitz distance.
    """
    a: np.ndarray   # (J, d)
    b: np.ndarray   # (J, d)

    @classmethod
    def make(cls, d, rng, size=50, spread=1.0):
        a = rng.standard_normal((size, d))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        return cls(a, spread * rng.standard_normal((size, d)))

    def evaluate(self, Y, batch=20000):
        """Panel means over the rows of Y (N, d)."""
        Y = np.asarray(Y, dtype=float)
        Y = Y[:, None] if Y.ndim == 1 else Y
        acc = np.zeros(len(self.a))
        for lo in range(0, len(Y), batch):
            y = Y[lo:lo + batch]
            v = np.einsum("jd,njd->nj", self.a, np.tanh(y[:, None, :] - self.b[None]))
            acc += np.clip(v, -1.0, 1.0).sum(axis=0)
        return acc / len(Y)

    def discrepancy(self, A, B):
        return float(np.max(np.abs(self.evaluate(A) - self.evaluate(B))))
