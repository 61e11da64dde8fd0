"""Synthetic regression data: single-index and multi-index responses."""
import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FeatureDist:
    kind: str = "gaussian"
    df: float = 10.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "student_t"):
            raise ValueError(f"unknown feature distribution {self.kind!r}")
        if self.kind == "student_t" and not self.df > 2:
            raise ValueError("student_t features need df > 2 for unit variance")

    @classmethod
    def parse(cls, spec):
        """'gaussian', 't10', 'student_t' or 'student_t:7.5'."""
        if isinstance(spec, FeatureDist):
            return spec
        s = str(spec).strip().lower()
        if s in ("gaussian", "normal"):
            return cls("gaussian")
        if s.startswith("student_t"):
            _, _, df = s.partition(":")
            return cls("student_t", float(df) if df else 10.0)
        if s.startswith("t") and s[1:].replace(".", "", 1).isdigit():
            return cls("student_t", float(s[1:]))
        raise ValueError(f"unknown feature distribution {spec!r}")

    def label(self):
        return "gaussian" if self.kind == "gaussian" else f"t{self.df:g}"


GAUSSIAN = FeatureDist()


@dataclass
class SingleIndexInstance:
    X: np.ndarray
    mu_star: np.ndarray
    xi: np.ndarray
    Y: np.ndarray
    link: object = None
    feature_dist: FeatureDist = GAUSSIAN
    U_star: np.ndarray = None  # set for multi-index responses

    @property
    def m(self):
        return self.X.shape[0]

    @property
    def n(self):
        return self.X.shape[1]

    def regression(self, Xnew):
        """Noise-free response E[Y | x] at new feature rows."""
        if self.U_star is not None:
            return np.tanh(np.linalg.norm(Xnew @ self.U_star.T, axis=1))
        return self.link.value(Xnew @ self.mu_star)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j + 1}" for j in range(self.n)] + ["y", "xi", "mu_star"])
            for i in range(self.m):
                mu = repr(float(self.mu_star[i])) if i < self.n else ""
                w.writerow([repr(float(v)) for v in self.X[i]]
                           + [repr(float(self.Y[i])), repr(float(self.xi[i])), mu])


@dataclass
class AugmentedViews:
    Y_q: np.ndarray
    xi_q: np.ndarray
    mu_star_q: np.ndarray


def generate_signal(n, rng):
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.standard_normal(n) / np.sqrt(n)


def generate_multi_index_signal(k, n, rng):
    return rng.standard_normal((k, n)) / np.sqrt(n)


def generate_features(m, n, dist, rng):
    dist = FeatureDist.parse(dist)
    if dist.kind == "gaussian":
        return rng.standard_normal((m, n))
    return rng.standard_t(dist.df, size=(m, n)) * np.sqrt((dist.df - 2.0) / dist.df)


def generate_responses(X, mu_star, link, sigma_xi, rng):
    m = X.shape[0]
    xi = sigma_xi * rng.standard_normal(m) if sigma_xi > 0 else np.zeros(m)
    return link.value(X @ mu_star) + xi, xi


def generate_multi_index(X, U_star, sigma_xi, rng):
    m = X.shape[0]
    xi = sigma_xi * rng.standard_normal(m) if sigma_xi > 0 else np.zeros(m)
    return np.tanh(np.linalg.norm(X @ U_star.T, axis=1)) + xi, xi


def make_instance(m, n, link, sigma_xi, rng, mu_star, dist=GAUSSIAN):
    dist = FeatureDist.parse(dist)
    X = generate_features(m, n, dist, rng)
    Y, xi = generate_responses(X, mu_star, link, sigma_xi, rng)
    return SingleIndexInstance(X, mu_star, xi, Y, link, dist)


def make_multi_index_instance(m, n, U_star, sigma_xi, rng, dist=GAUSSIAN):
    dist = FeatureDist.parse(dist)
    X = generate_features(m, n, dist, rng)
    Y, xi = generate_multi_index(X, U_star, sigma_xi, rng)
    # the first signal row stands in for mu_star where a vector is required
    return SingleIndexInstance(X, U_star[0].copy(), xi, Y, None, dist, U_star)


def scale_bound(mu_star, xi, W0):
    n = W0.n
    k = 1.0 + np.sqrt(n) * np.max(np.abs(mu_star), initial=0.0)
    k += np.max(np.abs(xi), initial=0.0)
    k += np.sqrt(n) * np.max(np.abs(W0.W1), initial=0.0)
    k += max((np.linalg.norm(Wa, 2) for Wa in W0.W[1:]), default=0.0)
    return float(k)


def augment(inst, q):
    """Embed Y, xi and mu_star as the first column of q-column matrices."""
    if q < 1:
        raise ValueError("q must be >= 1")
    Y_q = np.zeros((inst.m, q))
    xi_q = np.zeros((inst.m, q))
    mu_q = np.zeros((inst.n, q))
    Y_q[:, 0] = inst.Y
    xi_q[:, 0] = inst.xi
    mu_q[:, 0] = inst.mu_star
    return AugmentedViews(Y_q, xi_q, mu_q)


def first_column(v, q):
    v = np.asarray(v, dtype=float)
    out = np.zeros((v.shape[0], q))
    out[:, 0] = v
    return out
