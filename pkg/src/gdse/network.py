"""Multi-layer network with structured last layer, forward pass, gradients."""
import csv
from dataclasses import dataclass

import numpy as np


class StructureError(AssertionError):
    """The last layer lost its zero columns, which signals a bug upstream."""


@dataclass
class NetworkParams:
    W: list  # [W1 (n x q), W2 (q x q), ..., WL (q x q)]

    def __post_init__(self):
        self.W = [np.asarray(w, dtype=float) for w in self.W]
        if len(self.W) < 2:
            raise ValueError("need at least two layers")
        n, q = self.W[0].shape
        for a, w in enumerate(self.W[1:], start=2):
            if w.shape != (q, q):
                raise ValueError(f"W{a} has shape {w.shape}, expected {(q, q)}")

    @property
    def L(self):
        return len(self.W)

    @property
    def n(self):
        return self.W[0].shape[0]

    @property
    def q(self):
        return self.W[0].shape[1]

    @property
    def W1(self):
        return self.W[0]

    @property
    def tail(self):
        """[W2, ..., WL], the arguments of the theoretical maps."""
        return self.W[1:]

    def copy(self):
        return NetworkParams([w.copy() for w in self.W])

    def check_structure(self):
        if np.any(self.W[-1][:, 1:] != 0.0):
            raise StructureError("last-layer columns 2..q must be exactly zero")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["layer", "row", "col", "value"])
            for a, Wa in enumerate(self.W, start=1):
                for (i, j), val in np.ndenumerate(Wa):
                    w.writerow([a, i + 1, j + 1, repr(float(val))])

    @classmethod
    def from_csv(cls, path):
        rows = {}
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                rows.setdefault(int(r["layer"]), []).append(
                    (int(r["row"]) - 1, int(r["col"]) - 1, float(r["value"])))
        W = []
        for a in sorted(rows):
            nr = max(i for i, _, _ in rows[a]) + 1
            nc = max(j for _, j, _ in rows[a]) + 1
            Wa = np.zeros((nr, nc))
            for i, j, val in rows[a]:
                Wa[i, j] = val
            W.append(Wa)
        return cls(W)


@dataclass
class ForwardCache:
    H: list   # H[0] = X, H[a] pre-activation of layer a
    G: list   # sigma_a(H[a])
    Gp: list  # sigma_a'(H[a])

    @property
    def output(self):
        return self.G[-1]


def init_gaussian(L, q, n, rng):
    if L < 2 or q < 1 or n < 1:
        raise ValueError("need L >= 2, q >= 1, n >= 1")
    W = [rng.standard_normal((n, q)) / np.sqrt(n)]
    W += [rng.standard_normal((q, q)) / np.sqrt(q) for _ in range(L - 1)]
    W[-1][:, 1:] = 0.0
    return NetworkParams(W)


def forward(X, net, acts):
    if len(acts) != net.L + 1:
        raise ValueError(f"need {net.L + 1} activations (layers 0..L), got {len(acts)}")
    if X.shape[1] != net.n:
        raise ValueError(f"X has {X.shape[1]} columns, network expects {net.n}")
    H, G, Gp = [X], [X], [np.ones_like(X)]
    for a in range(1, net.L + 1):
        H.append(G[a - 1] @ net.W[a - 1])
        G.append(acts[a].value(H[a]))
        Gp.append(acts[a].deriv1(H[a]))
    return ForwardCache(H, G, Gp)


def predict(X, net, acts):
    return forward(X, net, acts).output[:, 0]


def loss(net, X, Y_q, acts):
    r = Y_q - forward(X, net, acts).output
    return float(np.sum(r * r) / (2 * X.shape[0]))


def backward(net, cache, Y_q):
    """Pre-gradients z_a = P^{(a:L]}(G_L - Y) * G_a' for a = 1..L (index 0 unused)."""
    if Y_q.shape != cache.output.shape:
        raise ValueError(f"Y_q shape {Y_q.shape} != output shape {cache.output.shape}")
    pre = [None] * (net.L + 1)
    z = cache.output - Y_q
    for a in range(net.L, 0, -1):
        pre[a] = z * cache.Gp[a]
        if a > 1:
            z = pre[a] @ net.W[a - 1].T
    return pre


def gradients(net, X, Y_q, acts, cache=None):
    cache = forward(X, net, acts) if cache is None else cache
    pre = backward(net, cache, Y_q)
    m = X.shape[0]
    return [cache.G[a - 1].T @ pre[a] / m for a in range(1, net.L + 1)]


def gd_step(net, grads, eta):
    etas = np.broadcast_to(np.asarray(eta, dtype=float), (net.L,))
    if np.any(etas < 0):
        raise ValueError("learning rates must be non-negative")
    out = NetworkParams([w - e * g for w, g, e in zip(net.W, grads, etas)])
    out.check_structure()
    return out


def pad_network(W_list, q):
    """Zero-pad a network of varying widths to a common width q.

    ``W_list`` holds W1 (n x q1), W2 (q1 x q2), ..., WL (q_{L-1} x 1).
    """
    out = []
    for a, w in enumerate(W_list):
        r = w.shape[0] if a == 0 else q
        P = np.zeros((r, q))
        P[: w.shape[0], : w.shape[1]] = w
        out.append(P)
    return NetworkParams(out)
