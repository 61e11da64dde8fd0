"""Feed-forward, back-propagation and pre-gradient maps on u = X W1 inputs.

The maps take the first-layer pre-activation ``u`` (and the signal
projection ``w``) as explicit arguments and are row separable: row k of
every output depends only on row k of the inputs.  That makes them usable
both on data (m rows) and on Monte Carlo ensembles (one sample per row).

Derivatives are directional: ``seed`` is an array shaped like ``u`` giving
the perturbation direction.  The entrywise partial with respect to u[k, l]
is the seed e_k e_l^T; the seed 1 e_l^T perturbs column l of every row at
once and, by row separation, returns all row-wise partials in one pass.
"""
from dataclasses import dataclass

import numpy as np

from .activations import apply


@dataclass
class TheoreticalContext:
    v: list              # [v2, ..., vL]
    acts: tuple          # activations for layers 0..L
    link: object
    xi_q: np.ndarray = None  # rows aligned with u; None means zero noise

    @property
    def L(self):
        return len(self.v) + 1

    @property
    def q(self):
        return self.v[0].shape[0]

    def with_noise(self, xi_q):
        return TheoreticalContext(self.v, self.acts, self.link, xi_q)


class Feed:
    """Cached forward quantities for one input u."""

    def __init__(self, ctx, u):
        if len(ctx.acts) != ctx.L + 1:
            raise ValueError("activation tuple must cover layers 0..L")
        self.ctx = ctx
        self.u = u
        L = ctx.L
        self.H = [None] * (L + 1)
        self.G = [None] * (L + 1)
        self.Gp = [None] * (L + 1)
        self._Gpp = [None] * (L + 1)
        self.H[1] = u
        for a in range(1, L + 1):
            if a > 1:
                self.H[a] = self.G[a - 1] @ ctx.v[a - 2]
            self.G[a] = ctx.acts[a].value(self.H[a])
            self.Gp[a] = ctx.acts[a].deriv1(self.H[a])

    def Gpp(self, a):
        if self._Gpp[a] is None:
            self._Gpp[a] = apply(self.ctx.acts[a], self.H[a], 2)
        return self._Gpp[a]


def _check_alpha(ctx, alpha, lo=1):
    if not lo <= alpha <= ctx.L:
        raise ValueError(f"alpha={alpha} outside [{lo}, {ctx.L}]")


def preact(ctx, u, upto):
    _check_alpha(ctx, upto)
    return Feed(ctx, u).H[upto]


def act_out(ctx, u, upto):
    _check_alpha(ctx, upto)
    return Feed(ctx, u).G[upto]


def act_deriv(ctx, u, upto):
    _check_alpha(ctx, upto)
    return Feed(ctx, u).Gp[upto]


def _layer_P(fd, z, beta):
    return (z * fd.Gp[beta]) @ fd.ctx.v[beta - 2].T


def backprop_layer(ctx, u, z, beta, feed=None):
    _check_alpha(ctx, beta, 2)
    return _layer_P(feed or Feed(ctx, u), z, beta)


def _tail(fd, z, alpha):
    for beta in range(fd.ctx.L, alpha, -1):
        z = _layer_P(fd, z, beta)
    return z


def backprop_tail(ctx, u, z, alpha, feed=None):
    _check_alpha(ctx, alpha)
    return _tail(feed or Feed(ctx, u), z, alpha)


def link_q(link, w, order=0):
    """Link (or its derivative) on the first column; zero elsewhere.

    Only the first column of w carries the signal projection, so this is the
    entrywise rule whenever link(0) = 0 and keeps the padded columns of the
    residual at zero for every link.
    """
    out = np.zeros_like(w, dtype=float)
    out[:, 0] = (link.value, link.deriv1, link.deriv2)[order](w[:, 0])
    return out


def residual(ctx, u, w, feed=None):
    fd = feed or Feed(ctx, u)
    r = fd.G[ctx.L] - link_q(ctx.link, w)
    return r if ctx.xi_q is None else r - ctx.xi_q


def pregrad_S(ctx, u, w, feed=None):
    fd = feed or Feed(ctx, u)
    return _tail(fd, residual(ctx, u, w, fd), 1) * fd.Gp[1]


def pregrad_T(ctx, u, w, alpha, feed=None):
    _check_alpha(ctx, alpha, 2)
    fd = feed or Feed(ctx, u)
    return _tail(fd, residual(ctx, u, w, fd), alpha) * fd.Gp[alpha]


# ---- directional derivatives -------------------------------------------

def d_H(fd, seed, alpha):
    """Derivative of H_alpha(u) along seed, for alpha = 1..L (list)."""
    out = [None] * (alpha + 1)
    out[1] = seed
    for a in range(2, alpha + 1):
        out[a] = (fd.Gp[a - 1] * out[a - 1]) @ fd.ctx.v[a - 2]
    return out


def d_P_layer_u(fd, z, dH, beta):
    return (z * fd.Gpp(beta) * dH[beta]) @ fd.ctx.v[beta - 2].T


def d_P_tail_u(fd, z, seed, alpha, dH=None):
    """u-derivative of P^{(alpha:L]}(u, z) along seed (z held fixed)."""
    L = fd.ctx.L
    dH = dH or d_H(fd, seed, L)
    val, der = z, np.zeros_like(z)
    for beta in range(L, alpha, -1):
        der = d_P_layer_u(fd, val, dH, beta) + _layer_P(fd, der, beta)
        val = _layer_P(fd, val, beta)
    return der


def d_P_tail_z(fd, seed, alpha):
    # the tail map is linear in z
    return _tail(fd, seed, alpha)


def d_S_u(fd, w, seed, R=None):
    ctx, L = fd.ctx, fd.ctx.L
    R = residual(ctx, fd.u, w, fd) if R is None else R
    dH = d_H(fd, seed, L)
    P1 = _tail(fd, R, 1)
    inner = d_P_tail_u(fd, R, seed, 1, dH) + _tail(fd, dH[L], 1)
    return P1 * fd.Gpp(1) * seed + inner * fd.Gp[1]


def d_S_w(fd, w, seed):
    return -_tail(fd, seed * link_q(fd.ctx.link, w, 1), 1) * fd.Gp[1]


def unit(shape, k, ell):
    E = np.zeros(shape)
    E[k, ell] = 1.0
    return E


PARTIALS = ("H", "P_u", "P_z", "P_layer_u", "P_layer_z", "S_u", "S_w")


def partial(ctx, which, u, arg=None, k=0, ell=0, alpha=None):
    """Entrywise partial derivative with respect to u[k, ell] (or z, w).

    which:
      H          d H_alpha / d u_kl
      P_u, P_z   d P^{(alpha:L]}(u, z) / d u_kl  and  / d z_kl   (arg = z)
      P_layer_u, P_layer_z   same for the single layer map of index alpha
      S_u, S_w   d S(u, w) / d u_kl  and  / d w_kl               (arg = w)
    """
    if which not in PARTIALS:
        raise ValueError(f"unknown partial {which!r}")
    m, q = u.shape
    if not (0 <= k < m and 0 <= ell < q):
        raise IndexError(f"index ({k}, {ell}) outside {u.shape}")
    fd = Feed(ctx, u)
    E = unit(u.shape, k, ell)
    if which == "H":
        _check_alpha(ctx, alpha)
        return d_H(fd, E, alpha)[alpha]
    if which == "P_u":
        _check_alpha(ctx, alpha)
        return d_P_tail_u(fd, arg, E, alpha)
    if which == "P_z":
        _check_alpha(ctx, alpha)
        return d_P_tail_z(fd, E, alpha)
    if which == "P_layer_u":
        _check_alpha(ctx, alpha, 2)
        return d_P_layer_u(fd, arg, d_H(fd, E, ctx.L), alpha)
    if which == "P_layer_z":
        _check_alpha(ctx, alpha, 2)
        return _layer_P(fd, E, alpha)
    if which == "S_u":
        return d_S_u(fd, arg, E)
    return d_S_w(fd, arg, E)


def row_jacobians_S(ctx, u, w, feed=None):
    """Per-row Jacobians of S: J_u[i, d, c] = dS[i, d] / du[i, c], same for w.

    Rows are independent, so perturbing column c of all rows together gives
    column c of every row Jacobian at once.
    """
    fd = feed or Feed(ctx, u)
    N, q = u.shape
    R = residual(ctx, u, w, fd)
    Ju = np.empty((N, q, q))
    Jw = np.empty((N, q, q))
    for c in range(q):
        E = np.zeros((N, q))
        E[:, c] = 1.0
        Ju[:, :, c] = d_S_u(fd, w, E, R)
        Jw[:, :, c] = d_S_w(fd, w, E)
    return Ju, Jw
