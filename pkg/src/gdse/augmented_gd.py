"""Gradient descent with data-driven generalization-error estimates.

Alongside each plain GD step the trainer propagates column derivatives of
the forward and backward passes, turns them into per-row Jacobians of the
first-layer pre-gradient, and from those builds the Onsager matrices
tau_hat, rho_hat.  These debias X W1 into a statistic U_hat whose plug-in
residual estimates the test error without the signal or link.
"""
from dataclasses import dataclass, field

import numpy as np

from . import network as nw
from .activations import WEAK_FIRST, apply
from .block_algebra import BlockMatrix, block_identity, shift_embed, solve_unit_lower


class DivergenceError(FloatingPointError):
    """GD produced non-finite weights (step size beyond the stable range)."""

    def __init__(self, t):
        super().__init__(f"gradient descent diverged at iteration {t}")
        self.t = t


@dataclass
class ForwardDerivs:
    H: list    # H[0] = X, H[a] for a = 1..L
    dH: list   # dH[a][l] = d H_a / d(column l of XW1), a = 1..L


@dataclass
class BackwardDerivs:
    P: list    # P[a], a = 1..L
    d1: list   # d1[a][l]: derivative through u with the residual held fixed
    d2: list   # d2[a][l]: derivative of the linear map along E_{.l}


def _col_seed(m, q, ell):
    E = np.zeros((m, q))
    E[:, ell] = 1.0
    return E


def forward_with_derivs(net, X, acts):
    m, q, L = X.shape[0], net.q, net.L
    H = [X]
    dH = [None]
    for a in range(1, L + 1):
        G_prev = acts[a - 1].value(H[a - 1])
        H.append(G_prev @ net.W[a - 1])
        if a == 1:
            dH.append([_col_seed(m, q, ell) for ell in range(q)])
        else:
            s = acts[a - 1].deriv1(H[a - 1])
            dH.append([(s * d) @ net.W[a - 1] for d in dH[a - 1]])
    return ForwardDerivs(H, dH)


def backward_with_derivs(net, fwd, Y_q, acts):
    L, q = net.L, net.q
    m = Y_q.shape[0]
    P = [None] * (L + 1)
    d1 = [None] * (L + 1)
    d2 = [None] * (L + 1)
    P[L] = fwd.H[L] - Y_q
    d1[L] = [np.zeros((m, q)) for _ in range(q)]
    d2[L] = [_col_seed(m, q, ell) for ell in range(q)]
    for a in range(L - 1, 0, -1):
        Wt = net.W[a].T          # W_{a+1}^T
        sp = acts[a + 1].deriv1(fwd.H[a + 1])
        spp = apply(acts[a + 1], fwd.H[a + 1], 2)
        P[a] = (P[a + 1] * sp) @ Wt
        d1[a] = [(P[a + 1] * spp * fwd.dH[a + 1][ell] + sp * d1[a + 1][ell]) @ Wt
                 for ell in range(q)]
        d2[a] = [(sp * d2[a + 1][ell]) @ Wt for ell in range(q)]
    return BackwardDerivs(P, d1, d2)


def pregrad_derivs(fwd, bwd, acts):
    """Column derivatives dS[l] (m x q) of the first-layer pre-gradient."""
    L = len(fwd.H) - 1
    q = fwd.H[1].shape[1]
    u = fwd.H[1]
    s1 = acts[1].deriv1(u)
    s2 = apply(acts[1], u, 2)
    P1 = bwd.P[1]
    D2 = np.stack(bwd.d2[1], axis=2)            # (m, q, q): [k, r, d]
    out = []
    for ell in range(q):
        Q = np.einsum("krd,kd->kr", D2, fwd.dH[L][ell])
        dS = (bwd.d1[1][ell] + Q) * s1
        dS[:, ell] += P1[:, ell] * s2[:, ell]
        out.append(dS)
    return out


def row_jacobians(dS):
    """J[k, d, l] = dS[l][k, d]: per-row Jacobian, rows are outputs."""
    return np.stack(dS, axis=2)


def onsager_update(J_hist, eta1, phi, rho_prev):
    """tau_hat^[t], rho_hat^[t] from the full per-row block solve.

    J_hist: (m, t, q, q) per-row Jacobians of iterations 0..t-1.
    eta1:   first-layer rates for iterations 0..t-1 (length t).
    rho_prev: BlockMatrix (t-1) x (t-1), possibly empty.
    """
    m, t, q, _ = J_hist.shape
    if rho_prev.t != t - 1 or rho_prev.q != q:
        raise ValueError("rho_prev must be (t-1) x (t-1) blocks of the same size")
    O = shift_embed(rho_prev)
    eye = block_identity(t, q)
    eta1 = np.broadcast_to(np.asarray(eta1, dtype=float), (t,))
    acc = np.zeros((t, t, q, q))
    for k in range(m):
        Lk = BlockMatrix.zeros(t, q)
        Lk.blocks[np.arange(t), np.arange(t)] = eta1[:, None, None] * J_hist[k]
        acc += solve_unit_lower(eye + (Lk @ O) * (1.0 / phi), Lk).blocks
    tau = BlockMatrix(-acc / m)
    rho = eye + (tau + eye) @ O
    return tau, rho


def _last_row(J_hist, eta1, phi, rho):
    """Last block row of tau_hat^[t] by a backward sweep over one row.

    With Lk block diagonal, row t of (I + Lk O / phi)^{-1} Lk only needs the
    row vector g solving g (I + Lk O / phi) = e_t, which is a backward
    substitution; rows above t are unchanged from the previous iteration.
    ``rho`` holds blocks rho[r, s] for r, s < t (0-based, shape (t-1, t-1, q, q)).
    """
    m, t, q, _ = J_hist.shape
    lam = np.empty((m, t, q, q))            # g_r * eta_r * J_r
    lam[:, t - 1] = eta1[t - 1] * J_hist[:, t - 1]
    for s in range(t - 2, -1, -1):
        R = rho[s:t - 1, s]                 # rho_{r-1, s} for r = s+1..t-1 (0-based)
        g = -np.tensordot(lam[:, s + 1:t], R, axes=([1, 3], [0, 1])) / phi
        lam[:, s] = eta1[s] * np.matmul(g, J_hist[:, s])
    return -lam.mean(axis=0)


@dataclass
class AugGDState:
    t: int
    W: nw.NetworkParams
    W0: nw.NetworkParams
    phi: float
    eta: np.ndarray
    pregrad_hist: list = field(default_factory=list)   # P1 * s1' at iterations 0..t-1
    J_hist: list = field(default_factory=list)         # (m, q, q) per iteration
    tau_hat: BlockMatrix = None
    rho_hat: BlockMatrix = None
    weak_second: bool = False


def gradient_update(state, fwd, bwd, acts):
    W = state.W
    m = fwd.H[0].shape[0]
    new = []
    for a in range(1, W.L + 1):
        pre = bwd.P[a] * acts[a].deriv1(fwd.H[a])
        new.append(W.W[a - 1] - state.eta[a - 1] / m * acts[a - 1].value(fwd.H[a - 1]).T @ pre)
    if not all(np.all(np.isfinite(w)) for w in new):
        raise DivergenceError(state.t + 1)
    out = nw.NetworkParams(new)
    out.check_structure()
    return out


def estimate_generalization(state, X, Y_q, acts):
    """Debiased statistic U_hat and the plug-in test-error estimate."""
    U = X @ state.W.W1
    if state.t > 0:
        rho = state.rho_hat.blocks[state.t - 1]        # rho_{t,s}, s = 1..t
        eta1 = state.eta[0]
        for s in range(state.t):
            U = U + (eta1 / state.phi) * state.pregrad_hist[s] @ rho[s].T
    G = _head(state.W, acts, U)
    return U, float(np.sum((Y_q - G) ** 2) / X.shape[0])


def _head(W, acts, U):
    G = U
    for a in range(2, W.L + 1):
        G = acts[a - 1].value(G) @ W.W[a - 1]
    return acts[W.L].value(G)


def init_state(W0, X, eta, acts):
    m, n = X.shape
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (W0.L,)).copy()
    W0.check_structure()
    return AugGDState(0, W0.copy(), W0.copy(), m / n, eta,
                      rho_hat=BlockMatrix.empty(W0.q), tau_hat=BlockMatrix.empty(W0.q),
                      weak_second=any(a.smoothness == WEAK_FIRST for a in acts))


def step(state, X, Y_q, acts, full_solve=False):
    """One GD step plus the Onsager update and the new per-row Jacobians."""
    fwd = forward_with_derivs(state.W, X, acts)
    bwd = backward_with_derivs(state.W, fwd, Y_q, acts)
    dS = pregrad_derivs(fwd, bwd, acts)
    state.J_hist.append(row_jacobians(dS))
    state.pregrad_hist.append(bwd.P[1] * acts[1].deriv1(fwd.H[1]))
    t = state.t + 1
    q = state.W.q
    J = np.stack(state.J_hist, axis=1)
    eta1 = np.full(t, state.eta[0])
    if full_solve:
        tau, rho = onsager_update(J, eta1, state.phi, state.rho_hat)
    else:
        row = _last_row(J, eta1, state.phi, state.rho_hat.blocks)
        tau = BlockMatrix.zeros(t, q)
        tau.blocks[: t - 1, : t - 1] = state.tau_hat.blocks
        tau.blocks[t - 1] = row
        rho = BlockMatrix.zeros(t, q)
        rho.blocks[: t - 1, : t - 1] = state.rho_hat.blocks
        # rho_{t,s} = I 1{s=t} + sum_{r=s+1}^{t} (tau_{t,r} + I 1{r=t}) rho_{r-1,s}
        tI = row.copy()
        tI[t - 1] += np.eye(q)
        rho.blocks[t - 1, t - 1] = np.eye(q)
        for s in range(t - 1):
            rho.blocks[t - 1, s] = np.einsum("rij,rjk->ik", tI[s + 1:], state.rho_hat.blocks[s:, s])
    state.W = gradient_update(state, fwd, bwd, acts)
    state.tau_hat, state.rho_hat, state.t = tau, rho, t
    return state


def train_error(W, X, Y_q, acts):
    r = Y_q - nw.forward(X, W, acts).output
    return float(np.sum(r * r) / X.shape[0])


def run(X, Y, W0, acts, eta, T, hooks=(), full_solve=False):
    """Run T iterations; returns one record per t = 0..T."""
    q = W0.q
    Y_q = np.zeros((X.shape[0], q))
    Y_q[:, 0] = Y
    state = init_state(W0, X, eta, acts)
    records = []

    def emit():
        _, e_hat = estimate_generalization(state, X, Y_q, acts)
        rec = {"t": state.t, "e_test_hat": e_hat,
               "e_train": train_error(state.W, X, Y_q, acts), "W": state.W}
        records.append(rec)
        for h in hooks:
            h(state, rec)

    emit()
    for _ in range(T):
        step(state, X, Y_q, acts, full_solve)
        emit()
    return records, state
