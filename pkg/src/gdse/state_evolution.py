"""Monte Carlo state evolution for the first-order GD dynamics.

The recursion tracks q x q Onsager matrices (tau, rho), the covariances of
the Gaussian surrogates U^(0..t) of X W1^(s), the signal loadings D_t and
the deeper-layer weights V_t.  Expectations are Monte Carlo means over an
ensemble of N samples; each sample carries one Gaussian path and a uniform
row index k whose noise value xi_k enters the residual.

Indices are 1-based in the recursion (t = 1, 2, ...), matching the GD
iteration that produced them: Theta^(t) stands in for X W1^(t-1) and
V^(t) for W_{2:L}^(t).

Derivatives of the corrected iterate with respect to the Gaussian inputs
are obtained by a reverse sweep: only the per-sample Jacobians of the
pre-gradient map at each step are stored (N q^2 numbers per step), not the
full triangular array of path derivatives.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import gaussian
from . import theoretical as th
from .block_algebra import BlockMatrix, block_identity, shift_embed, solve_unit_lower
from .rng import stream


@dataclass
class SEState:
    q: int
    L: int
    n: int
    m: int
    phi: float
    eta: np.ndarray
    acts: tuple
    link: object
    mu_star: np.ndarray
    W0: object
    xi: np.ndarray
    t: int = 0
    tau: dict = field(default_factory=dict)     # (t, s) -> q x q, 1 <= s <= t
    rho: dict = field(default_factory=dict)
    Sigma: dict = field(default_factory=dict)   # (t, s), both orders stored
    Omega: dict = field(default_factory=dict)
    delta: dict = field(default_factory=dict)   # t -> q x q
    D: dict = field(default_factory=dict)       # t -> n x q, t >= -1
    V: dict = field(default_factory=dict)       # t -> [V2, ..., VL]
    M: dict = field(default_factory=dict)       # t -> [M2, ..., ML] used for V^(t)
    U_cov: np.ndarray = None
    train_pred: dict = field(default_factory=dict)   # GD iteration -> value
    test_pred: dict = field(default_factory=dict)
    train_se: dict = field(default_factory=dict)
    test_se: dict = field(default_factory=dict)

    def omega(self, a, b):
        if a <= 0 or b <= 0:
            return np.zeros((self.q, self.q))
        return self.Omega[(a, b)]

    def cov_block(self, a, b):
        """Cov(U^(a), U^(b)) for a, b >= 0."""
        return self.omega(a - 1, b - 1) + self.D[a - 1].T @ self.D[b - 1] / self.n

    def rho_matrix(self, t=None):
        t = self.t if t is None else t
        return _dict_block(self.rho, t, self.q)

    def tau_matrix(self, t=None):
        t = self.t if t is None else t
        return _dict_block(self.tau, t, self.q)

    def sigma_matrix(self, t=None):
        t = self.t if t is None else t
        return _dict_block(self.Sigma, t, self.q, lower_only=False)

    def omega_matrix(self, t=None):
        t = self.t if t is None else t
        return _dict_block(self.Omega, t, self.q, lower_only=False)

    def context(self, t, xi_q):
        """Theoretical maps with deeper weights V^(t)."""
        return th.TheoreticalContext(self.V[t], self.acts, self.link, xi_q)


def _dict_block(d, t, q, lower_only=True):
    b = np.zeros((t, t, q, q))
    for r in range(1, t + 1):
        for s in range(1, (r if lower_only else t) + 1):
            b[r - 1, s - 1] = d[(r, s)]
    return BlockMatrix(b)


@dataclass
class MCEnsemble:
    N: int
    seed: int
    k: np.ndarray            # row indices into the training noise
    xi_q: np.ndarray         # (N, q) noise view of the sampled rows
    U: list                  # U[s]: (N, q), s = 0..t
    Theta: list              # Theta[s]: (N, q); Theta[0] = U[0]
    S: list                  # S[s] = S(Theta[s], U[0], V^(s-1)), s >= 1
    Ju: list                 # per-sample d S[s] / d Theta[s], (N, q, q)
    jw: list                 # per-sample d S[s] / d U[0]_1, (N, q)
    factor: object = None    # square root of the joint law of U[0..t]
    Z: np.ndarray = None     # innovations, U[0..t] stacked = Z @ factor.F.T


def _fresh_normals(Z, d, rng):
    """d new standard-normal columns, moment matched against the existing Z.

    Columns of the result are orthogonal to Z and to each other with squared
    norm N, so the sample covariance of the stacked innovations is exactly I.
    """
    N = Z.shape[0]
    A = rng.standard_normal((N, d))
    if d == 0:
        return A
    if Z.shape[1]:
        Qz, _ = np.linalg.qr(Z)
        A -= Qz @ (Qz.T @ A)
    Qa, Ra = np.linalg.qr(A)
    return np.sqrt(N) * Qa * np.sign(np.diag(Ra))


def se_init(W0, mu_star, xi, acts, link, eta, phi=None, N=20000, seed=0):
    n, q, L, m = W0.n, W0.q, W0.L, len(xi)
    phi = m / n if phi is None else float(phi)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (L,)).copy()
    st = SEState(q, L, n, m, phi, eta, tuple(acts), link, np.asarray(mu_star, float),
                 W0, np.asarray(xi, float))
    st.V[0] = [w.copy() for w in W0.tail]
    mu_q = np.zeros((n, q))
    mu_q[:, 0] = mu_star
    st.D[-1] = np.sqrt(n) * mu_q
    st.D[0] = np.sqrt(n) * W0.W1
    st.U_cov = st.cov_block(0, 0)

    rng = stream(seed, 0, "se:init")
    # stratified: every row of the training noise appears N/m times (up to one)
    k = rng.permutation(np.arange(N) % m)
    xi_q = np.zeros((N, q))
    xi_q[:, 0] = st.xi[k]
    factor = gaussian.IncrementalFactor()
    _, B = factor.extend(st.U_cov)
    Z = _fresh_normals(np.zeros((N, 0)), B.shape[1], rng)
    U0 = Z @ B.T
    ens = MCEnsemble(N, seed, k, xi_q, [U0], [U0], [None], [None], [None], factor, Z)
    return st, ens


def _extend_cov(st, t):
    q = st.q
    new = np.zeros(((t + 1) * q, (t + 1) * q))
    new[: t * q, : t * q] = st.U_cov
    for s in range(t + 1):
        C = st.cov_block(t, s)
        new[t * q:, s * q:(s + 1) * q] = C
        new[s * q:(s + 1) * q, t * q:] = C.T
    return new


def theta_from(st, ens, U_t, t):
    """Theta^(t) from U^(t) and the stored pre-gradients S[1..t-1]."""
    out = U_t.copy()
    c = st.eta[0] / st.phi
    for s in range(1, t):
        out -= c * ens.S[s] @ st.rho[(t - 1, s)].T
    return out


def se_advance(st, ens):
    """Advance state and ensemble from t-1 to t (in place; both returned)."""
    t = st.t + 1
    q, N = st.q, ens.N
    rng = stream(ens.seed, 0, f"se:step:{t}")

    # extend the Gaussian law and draw U^(t) given U^(0..t-1)
    cov = _extend_cov(st, t)
    G, B = ens.factor.extend(cov)
    st.U_cov = cov
    Znew = _fresh_normals(ens.Z, B.shape[1], rng)
    ens.U.append(ens.Z @ G.T + Znew @ B.T)
    ens.Z = np.concatenate([ens.Z, Znew], axis=1)

    # corrected iterate and its pre-gradient
    theta = theta_from(st, ens, ens.U[t], t)
    ctx = st.context(t - 1, ens.xi_q)
    fd = th.Feed(ctx, theta)
    S = th.pregrad_S(ctx, theta, ens.U[0], fd)
    Ju, Jw = th.row_jacobians_S(ctx, theta, ens.U[0], fd)
    ens.Theta.append(theta)
    ens.S.append(S)
    ens.Ju.append(Ju)
    ens.jw.append(Jw[:, :, 0])

    # errors of GD iteration t-1 use Theta^(t), U^(t) and V^(t-1)
    r_train = np.sum(th.residual(ctx, theta, ens.U[0], fd) ** 2, axis=1)
    r_test = np.sum(th.residual(ctx, ens.U[t], ens.U[0]) ** 2, axis=1)
    st.train_pred[t - 1], st.train_se[t - 1] = r_train.mean(), r_train.std(ddof=1) / np.sqrt(N)
    st.test_pred[t - 1], st.test_se[t - 1] = r_test.mean(), r_test.std(ddof=1) / np.sqrt(N)

    # Onsager matrices and covariances
    abar, dvec = corrected_gradients(st, ens, t)
    for s in range(1, t + 1):
        st.tau[(t, s)] = -abar[:, s - 1].mean(axis=0)
    st.delta[t] = np.zeros((q, q))
    st.delta[t][:, 0] = -dvec.mean(axis=0)
    eye = np.eye(q)
    for s in range(1, t + 1):
        acc = eye.copy() if s == t else np.zeros((q, q))
        for r in range(s + 1, t + 1):
            acc += (st.tau[(t, r)] + (eye if r == t else 0.0)) @ st.rho[(r - 1, s)]
        st.rho[(t, s)] = acc
    c = st.eta[0] ** 2 / st.phi
    for s in range(1, t + 1):
        st.Sigma[(t, s)] = c * ens.S[t].T @ ens.S[s] / N
        st.Sigma[(s, t)] = st.Sigma[(t, s)].T
    Sig = st.sigma_matrix(t).dense()
    Rt = np.concatenate([st.rho[(t, r)] for r in range(1, t + 1)], axis=1)
    for s in range(1, t + 1):
        Rs = np.zeros((q, t * q))
        Rs[:, : s * q] = np.concatenate([st.rho[(s, r)] for r in range(1, s + 1)], axis=1)
        st.Omega[(t, s)] = Rt @ Sig @ Rs.T
        st.Omega[(s, t)] = st.Omega[(t, s)].T

    # signal loadings
    D = st.D[-1] @ st.delta[t].T
    for r in range(1, t + 1):
        D = D + st.D[r - 1] @ (st.tau[(t, r)].T + (eye if r == t else 0.0))
    st.D[t] = D

    # deeper-layer weights
    Ms, Vs = [], []
    for a in range(2, st.L + 1):
        T_a = th.pregrad_T(ctx, theta, ens.U[0], a, fd)
        Ma = fd.G[a - 1].T @ T_a / N
        Ms.append(Ma)
        Vs.append(st.V[t - 1][a - 2] - st.eta[a - 1] * Ma)
    st.M[t], st.V[t] = Ms, Vs
    st.t = t
    return st, ens


def corrected_gradients(st, ens, t):
    """Per-sample gradients of eta * S(Theta^(t), U^(0)) by a reverse sweep.

    Returns (abar, dvec): abar[:, s-1] = d(eta S_t)/d U^(s) for s = 1..t
    (shape (N, t, q, q)) and dvec = d(eta S_t)/d U^(0)_1 (shape (N, q)).
    """
    N, q = ens.N, st.q
    eta1, inv_phi = st.eta[0], 1.0 / st.phi
    abar = np.empty((N, t, q, q))
    abar[:, t - 1] = eta1 * ens.Ju[t]
    dvec = eta1 * ens.jw[t]
    for r in range(t - 1, 0, -1):
        R = np.stack([st.rho[(rp - 1, r)] for rp in range(r + 1, t + 1)])
        mu = -inv_phi * np.tensordot(abar[:, r:t], R, axes=([1, 3], [0, 1]))
        abar[:, r - 1] = eta1 * np.matmul(mu, ens.Ju[r])
        dvec += eta1 * np.einsum("nij,nj->ni", mu, ens.jw[r])
    return abar, dvec


def tau_block_solve(st, ens, t, samples=None):
    """Onsager matrices tau^[t] from the closed-form block inverse.

    Per sample, with Lk = diag(eta J_s), tau^[t] = -E (I + Lk O(rho^[t-1]) / phi)^{-1} Lk.
    Independent of the reverse sweep; used as a cross-check.
    """
    q = st.q
    idx = np.arange(ens.N) if samples is None else np.asarray(samples)
    O = shift_embed(st.rho_matrix(t - 1) if t > 1 else BlockMatrix.empty(q))
    eye = block_identity(t, q)
    acc = np.zeros((t, t, q, q))
    for i in idx:
        Lk = BlockMatrix.zeros(t, q)
        for s in range(1, t + 1):
            Lk.blocks[s - 1, s - 1] = st.eta[0] * ens.Ju[s][i]
        acc += solve_unit_lower(eye + (Lk @ O) * (1.0 / st.phi), Lk).blocks
    return BlockMatrix(-acc / len(idx))


def rho_matrix_form(st, t):
    """rho^[t] = I + (tau^[t] + I) O(rho^[t-1]) built from the stored tau."""
    q = st.q
    prev = st.rho_matrix(t - 1) if t > 1 else BlockMatrix.empty(q)
    eye = block_identity(t, q)
    return eye + (st.tau_matrix(t) + eye) @ shift_embed(prev)


def replay(st, ens, U_list, t, k=None):
    """Recompute Theta^(1..t) and eta*S_t for arbitrary Gaussian inputs.

    U_list[s] is an (N', q) array for s = 0..t; k selects noise rows (defaults
    to the ensemble's own).  Used for finite-difference checks.
    """
    k = ens.k[: U_list[0].shape[0]] if k is None else k
    xi_q = np.zeros((len(k), st.q))
    xi_q[:, 0] = st.xi[k]
    S = [None]
    thetas = [U_list[0]]
    c = st.eta[0] / st.phi
    for s in range(1, t + 1):
        theta = U_list[s].copy()
        for r in range(1, s):
            theta -= c * S[r] @ st.rho[(s - 1, r)].T
        ctx = st.context(s - 1, xi_q)
        S.append(th.pregrad_S(ctx, theta, U_list[0]))
        thetas.append(theta)
    return thetas, st.eta[0] * S[t]


def run_se(W0, mu_star, xi, acts, link, eta, T, N=20000, seed=0, phi=None):
    """State evolution through GD iteration T (advances to T + 1)."""
    st, ens = se_init(W0, mu_star, xi, acts, link, eta, phi, N, seed)
    for _ in range(T + 1):
        se_advance(st, ens)
    return st, ens


def se_errors(st, t):
    """Predicted (train, test) errors of GD iteration t."""
    if t + 1 > st.t:
        raise ValueError(f"state must be advanced to {t + 1}, currently at {st.t}")
    return st.train_pred[t], st.test_pred[t]


def sample_delta(st, N, rng, t=None):
    """Draws of rows of Delta^(t) = sum_s v^(s) rho_{t,s}^T + D_t, one per sample.

    Returns an array (N, n, q); ``N`` independent copies of all n rows.
    """
    t = st.t if t is None else t
    if t == 0:
        return np.broadcast_to(st.D[0], (N,) + st.D[0].shape).copy()
    q, n = st.q, st.n
    Sig = st.sigma_matrix(t).dense()
    v = gaussian.sample(Sig, N * n, rng).reshape(N, n, t, q)
    R = np.stack([st.rho[(t, s)] for s in range(1, t + 1)])   # (t, q, q)
    return np.einsum("Nnsj,sij->Nni", v, R) + st.D[t]


# ---- large-sample recursions -------------------------------------------

def _xi_rows(xi, k, q):
    out = np.zeros((len(k), q))
    out[:, 0] = xi[k]
    return out


def population_gd(W0, mu_star, xi, acts, link, eta, T, N_mc=100000, seed=0):
    """Gradient descent on the population risk, expectations by Monte Carlo.

    The first-layer gradient E[z S(W1^T z, mu^T z)^T] depends on z only through
    g = B^T z with B = [W1 | mu]; it equals B Gram^+ E[g S^T] (Gaussian
    regression of z on g), so no Jacobians are needed here.
    """
    L, q, n, m = W0.L, W0.q, W0.n, len(xi)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (L,))
    W = W0.copy()
    traj = [W.copy()]
    for t in range(1, T + 1):
        rng = stream(seed, 0, f"pop:{t}")
        k = rng.integers(0, m, size=N_mc)
        B = np.concatenate([W.W1, mu_star[:, None]], axis=1)
        Gram = B.T @ B
        g = gaussian.sample(Gram, N_mc, rng)
        u = g[:, :q]
        w = np.zeros((N_mc, q))
        w[:, 0] = g[:, q]
        ctx = th.TheoreticalContext(W.tail, acts, link, _xi_rows(xi, k, q))
        fd = th.Feed(ctx, u)
        S = th.pregrad_S(ctx, u, w, fd)
        grad1 = B @ gaussian.psd_pinv(Gram) @ (g.T @ S / N_mc)
        new = [W.W1 - eta[0] * grad1]
        for a in range(2, L + 1):
            Ta = th.pregrad_T(ctx, u, w, a, fd)
            new.append(W.W[a - 1] - eta[a - 1] * fd.G[a - 1].T @ Ta / N_mc)
        new[-1][:, 1:] = 0.0
        W = type(W0)(new)
        traj.append(W.copy())
    return traj


@dataclass
class SimplifiedSE:
    D: dict
    V: dict
    tau: dict
    delta: dict


def simplified_se(W0, mu_star, xi, acts, link, eta, T, N_mc=100000, seed=0):
    """Large-sample state evolution: only D_t and V_t, no Onsager memory."""
    L, q, n, m = W0.L, W0.q, W0.n, len(xi)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (L,))
    mu_q = np.zeros((n, q))
    mu_q[:, 0] = mu_star
    out = SimplifiedSE({-1: np.sqrt(n) * mu_q, 0: np.sqrt(n) * W0.W1},
                       {0: [w.copy() for w in W0.tail]}, {}, {})
    for t in range(1, T + 1):
        rng = stream(seed, 0, f"sse:{t}")
        k = rng.integers(0, m, size=N_mc)
        B = np.concatenate([out.D[t - 1], out.D[-1][:, :1]], axis=1) / np.sqrt(n)
        g = gaussian.sample(B.T @ B, N_mc, rng)
        u = g[:, :q]
        w = np.zeros((N_mc, q))
        w[:, 0] = g[:, q]
        ctx = th.TheoreticalContext(out.V[t - 1], acts, link, _xi_rows(xi, k, q))
        fd = th.Feed(ctx, u)
        Ju, Jw = th.row_jacobians_S(ctx, u, w, fd)
        tau = -eta[0] * Ju.mean(axis=0)
        delta = -eta[0] * Jw.mean(axis=0)
        out.tau[t], out.delta[t] = tau, delta
        out.D[t] = out.D[t - 1] @ (tau.T + np.eye(q)) + out.D[-1] @ delta.T
        Vs = []
        for a in range(2, L + 1):
            Ta = th.pregrad_T(ctx, u, w, a, fd)
            Vs.append(out.V[t - 1][a - 2] - eta[a - 1] * fd.G[a - 1].T @ Ta / N_mc)
        out.V[t] = Vs
    return out


# ---- effective signal --------------------------------------------------

def effective_signal(st, t=None):
    """(m_W, M_W, U_eff) at iteration t from the Onsager matrices and delta."""
    t = st.t if t is None else t
    q = st.q
    e1 = np.zeros(q)
    e1[0] = 1.0
    mW = {0: np.zeros(q)}
    MW = {0: np.eye(q)}
    for r in range(1, t + 1):
        a = st.delta[r] @ e1
        B = np.zeros((q, q))
        for s in range(1, r + 1):
            F = st.tau[(r, s)] + (np.eye(q) if s == r else 0.0)
            a = a + F @ mW[s - 1]
            B = B + F @ MW[s - 1]
        mW[r], MW[r] = a, B
    U_eff = np.outer(st.mu_star, mW[t]) + st.W0.W1 @ MW[t].T
    return mW[t], MW[t], U_eff


def effective_signal_large_sample(sse, W0, mu_star, t):
    q = W0.q
    e1 = np.zeros(q)
    e1[0] = 1.0
    m, M = np.zeros(q), np.eye(q)
    for r in range(1, t + 1):
        F = sse.tau[r] + np.eye(q)
        m = sse.delta[r] @ e1 + F @ m
        M = F @ M
    return m, M, np.outer(mu_star, m) + W0.W1 @ M.T


def sigma_W1(st, mW, MW, t):
    """Predicted W1^(t)T W1^(t): signal, initialization and cross terms plus Omega."""
    mu, W1 = st.mu_star, st.W0.W1
    return (mu @ mu * np.outer(mW, mW) + MW @ W1.T @ W1 @ MW.T
            + np.outer(mW, mu @ W1) @ MW.T + MW @ np.outer(W1.T @ mu, mW)
            + st.omega(t, t))


def learned_map(v, acts, u):
    """h_v(u) = H_{v_{2:L}}(u): the network output as a function of W1^T x."""
    ctx = th.TheoreticalContext(v, acts, None)
    return th.Feed(ctx, u).H[len(v) + 1]


def sample_learned_model(st, U_eff, N, rng, t=None, x=None):
    """Samples of h_{V^(t)}(U_eff^T x + Omega_tt^{1/2} Z)."""
    t = st.t if t is None else t
    x = rng.standard_normal((N, st.n)) if x is None else x
    Z = rng.standard_normal((x.shape[0], st.q))
    u = x @ U_eff + Z @ gaussian.psd_sqrt(st.omega(t, t)).T
    return learned_map(st.V[t], st.acts, u)


# ---- serialization -----------------------------------------------------

def write_csv(st, path):
    """Flattened SE parameters, one row per (t, name, i, j)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "name", "s", "i", "j", "value"])

        def put(t, name, s, M):
            for (i, j), val in np.ndenumerate(np.atleast_2d(M)):
                w.writerow([t, name, s, i + 1, j + 1, repr(float(val))])

        for t in range(1, st.t + 1):
            for s in range(1, t + 1):
                put(t, "tau", s, st.tau[(t, s)])
                put(t, "rho", s, st.rho[(t, s)])
                put(t, "Sigma", s, st.Sigma[(t, s)])
                put(t, "Omega", s, st.Omega[(t, s)])
            put(t, "delta", 0, st.delta[t])
            for a, Va in enumerate(st.V[t], start=2):
                put(t, f"V{a}", 0, Va)
