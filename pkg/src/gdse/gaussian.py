"""Covariance square roots and conditional Gaussian extension."""
import numpy as np

PSD_TOL = 1e-10
NEG_TOL = 1e-8  # relative; anything more negative is a bug, not rounding
# conditional blocks of long, nearly singular paths lose a few more digits
COND_NEG_TOL = 1e-5


class NumericsError(RuntimeError):
    pass


def psd_sqrt(C, tol=PSD_TOL):
    """Symmetric square root of a PSD matrix after symmetrizing and clipping.

    Eigenvalues below ``tol * scale`` are zeroed; eigenvalues below
    ``-NEG_TOL * scale`` are treated as a numerics failure.
    """
    C = 0.5 * (C + C.T)
    if C.size == 0:
        return C.copy()
    w, Q = np.linalg.eigh(C)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w.min() < -NEG_TOL * scale:
        raise NumericsError(f"covariance has eigenvalue {w.min():.3e} (scale {scale:.3e})")
    w = np.where(w > tol * scale, w, 0.0)
    return (Q * np.sqrt(w)) @ Q.T


def psd_pinv(C, tol=PSD_TOL):
    C = 0.5 * (C + C.T)
    w, Q = np.linalg.eigh(C)
    scale = max(float(np.max(np.abs(w), initial=0.0)), 1e-300)
    inv = np.where(w > tol * scale, 1.0 / np.where(w > tol * scale, w, 1.0), 0.0)
    return (Q * inv) @ Q.T


def extend(past, C, rng, tol=PSD_TOL):
    """Draw the trailing block of a joint Gaussian given samples of the rest.

    past: (N, p) samples of the leading p coordinates (may be p = 0).
    C:    (p + d) x (p + d) joint covariance.
    Returns (N, d) samples with the correct conditional law, so the stacked
    samples follow N(0, C) whenever ``past`` follows N(0, C[:p, :p]).
    """
    N, p = past.shape
    d = C.shape[0] - p
    Z = rng.standard_normal((N, d))
    if p == 0:
        return Z @ psd_sqrt(C, tol).T
    Cpp, Cnp, Cnn = C[:p, :p], C[p:, :p], C[p:, p:]
    A = Cnp @ psd_pinv(Cpp, tol)
    cond = Cnn - A @ Cnp.T
    return past @ A.T + Z @ psd_sqrt(cond, tol).T


def sample(C, N, rng, tol=PSD_TOL):
    return rng.standard_normal((N, C.shape[0])) @ psd_sqrt(C, tol).T


class IncrementalFactor:
    """Block-triangular square root F of a growing covariance, F F^T = C.

    Samples are Z F^T with Z standard normal; each ``extend`` appends a block
    row and, if the new block carries fresh variance, new innovation columns.
    Working with F instead of C keeps the conditioning at sqrt(cond(C)).
    """

    def __init__(self, tol=PSD_TOL):
        self.F = np.zeros((0, 0))
        self.tol = tol

    @property
    def dim(self):
        return self.F.shape[0]

    @property
    def rank(self):
        return self.F.shape[1]

    def extend(self, C):
        """Grow to the joint covariance C; returns (G, B) for the new rows.

        New samples are Z_old @ G.T + Z_new @ B.T with B.shape[1] fresh normals.
        """
        p, r = self.F.shape
        d = C.shape[0] - p
        Cnp, Cnn = C[p:, :p], 0.5 * (C[p:, p:] + C[p:, p:].T)
        G = Cnp @ np.linalg.pinv(self.F.T, rcond=self.tol) if p else np.zeros((d, 0))
        resid = Cnn - G @ G.T
        w, Q = np.linalg.eigh(0.5 * (resid + resid.T))
        scale = max(1.0, float(np.max(np.abs(np.linalg.eigvalsh(Cnn)))))
        if w.min() < -COND_NEG_TOL * scale:
            raise NumericsError(f"conditional covariance has eigenvalue {w.min():.3e}")
        keep = w > self.tol * scale
        B = Q[:, keep] * np.sqrt(w[keep])
        F = np.zeros((p + d, r + B.shape[1]))
        F[:p, :r] = self.F
        F[p:, :r] = G
        F[p:, r:] = B
        self.F = F
        return G, B
