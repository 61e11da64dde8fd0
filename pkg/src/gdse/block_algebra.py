"""Square grids of q x q blocks.

A ``BlockMatrix`` with ``t`` block rows stores its entries as an array of
shape ``(t, t, q, q)``; ``t = 0`` is the empty matrix.  The flattened view is
the ordinary ``(t*q) x (t*q)`` matrix with block ``(r, s)`` occupying rows
``r*q:(r+1)*q`` and columns ``s*q:(s+1)*q``.
"""
import numpy as np


class BlockMatrix:
    __slots__ = ("blocks",)

    def __init__(self, blocks):
        b = np.asarray(blocks, dtype=float)
        if b.ndim != 4 or b.shape[0] != b.shape[1] or b.shape[2] != b.shape[3]:
            raise ValueError(f"expected shape (t, t, q, q), got {b.shape}")
        self.blocks = b

    @property
    def t(self):
        return self.blocks.shape[0]

    @property
    def q(self):
        return self.blocks.shape[2]

    @classmethod
    def empty(cls, q):
        return cls(np.zeros((0, 0, q, q)))

    @classmethod
    def zeros(cls, t, q):
        return cls(np.zeros((t, t, q, q)))

    @classmethod
    def from_dense(cls, A, q):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % q:
            raise ValueError(f"cannot split {A.shape} into {q}x{q} blocks")
        t = A.shape[0] // q
        return cls(A.reshape(t, q, t, q).transpose(0, 2, 1, 3))

    def dense(self):
        t, q = self.t, self.q
        return self.blocks.transpose(0, 2, 1, 3).reshape(t * q, t * q)

    def __getitem__(self, idx):
        return self.blocks[idx]

    def copy(self):
        return BlockMatrix(self.blocks.copy())

    def transpose_blocks(self):
        """Transpose every block, keeping its position in the grid."""
        return BlockMatrix(self.blocks.transpose(0, 1, 3, 2))

    def _check(self, other):
        if not isinstance(other, BlockMatrix):
            raise TypeError("expected a BlockMatrix")
        if other.t != self.t or other.q != self.q:
            raise ValueError(
                f"block dimension mismatch: ({self.t},{self.q}) vs ({other.t},{other.q})")

    def __add__(self, other):
        self._check(other)
        return BlockMatrix(self.blocks + other.blocks)

    def __sub__(self, other):
        self._check(other)
        return BlockMatrix(self.blocks - other.blocks)

    def __neg__(self):
        return BlockMatrix(-self.blocks)

    def __mul__(self, c):
        return BlockMatrix(self.blocks * float(c))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return block_matmul(self, other)

    def __repr__(self):
        return f"BlockMatrix(t={self.t}, q={self.q})"


def block_identity(t, q):
    if t < 1:
        raise ValueError("block_identity needs t >= 1")
    b = np.zeros((t, t, q, q))
    b[np.arange(t), np.arange(t)] = np.eye(q)
    return BlockMatrix(b)


def shift_embed(N, q=None):
    """Embed a t x t block matrix into a (t+1) x (t+1) one.

    The first block row and last block column are zero and N fills the
    lower-left corner, so block (r+1, s) of the result is block (r, s) of N.
    ``N`` may be ``None`` (with ``q`` given) or an empty BlockMatrix.
    """
    if N is None:
        if q is None:
            raise ValueError("q required for an empty argument")
        N = BlockMatrix.empty(q)
    t, q = N.t, N.q
    out = np.zeros((t + 1, t + 1, q, q))
    out[1:, :t] = N.blocks
    return BlockMatrix(out)


def block_matmul(A, B):
    if A.q != B.q or A.t != B.t:
        raise ValueError(f"block dimension mismatch: ({A.t},{A.q}) vs ({B.t},{B.q})")
    return BlockMatrix(np.einsum("ruij,usjk->rsik", A.blocks, B.blocks))


def is_unit_lower(M, tol=0.0):
    t, q = M.t, M.q
    eye = np.eye(q)
    for r in range(t):
        if np.max(np.abs(M.blocks[r, r] - eye), initial=0.0) > tol:
            return False
        for s in range(r + 1, t):
            if np.max(np.abs(M.blocks[r, s]), initial=0.0) > tol:
                return False
    return True


def solve_unit_lower(M, B, check=True):
    """Solve M X = B for unit block-lower-triangular M by forward substitution.

    ``B`` is either a BlockMatrix with the same grid or an array of shape
    ``(t, k, q, q)`` holding k block columns.
    """
    Bb = B.blocks if isinstance(B, BlockMatrix) else np.asarray(B, dtype=float)
    if Bb.shape[0] != M.t or Bb.shape[2:] != (M.q, M.q):
        raise ValueError(f"rhs shape {Bb.shape} does not fit ({M.t},{M.q})")
    if check and not is_unit_lower(M):
        raise ValueError("matrix is not unit block-lower-triangular")
    X = np.empty_like(Bb)
    for r in range(M.t):
        acc = Bb[r].copy()
        for s in range(r):
            acc -= M.blocks[r, s] @ X[s]
        X[r] = acc
    return BlockMatrix(X) if isinstance(B, BlockMatrix) else X
