import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdse.block_algebra import (BlockMatrix, block_identity, block_matmul, is_unit_lower,
                                shift_embed, solve_unit_lower)

dims = st.tuples(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2 ** 31))


def _unit_lower(rng, t, q):
    A = rng.standard_normal((t, t, q, q))
    A *= np.tril(np.ones((t, t)), -1)[:, :, None, None]
    return block_identity(t, q) + BlockMatrix(A)


@given(dims)
def test_dense_round_trip(d):
    t, q, seed = d
    A = np.random.default_rng(seed).standard_normal((t * q, t * q))
    B = BlockMatrix.from_dense(A, q)
    assert np.array_equal(B.dense(), A)
    # block (r, s) sits at rows r*q.., columns s*q..
    assert np.array_equal(B[t - 1, 0], A[(t - 1) * q:, :q])


@given(dims)
def test_matmul_matches_dense(d):
    t, q, seed = d
    rng = np.random.default_rng(seed)
    A, B = (BlockMatrix(rng.standard_normal((t, t, q, q))) for _ in range(2))
    assert np.allclose(block_matmul(A, B).dense(), A.dense() @ B.dense(), atol=1e-12)
    assert np.allclose((A @ B).dense(), A.dense() @ B.dense(), atol=1e-12)


@given(dims)
@settings(max_examples=50)
def test_solve_unit_lower_vs_dense_solve(d):
    t, q, seed = d
    rng = np.random.default_rng(seed)
    M = _unit_lower(rng, t, q)
    B = BlockMatrix(rng.standard_normal((t, t, q, q)))
    X = solve_unit_lower(M, B)
    ref = np.linalg.solve(M.dense(), B.dense())
    assert np.max(np.abs(X.dense() - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_solve_block_columns(rng):
    M = _unit_lower(rng, 4, 2)
    cols = rng.standard_normal((4, 3, 2, 2))
    X = solve_unit_lower(M, cols)
    for c in range(3):
        rhs = np.concatenate(cols[:, c], axis=0)
        assert np.allclose(np.concatenate(X[:, c], axis=0), np.linalg.solve(M.dense(), rhs))


def test_solve_rejects_non_unit(rng):
    M = _unit_lower(rng, 3, 2)
    M.blocks[1, 1, 0, 0] = 2.0
    assert not is_unit_lower(M)
    with pytest.raises(ValueError):
        solve_unit_lower(M, BlockMatrix.zeros(3, 2))
    M = _unit_lower(rng, 3, 2)
    M.blocks[0, 2, 1, 0] = 0.1
    assert not is_unit_lower(M)


def test_shift_embed_layout(rng):
    N = BlockMatrix(rng.standard_normal((3, 3, 2, 2)))
    O = shift_embed(N)
    assert O.t == 4
    ref = np.zeros((8, 8))
    ref[2:, :6] = N.dense()
    assert np.array_equal(O.dense(), ref)
    assert np.array_equal(shift_embed(None, q=3).dense(), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        shift_embed(None)


def test_identity_plus_shifted_product_is_unit_lower(rng):
    # (T + I) O(N) is strictly lower for lower T, N; so I + that is unit lower
    T = BlockMatrix(rng.standard_normal((4, 4, 2, 2)) * np.tril(np.ones((4, 4)))[:, :, None, None])
    N = BlockMatrix(rng.standard_normal((3, 3, 2, 2)) * np.tril(np.ones((3, 3)))[:, :, None, None])
    R = block_identity(4, 2) + (T + block_identity(4, 2)) @ shift_embed(N)
    assert is_unit_lower(R)


def test_transpose_blocks(rng):
    A = BlockMatrix(rng.standard_normal((3, 3, 2, 2)))
    assert np.array_equal(A.transpose_blocks().transpose_blocks().blocks, A.blocks)
    assert np.array_equal(A.transpose_blocks()[1, 2], A[1, 2].T)


def test_arithmetic_and_errors(rng):
    A = BlockMatrix(rng.standard_normal((2, 2, 3, 3)))
    assert np.allclose((A + A - A).blocks, A.blocks)
    assert np.allclose((2 * A).blocks, (A * 2).blocks)
    assert np.allclose((-A).blocks, -A.blocks)
    with pytest.raises(ValueError):
        A + BlockMatrix.zeros(3, 3)
    with pytest.raises(ValueError):
        A @ BlockMatrix.zeros(2, 2)
    with pytest.raises(ValueError):
        block_identity(0, 2)
    with pytest.raises(ValueError):
        BlockMatrix(np.zeros((2, 3, 2, 2)))
    with pytest.raises(ValueError):
        BlockMatrix.from_dense(np.zeros((5, 5)), 2)
    assert BlockMatrix.empty(3).t == 0
