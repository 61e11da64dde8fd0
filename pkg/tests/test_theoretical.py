import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdse import data_model as dm
from gdse import network as nw
from gdse import theoretical as th

from conftest import make_problem

H = 1e-6


def _setup(seed, **kw):
    inst, W, acts = make_problem(seed, **kw)
    v = dm.augment(inst, W.q)
    ctx = th.TheoreticalContext(W.tail, acts, inst.link, v.xi_q)
    return inst, W, acts, ctx, inst.X @ W.W1, inst.X @ v.mu_star_q


def _central(f, x, k, ell):
    E = th.unit(x.shape, k, ell)
    return (f(x + H * E) - f(x - H * E)) / (2 * H)


def test_feed_matches_network(problem):
    inst, W, acts, ctx, u, w = _setup(0)
    cache = nw.forward(inst.X, W, acts)
    for a in range(1, W.L + 1):
        assert np.allclose(th.preact(ctx, u, a), cache.H[a], atol=1e-14)
        assert np.allclose(th.act_out(ctx, u, a), cache.G[a], atol=1e-14)
        assert np.allclose(th.act_deriv(ctx, u, a), cache.Gp[a], atol=1e-14)


def test_pregradients_match_backprop():
    inst, W, acts, ctx, u, w = _setup(1)
    Yq = dm.augment(inst, W.q).Y_q
    cache = nw.forward(inst.X, W, acts)
    pre = nw.backward(W, cache, Yq)
    assert np.allclose(th.pregrad_S(ctx, u, w), pre[1], atol=1e-14)
    for a in range(2, W.L + 1):
        assert np.allclose(th.pregrad_T(ctx, u, w, a), pre[a], atol=1e-14)
    # first-layer gradient is X^T S / m
    g1 = nw.gradients(W, inst.X, Yq, acts)[0]
    assert np.allclose(inst.X.T @ th.pregrad_S(ctx, u, w) / inst.m, g1, atol=1e-14)


@given(seed=st.integers(0, 10 ** 6), k=st.integers(0, 7), ell=st.integers(0, 2),
       act=st.sampled_from(["sigmoid", "tanh"]))
@settings(max_examples=30, deadline=None)
def test_partials_vs_finite_differences(seed, k, ell, act):
    inst, W, acts, ctx, u, w = _setup(seed, act=act)
    z = np.random.default_rng(seed).standard_normal(u.shape)
    tol = 1e-7
    for a in range(1, W.L + 1):
        fd = _central(lambda x: th.preact(ctx, x, a), u, k, ell)
        assert np.max(np.abs(th.partial(ctx, "H", u, None, k, ell, a) - fd)) < tol
        fd = _central(lambda x: th.backprop_tail(ctx, x, z, a), u, k, ell)
        assert np.max(np.abs(th.partial(ctx, "P_u", u, z, k, ell, a) - fd)) < tol
        fd = _central(lambda x: th.backprop_tail(ctx, u, x, a), z, k, ell)
        assert np.max(np.abs(th.partial(ctx, "P_z", u, None, k, ell, a) - fd)) < tol
    for b in range(2, W.L + 1):
        fd = _central(lambda x: th.backprop_layer(ctx, x, z, b), u, k, ell)
        assert np.max(np.abs(th.partial(ctx, "P_layer_u", u, z, k, ell, b) - fd)) < tol
    fd = _central(lambda x: th.pregrad_S(ctx, x, w), u, k, ell)
    assert np.max(np.abs(th.partial(ctx, "S_u", u, w, k, ell) - fd)) < tol
    fd = _central(lambda x: th.pregrad_S(ctx, u, x), w, k, ell)
    assert np.max(np.abs(th.partial(ctx, "S_w", u, w, k, ell) - fd)) < tol


@given(seed=st.integers(0, 10 ** 6))
@settings(max_examples=20, deadline=None)
def test_row_separable(seed):
    inst, W, acts, ctx, u, w = _setup(seed)
    perm = np.random.default_rng(seed).permutation(u.shape[0])
    ctx_p = ctx.with_noise(ctx.xi_q[perm])
    assert np.allclose(th.pregrad_S(ctx_p, u[perm], w[perm]), th.pregrad_S(ctx, u, w)[perm],
                       atol=1e-15)
    # a partial with respect to row k leaves every other row untouched
    d = th.partial(ctx, "S_u", u, w, 2, 1)
    assert not np.delete(d, 2, axis=0).any()


def test_row_jacobians_vs_entrywise():
    inst, W, acts, ctx, u, w = _setup(4)
    Ju, Jw = th.row_jacobians_S(ctx, u, w)
    for k in range(u.shape[0]):
        for c in range(u.shape[1]):
            assert np.allclose(Ju[k, :, c], th.partial(ctx, "S_u", u, w, k, c)[k], atol=1e-14)
            assert np.allclose(Jw[k, :, c], th.partial(ctx, "S_w", u, w, k, c)[k], atol=1e-14)
    # only the first column of w carries the signal
    assert not Jw[:, :, 1:].any()


def test_link_on_first_column(rng):
    link = make_problem(0)[0].link
    w = rng.standard_normal((5, 3))
    for order in range(3):
        out = th.link_q(link, w, order)
        assert not out[:, 1:].any()
    assert np.array_equal(th.link_q(link, w)[:, 0], np.tanh(w[:, 0]))


def test_argument_checks():
    inst, W, acts, ctx, u, w = _setup(0)
    with pytest.raises(ValueError):
        th.preact(ctx, u, W.L + 1)
    with pytest.raises(ValueError):
        th.backprop_layer(ctx, u, u, 1)
    with pytest.raises(ValueError):
        th.partial(ctx, "Q", u)
    with pytest.raises(IndexError):
        th.partial(ctx, "S_u", u, w, k=u.shape[0])
