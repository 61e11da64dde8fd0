import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdse import data_model as dm
from gdse import network as nw
from gdse.activations import layer_acts, registry_get

from conftest import make_problem


def _fd_grad(W, X, Yq, acts, h=1e-6):
    out = []
    for a in range(W.L):
        g = np.zeros_like(W.W[a])
        for idx in np.ndindex(g.shape):
            Wp, Wm = W.copy(), W.copy()
            Wp.W[a][idx] += h
            Wm.W[a][idx] -= h
            g[idx] = (nw.loss(Wp, X, Yq, acts) - nw.loss(Wm, X, Yq, acts)) / (2 * h)
        out.append(g)
    return out


@given(seed=st.integers(0, 10 ** 6), L=st.integers(2, 4),
       act=st.sampled_from(["sigmoid", "tanh", "smoothed_relu"]))
@settings(max_examples=25, deadline=None)
def test_gradients_vs_finite_differences(seed, L, act):
    inst, W, acts = make_problem(seed, L=L, act=act)
    Yq = dm.augment(inst, W.q).Y_q
    for g, f in zip(nw.gradients(W, inst.X, Yq, acts), _fd_grad(W, inst.X, Yq, acts)):
        assert np.max(np.abs(g - f)) <= 1e-6 * max(1.0, np.max(np.abs(f)))


def test_last_layer_gradient_keeps_zero_columns(problem):
    inst, W, acts = problem
    Yq = dm.augment(inst, W.q).Y_q
    g = nw.gradients(W, inst.X, Yq, acts)
    assert not g[-1][:, 1:].any()
    W1 = nw.gd_step(W, g, 0.3)
    assert not W1.W[-1][:, 1:].any()
    with pytest.raises(ValueError):
        nw.gd_step(W, g, -1.0)


def test_structure_violation_raises(problem):
    _, W, _ = problem
    W.W[-1][0, 1] = 1e-300
    with pytest.raises(nw.StructureError):
        W.check_structure()


def test_init_scaling():
    rng = np.random.default_rng(3)
    W = nw.init_gaussian(3, 50, 400, rng)
    assert abs(np.mean(W.W1 ** 2) * 400 - 1.0) < 0.02
    assert abs(np.mean(W.W[1] ** 2) * 50 - 1.0) < 0.1
    assert not W.W[-1][:, 1:].any()
    with pytest.raises(ValueError):
        nw.init_gaussian(1, 2, 3, rng)


def test_loss_definition(problem):
    inst, W, acts = problem
    Yq = dm.augment(inst, W.q).Y_q
    out = nw.forward(inst.X, W, acts).output
    assert np.isclose(nw.loss(W, inst.X, Yq, acts), np.sum((Yq - out) ** 2) / (2 * inst.m))
    # padded output columns vanish, so only the first column contributes
    assert not out[:, 1:].any()
    assert np.array_equal(nw.predict(inst.X, W, acts), out[:, 0])


def test_forward_by_hand():
    X = np.array([[1.0, -1.0]])
    W = nw.NetworkParams([np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([[1.0, 0.0], [1.0, 0.0]])])
    acts = layer_acts("tanh", 2)
    # H1 = [1, -2], G1 = tanh(H1), output = tanh(1) + tanh(-2)
    assert np.isclose(nw.predict(X, W, acts)[0], np.tanh(1.0) + np.tanh(-2.0))


def test_pad_network_matches_varying_widths(rng):
    acts_f = registry_get("sigmoid")
    W_list = [rng.standard_normal((6, 4)), rng.standard_normal((4, 2)), rng.standard_normal((2, 1))]
    X = rng.standard_normal((10, 6))
    ref = acts_f.value(acts_f.value(X @ W_list[0]) @ W_list[1]) @ W_list[2]
    padded = nw.pad_network(W_list, 5)
    assert np.allclose(nw.predict(X, padded, layer_acts(acts_f, 3)), ref[:, 0])
    padded.check_structure()


def test_csv_round_trip(tmp_path, problem):
    _, W, _ = problem
    p = tmp_path / "w.csv"
    W.to_csv(p)
    back = nw.NetworkParams.from_csv(p)
    assert all(np.array_equal(a, b) for a, b in zip(W.W, back.W))


def test_shape_errors(problem):
    inst, W, acts = problem
    with pytest.raises(ValueError):
        nw.forward(inst.X[:, :-1], W, acts)
    with pytest.raises(ValueError):
        nw.forward(inst.X, W, acts[:-1])
    with pytest.raises(ValueError):
        nw.NetworkParams([np.zeros((3, 2)), np.zeros((3, 2))])
