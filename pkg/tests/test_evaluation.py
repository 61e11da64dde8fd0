import numpy as np
import pytest
from hypothesis import given, strategies as st

from gdse import data_model as dm
from gdse import evaluation as ev
from gdse import network as nw


def test_noise_average_is_exact(problem, rng):
    inst, W, acts = problem
    x = rng.standard_normal((50, inst.n))
    est, _ = ev.test_error_mc(W, acts, inst.mu_star, inst.link, inst.xi, "gaussian", 0, None,
                              x_new=x)
    # brute force: every test point paired with every training noise value
    e = np.tanh(x @ inst.mu_star) - nw.predict(x, W, acts)
    ref = np.mean((e[:, None] + inst.xi[None, :]) ** 2)
    assert abs(est - ref) < 1e-13


def test_perfect_fit_leaves_noise(problem, rng):
    inst, W, acts = problem
    est, se = ev.test_error_mc(W, acts, inst.mu_star, inst.link, inst.xi, "gaussian", 100, rng,
                               target=lambda x: nw.predict(x, W, acts))
    assert np.isclose(est, np.mean(inst.xi ** 2))
    assert se < 1e-15


def test_batching_is_invisible(problem, rng):
    inst, W, acts = problem
    x = rng.standard_normal((101, inst.n))
    a = ev.test_error_mc(W, acts, inst.mu_star, inst.link, inst.xi, "gaussian", 0, None, x_new=x)
    b = ev.test_error_mc(W, acts, inst.mu_star, inst.link, inst.xi, "gaussian", 0, None, x_new=x,
                         batch=7)
    assert np.allclose(a, b, rtol=1e-13)
    with pytest.raises(ValueError):
        ev.test_error_mc(W, acts, inst.mu_star, inst.link, inst.xi, "gaussian", 1, rng)


def test_train_error_twice_loss(problem):
    inst, W, acts = problem
    Yq = dm.augment(inst, W.q).Y_q
    assert np.isclose(ev.train_error(W, inst.X, Yq, acts), 2 * nw.loss(W, inst.X, Yq, acts))


def test_error_record_gap():
    r = ev.ErrorRecord(3, train=0.2, test=0.5)
    assert np.isclose(r.gap, 0.3) and np.isclose(ev.gap(r), 0.3)


@given(seed=st.integers(0, 2 ** 31), d=st.integers(1, 4))
def test_panel_bounded_and_lipschitz(seed, d):
    rng = np.random.default_rng(seed)
    panel = ev.BLPanel.make(d, rng, size=20)
    y1, y2 = rng.standard_normal((2, 30, d)) * 3
    f1 = np.stack([panel.evaluate(y[None]) for y in y1])
    f2 = np.stack([panel.evaluate(y[None]) for y in y2])
    assert np.all(np.abs(f1) <= 1.0)
    dist = np.linalg.norm(y1 - y2, axis=1)
    assert np.all(np.abs(f1 - f2) <= dist[:, None] + 1e-12)


def test_panel_discrepancy(rng):
    panel = ev.BLPanel.make(1, rng)
    a = rng.standard_normal(5000)
    assert panel.discrepancy(a, a) == 0.0
    b = a + 0.5
    assert panel.discrepancy(a, b) == panel.discrepancy(b, a)
    assert 0.0 < panel.discrepancy(a, b) <= 0.5
    assert np.allclose(panel.evaluate(a, batch=333), panel.evaluate(a))
