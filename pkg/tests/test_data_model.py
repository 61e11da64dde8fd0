import csv

import numpy as np
import pytest

from gdse import data_model as dm
from gdse import network as nw
from gdse.activations import registry_get


def test_signal_has_unit_expected_norm():
    rng = np.random.default_rng(1)
    n, draws = 40, 4000
    sq = np.array([np.sum(dm.generate_signal(n, rng) ** 2) for _ in range(draws)])
    # ||mu||^2 ~ chi2_n / n: mean 1, variance 2 / n
    assert abs(sq.mean() - 1.0) < 4 * np.sqrt(2.0 / n / draws)
    with pytest.raises(ValueError):
        dm.generate_signal(0, rng)


@pytest.mark.parametrize("dist", ["gaussian", "t10", "student_t:5"])
def test_features_unit_variance(dist):
    X = dm.generate_features(200000, 2, dist, np.random.default_rng(2))
    assert np.allclose(X.var(axis=0), 1.0, atol=0.03)
    assert np.allclose(X.mean(axis=0), 0.0, atol=0.01)


def test_feature_dist_parse():
    assert dm.FeatureDist.parse("normal") == dm.GAUSSIAN
    assert dm.FeatureDist.parse("t10") == dm.FeatureDist("student_t", 10.0)
    assert dm.FeatureDist.parse("student_t:7.5").df == 7.5
    assert dm.FeatureDist.parse("t7.5").label() == "t7.5"
    for bad in ("cauchy", "t2", "student_t:1"):
        with pytest.raises(ValueError):
            dm.FeatureDist.parse(bad)


def test_responses_exact(rng):
    link = registry_get("tanh")
    mu = dm.generate_signal(6, rng)
    inst = dm.make_instance(20, 6, link, 0.4, rng, mu)
    assert np.array_equal(inst.Y, np.tanh(inst.X @ mu) + inst.xi)
    assert np.allclose(inst.regression(inst.X), inst.Y - inst.xi, atol=1e-15)
    quiet = dm.make_instance(20, 6, link, 0.0, rng, mu)
    assert np.array_equal(quiet.xi, np.zeros(20))


def test_multi_index_responses(rng):
    U = dm.generate_multi_index_signal(3, 8, rng)
    inst = dm.make_multi_index_instance(30, 8, U, 0.2, rng)
    ref = np.tanh(np.sqrt(sum((inst.X @ U[j]) ** 2 for j in range(3))))
    assert np.allclose(inst.Y - inst.xi, ref)
    assert np.allclose(inst.regression(inst.X), ref)


def test_augment_first_column(rng):
    inst = dm.make_instance(7, 4, registry_get("tanh"), 0.3, rng, dm.generate_signal(4, rng))
    v = dm.augment(inst, 3)
    assert np.array_equal(v.Y_q[:, 0], inst.Y) and not v.Y_q[:, 1:].any()
    assert np.array_equal(v.xi_q[:, 0], inst.xi) and not v.xi_q[:, 1:].any()
    assert np.array_equal(v.mu_star_q[:, 0], inst.mu_star) and not v.mu_star_q[:, 1:].any()
    assert np.array_equal(dm.first_column(inst.Y, 3), v.Y_q)
    with pytest.raises(ValueError):
        dm.augment(inst, 0)


def test_scale_bound_by_hand():
    W = nw.NetworkParams([np.array([[0.5, -1.0], [0.0, 0.2]]), np.array([[3.0, 0.0], [4.0, 0.0]])])
    mu, xi = np.array([0.1, -0.3]), np.array([0.5, -2.0])
    # 1 + sqrt(2)*0.3 + 2 + sqrt(2)*1 + spectral norm 5
    assert np.isclose(dm.scale_bound(mu, xi, W), 8.0 + 1.3 * np.sqrt(2))


def test_instance_csv(tmp_path, rng):
    inst = dm.make_instance(5, 3, registry_get("tanh"), 0.3, rng, dm.generate_signal(3, rng))
    p = tmp_path / "inst.csv"
    inst.to_csv(p)
    with open(p) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    assert np.array_equal([float(r["y"]) for r in rows], inst.Y)
    assert np.array_equal([float(r["x2"]) for r in rows], inst.X[:, 1])
    assert np.array_equal([float(r["mu_star"]) for r in rows[:3]], inst.mu_star)
