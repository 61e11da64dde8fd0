import numpy as np
import pytest

from gdse import data_model as dm
from gdse import network as nw
from gdse.activations import layer_acts, registry_get
from gdse.rng import stream

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_problem(seed, m=8, n=5, q=3, L=3, act="sigmoid", sigma_xi=0.3):
    rng = stream(seed, 0, "tests")
    acts = layer_acts(act, L)
    link = registry_get("tanh")
    mu = dm.generate_signal(n, rng)
    inst = dm.make_instance(m, n, link, sigma_xi, rng, mu)
    W = nw.init_gaussian(L, q, n, rng)
    return inst, W, acts


@pytest.fixture
def problem():
    return make_problem(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
