"""Acceptance criteria 1-12 at their stated tolerances.

Each test prints one summary line; the lines are collected and repeated in
the pytest terminal summary.  Criteria 6-11 run at desk scale (minutes).
"""
import pytest

from gdse import checks

from conftest import ACCEPTANCE_LINES


def _report(number, results, expect_flag=False):
    results = results if isinstance(results, list) else [results]
    if expect_flag:
        ok = all(r.status == checks.FLAGGED and "tracking fails" in r.detail for r in results)
    else:
        ok = all(r.status == checks.PASS for r in results)
    detail = "; ".join(r.line() for r in results)
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_gradient_exactness():
    _report(1, checks.check_gradients())


def test_criterion_02_identification():
    _report(2, checks.check_identification())


def test_criterion_03_onsager_oracles():
    _report(3, checks.check_onsager())


def test_criterion_04_block_algebra():
    _report(4, checks.check_block_algebra())


def test_criterion_05_effective_signal():
    _report(5, checks.check_effective_signal())


@pytest.mark.slow
def test_criterion_06_se_train_error():
    _report(6, checks.check_se_train())


@pytest.mark.slow
def test_criterion_07_estimator_tracking():
    _report(7, checks.check_tracking())


@pytest.mark.slow
def test_criterion_08_large_sample():
    _report(8, checks.check_large_sample())


@pytest.mark.slow
def test_criterion_09_representation():
    _report(9, checks.check_representation())


@pytest.mark.slow
def test_criterion_10_multi_index():
    _report(10, checks.check_multi_index())


@pytest.mark.slow
def test_criterion_11_relu_flagged():
    _report(11, checks.check_relu_control(), expect_flag=True)


def test_criterion_12_determinism():
    _report(12, checks.check_determinism())
