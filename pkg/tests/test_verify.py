"""Test the property suites"""

import numpy as np
import pytest

from dacsm.schemas import VerifySuite
from dacsm.verify import (
    SUITES,
    constructed_specialization,
    gradient_suite,
    query_consistency_suite,
    scale_matching_suite,
    separated_patch_sets,
    temperature_limit_suite,
    trained_specialization,
)


def _by_name(results):
    return {r.name: r for r in results}


def test_separated_patch_sets():
    """Test the margin between best and second-best style match"""
    content, style = separated_patch_sets(np.random.default_rng(0))
    np.testing.assert_allclose(np.linalg.norm(content, axis=1), 1.0)
    top2 = np.sort(content @ style.T, axis=1)[:, -2:]
    assert (top2[:, 1] - top2[:, 0]).min() >= 0.05


def test_temperature_limit_suite():
    """Test the zero- and infinite-temperature limits"""
    results = temperature_limit_suite(seed=0)
    assert len(results) == 3
    assert all(r.passed for r in results)
    assert {r.suite for r in results} == {VerifySuite.TEMPERATURE_LIMIT.value}
    metrics = results[0].metrics
    assert metrics["tau=0.001"] < metrics["tau=1"]


def test_query_consistency_suite():
    """Test that the two proven inequalities hold on random instances"""
    results = _by_name(query_consistency_suite(seed=0, instances=20))
    assert results["Pinsker bound"].passed
    assert results["smallest singular value bound"].passed
    assert results["Pinsker bound"].metrics["rows"] == 80.0
    assert results["combined KL bound (reported only)"].passed
    assert 0.0 <= results["combined KL bound (reported only)"].metrics["violation_rate"] <= 1.0
    residual = results["key/value residual raises attention divergence"]
    assert residual.passed
    assert residual.metrics["key_value_residual"] > residual.metrics["query_residual"] >= 0.0


def test_constructed_specialization():
    """Test that well-separated sub-centers each win at their own scale"""
    selection = constructed_specialization(seed=0)
    assert selection.shape == (4, 3, 3)
    np.testing.assert_allclose(selection.sum(axis=2), 1.0)
    assert all(np.diag(p).min() > 0.95 for p in selection)


def test_scale_matching_suite_without_training():
    """Test the constructed and degenerate sub-center cases"""
    results = scale_matching_suite(seed=0, with_training=False)
    assert [r.name for r in results] == [
        "constructed sub-centers specialize",
        "one sub-center always wins",
        "ties select the first sub-center",
    ]
    assert all(r.passed for r in results)


def test_gradient_suite():
    """Test every differentiable op and the full loss"""
    results = gradient_suite(seed=0, trials=2)
    failed = [(r.name, r.metrics, r.detail) for r in results if not r.passed]
    assert failed == []
    names = {r.name for r in results}
    assert {"softmax", "attend", "distillation", "total_loss"} <= names
    assert _by_name(results)["attend"].detail == "worst of 2 trials"


@pytest.mark.slow
def test_gradient_suite_full_trials():
    """Test every differentiable op over one hundred seeded points"""
    results = gradient_suite(seed=0)
    assert [r.name for r in results if not r.passed] == []
    assert _by_name(results)["layer_norm"].detail == "worst of 100 trials"


def test_suite_registry():
    """Test that every concrete suite is registered"""
    assert set(SUITES) == set(VerifySuite) - {VerifySuite.ALL}


@pytest.mark.slow
def test_trained_specialization():
    """Test that brief training makes sub-centers prefer their own scale"""
    result = _by_name(scale_matching_suite(seed=0))
    assert result["trained sub-centers prefer their own scale"].passed
    assert trained_specialization().shape == (4, 3, 3)
