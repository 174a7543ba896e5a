"""
Tests des règles de quadrature
"""
import math

import numpy as np
import pytest

from app.services.quadrature_service import (
    GridMeasure, QMCMeasure, RadialRule, angular_rule, decade_edges, quadrature_service
)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_angular_rule_integrates_polynomials(d):
    x, w = angular_rule(d, 24)
    area = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    assert w.sum() == pytest.approx(area, rel=1e-12)
    # ∫ (ê·ξ̂)² dσ = |S^{d-1}| / d
    assert np.dot(w, x ** 2) == pytest.approx(area / d, rel=1e-12)


def test_angular_rule_in_one_dimension():
    x, w = angular_rule(1, 24)
    assert x.tolist() == [1.0, -1.0]
    assert w.sum() == 2.0


def test_decade_edges():
    edges, tail = decade_edges(250.0)
    assert edges[0] == 0.0 and edges[-1] == 250.0 and not tail
    assert 100.0 in edges
    edges, tail = decade_edges(math.inf)
    assert tail


def test_radial_gaussian():
    value, error = quadrature_service.radial(lambda r: math.exp(-r * r), math.inf, 3,
                                               rel_tol=1e-10)
    assert value == pytest.approx(math.pi ** 1.5, rel=1e-8)
    assert error < 1e-6


def test_radial_ball_volume():
    value, _ = quadrature_service.radial(lambda r: 1.0, 2.0, 3)
    assert value == pytest.approx(32.0 * math.pi / 3.0, rel=1e-10)


def test_radial_angular_average():
    # ∫_{|ξ|≤1} (ê·ξ)² dξ = 4π/15
    value, _ = quadrature_service.radial_angular(lambda r, x: (r * x) ** 2, 1.0, 3)
    assert value == pytest.approx(4.0 * math.pi / 15.0, rel=1e-10)


def test_radial_rule_volume():
    rule = RadialRule(10.0, 3)
    assert rule.volume_weights.sum() == pytest.approx(4.0 * math.pi * 1000.0 / 3.0, rel=1e-8)
    assert rule.r.max() < 10.0
    coarse = rule.coarse()
    assert len(coarse.r) < len(rule.r)


def test_grid_measure_nodes():
    points = np.array([[0.0, 1.0], [2.0, 0.0], [0.0, -3.0]])
    weights = np.array([0.5, 1.0, 2.0])
    measure = GridMeasure(points, weights)
    xi, w = measure.nodes(2)
    assert xi.shape == (9, 2, 2)
    assert w.sum() == pytest.approx(weights.sum() ** 2)
    xi0, w0 = measure.nodes(0)
    assert xi0.shape == (1, 0, 2) and w0.tolist() == [1.0]


def test_qmc_gaussian_integral():
    measure = QMCMeasure(3, 2 ** 14, seed=3)
    xi, w = measure.nodes(1)
    value = np.sum(w * np.exp(-np.sum(xi[:, 0] ** 2, axis=1)))
    assert value == pytest.approx(math.pi ** 1.5, rel=2e-2)


def test_qmc_is_reproducible():
    first = QMCMeasure(2, 256, seed=11).nodes(2)
    second = QMCMeasure(2, 256, seed=11).nodes(2)
    other = QMCMeasure(2, 256, seed=12).nodes(2)
    assert np.array_equal(first[0], second[0])
    assert not np.array_equal(first[0], other[0])


def test_qmc_depth_budget():
    measure = QMCMeasure(3, 2 ** 14, seed=1)
    assert measure.for_depth(1) is measure
    assert measure.for_depth(2).points == 2 ** 7
    assert measure.for_depth(4).points == 2 ** 5
