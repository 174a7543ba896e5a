"""
Tests des noyaux : poids ρ, θ_{1,1}, θ_{1,0}, produits ⋆_ℓ et τ
"""
import math

import numpy as np
import pytest

from app.exceptions import DomainError
from app.models.physics import StarCase
from app.schemas.kernel import QuadSpec
from app.services.exponent_service import exponent_service
from app.services.kernel_service import kernel_service
from app.services.quadrature_service import GridMeasure


@pytest.fixture
def measure():
    points = np.array([[0.4, 0.0, 0.0], [0.0, -0.9, 0.0], [0.3, 0.3, 1.2]])
    return GridMeasure(points, np.array([0.7, 1.3, 0.4]))


def test_theta_1_1_closed_form(quadratic_model):
    q, r, p = [0.5, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.2]
    E = 2.0
    expected = -1.0 / ((1.0 + 0.25 + 1.0 + 0.04) + E + 1.25 + 2.0)
    assert kernel_service.theta_1_1(quadratic_model, q, r, p, E) == pytest.approx(expected)
    handle = kernel_service.algebra(quadratic_model).theta_1_1()
    assert handle([q], [r], p, E) == pytest.approx(expected)
    assert handle.arity == (1, 1)


def test_theta_1_1_needs_positive_energy(quadratic_model):
    with pytest.raises(DomainError):
        kernel_service.theta_1_1(quadratic_model, [0, 0, 0], [0, 0, 0], [0, 0, 0], 0.0)
    handle = kernel_service.algebra(quadratic_model).theta_1_1()
    with pytest.raises(DomainError):
        handle.batch(np.zeros((2, 1, 3)), np.zeros((2, 1, 3)), np.zeros((2, 3)), [1.0, -1.0])


def test_rho_weights(quadratic_model):
    # ρ_{1,λ}(q, E) = |v(q)| / (E + ω(q))^{(1+λ)/2}
    assert kernel_service.rho(quadratic_model, 1, 0.0, [[1.0, 0.0, 0.0]], 1.0) == pytest.approx(
        1.0 / math.sqrt(3.0))
    # ρ_2 : premier facteur |v(q_1)| / (E + ω(q_1) + ω(q_2))
    Q = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    expected = 1.0 / (1.0 + 2.0 + 1.0) * 1.0 / (1.0 + 1.0) ** 0.5
    assert kernel_service.rho(quadratic_model, 2, 0.0, Q, 1.0) == pytest.approx(expected)
    assert kernel_service.rho_tilde(quadratic_model, 2, 0.0, Q[::-1], 1.0) == pytest.approx(expected)
    with pytest.raises(DomainError):
        kernel_service.rho(quadratic_model, 2, 0.0, [[1.0, 0.0, 0.0]], 1.0)


def test_star_product_on_grid_matches_explicit_sum(quadratic_model, measure):
    algebra = kernel_service.algebra(quadratic_model, measure, cutoff=5.0)
    theta = algebra.theta_1_1()
    star = algebra.star(theta, theta, 1)
    assert star.arity == (1, 1)

    q, r, p, E = np.array([0.2, 0.0, 0.1]), np.array([0.0, 0.5, 0.0]), np.array([0.1, 0.1, 0.0]), 1.5
    expected = 0.0
    for xi, w in zip(measure.points, measure.weights):
        h = 1.0 / (quadratic_model.Omega(p + xi) + E + quadratic_model.omega(xi))
        expected += w * theta([q], [xi], p, E) * theta([xi], [r], p, E) * h
    assert star([q], [r], p, E) == pytest.approx(expected, rel=1e-12)


def test_star_without_contraction_shifts_energies(quadratic_model, measure):
    algebra = kernel_service.algebra(quadratic_model, measure)
    a, a_star = algebra.a(), algebra.a_star()
    product = algebra.star(a, a_star, 0)
    assert product.arity == (1, 1)
    q, r, p, E = np.array([0.3, 0.0, 0.0]), np.array([0.0, 0.2, 0.0]), np.zeros(3), 2.0
    # a H_0^{-1} a* sans contraction : v(r) v(q) / (Ω(q + r) + E + ω(q) + ω(r))
    expected = 1.0 / (quadratic_model.Omega(q + r) + E + quadratic_model.omega(q)
                      + quadratic_model.omega(r))
    assert product([q], [r], p, E) == pytest.approx(expected)


def test_star_rejects_excess_contractions(quadratic_model, measure):
    algebra = kernel_service.algebra(quadratic_model, measure)
    theta = algebra.theta_1_1()
    with pytest.raises(DomainError):
        algebra.star(theta, theta, 2)


def test_grid_theta_1_0_is_a_riemann_sum(quadratic_model, measure):
    algebra = kernel_service.algebra(quadratic_model, measure)
    theta = algebra.theta_1_0()
    p, E = np.array([0.1, 0.2, 0.0]), 3.0
    points, weights = measure.points, measure.weights
    model = quadratic_model
    shifted = model.Omega(p + points) + model.omega(points) + E
    reference = model.Omega(points) + model.omega(points) + model.E_0
    expected = -np.sum(weights * (1.0 / shifted - 1.0 / reference))
    assert theta([], [], p, E) == pytest.approx(expected, rel=1e-12)
    assert theta([], [], np.zeros(3), quadratic_model.E_0) == pytest.approx(0.0, abs=1e-15)


def test_theta_1_0_vanishes_at_subtraction_point(quadratic_model):
    assert kernel_service.theta_1_0(quadratic_model, [0.0, 0.0, 0.0], quadratic_model.E_0) == 0.0
    assert kernel_service.theta_1_0_cutoff(quadratic_model, [0.0, 0.0, 0.0], 1.0, 50.0) == pytest.approx(
        0.0, abs=1e-14)


def test_theta_1_0_needs_energy_above_one(quadratic_model):
    with pytest.raises(DomainError):
        kernel_service.theta_1_0(quadratic_model, [0.0, 0.0, 0.0], 0.5)


@pytest.mark.parametrize("p", [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]])
def test_theta_1_0_is_the_cutoff_limit(quadratic_model, p):
    limit = kernel_service.theta_1_0(quadratic_model, p, 3.0)
    truncated = kernel_service.theta_1_0_cutoff(quadratic_model, p, 3.0, 1e4)
    assert limit > 0.0
    assert truncated == pytest.approx(limit, rel=1e-2)


def test_theta_1_0_energy_derivative(quadratic_model):
    p, E, h, cutoff = [0.3, 0.0, 0.0], 2.0, 1e-3, 10.0
    plus = kernel_service.theta_1_0_cutoff(quadratic_model, p, E + h, cutoff)
    minus = kernel_service.theta_1_0_cutoff(quadratic_model, p, E - h, cutoff)
    derivative = kernel_service.theta_1_0_dE(quadratic_model, p, E, cutoff)
    assert derivative > 0.0
    assert (plus - minus) / (2.0 * h) == pytest.approx(derivative, rel=1e-4)


def test_rotation_invariance(quadratic_model):
    handle = kernel_service.algebra(quadratic_model).theta_1_1()
    assert kernel_service.rotation_defect(handle, rotations=20) < 1e-10


def test_theta_1_1_bound_constant(quadratic_model):
    # |θ_{1,1}| = 1/(Ω + E + ω_q + ω_r) ≤ 1/max(E + ω_q, E + ω_r) = min_s ρ_{1,s}(q) ρ_{1,-s}(r)
    handle = kernel_service.algebra(quadratic_model).theta_1_1()
    report = kernel_service.kernel_bound_constant(handle, samples=200, seed=5)
    assert report.arity == 1
    assert report.lambda_class == 0.0
    assert 0.0 < report.fitted_constant <= 1.0 + 1e-12


def test_exact_second_order_kernel_is_rotation_invariant(quadratic_model):
    # θ_{2,2} n'a aucune contraction : seulement des produits de H_0^{-1}
    handle = kernel_service.theta(quadratic_model, 2, 2, QuadSpec(qmc_points=64, seed=3), cutoff=50.0)
    assert handle.arity == (2, 2)
    assert kernel_service.rotation_defect(handle, rotations=20) < 1e-10


@pytest.mark.slow
@pytest.mark.parametrize("m", [0, 1, 2])
def test_second_order_bound_constant_is_cutoff_independent(quadratic_model, m):
    quad = QuadSpec(qmc_points=2 ** 10, seed=11)
    constants = []
    for cutoff in (1e2, 1e3, 1e4):
        handle = kernel_service.theta(quadratic_model, 2, m, quad, cutoff=cutoff)
        report = kernel_service.kernel_bound_constant(handle, samples=100, seed=5)
        assert report.arity == m
        constants.append(report.fitted_constant)
    assert all(0.0 < c < math.inf for c in constants)
    assert max(constants) <= 3.0 * min(constants)


def test_tau_preconditions(quadratic_model, measure):
    with pytest.raises(DomainError):
        kernel_service.tau(quadratic_model, (2,), (), (1,), measure)
    with pytest.raises(DomainError):
        kernel_service.tau(quadratic_model, (0, 1), (1,), (1, 1), measure)


def test_tau_single_factor_is_theta(quadratic_model, measure):
    tau = kernel_service.tau(quadratic_model, (1,), (), (1,), measure)
    assert tau.arity == (1, 1)
    assert tau.label == "θ11"


def test_theta_beyond_n_star(quadratic_model, measure):
    with pytest.raises(DomainError):
        kernel_service.theta(quadratic_model, 3, 0, measure)


def test_uncontracted_star_decay(quadratic_model):
    report = exponent_service.verify_star_exponents(quadratic_model, StarCase.ELL_ZERO)
    assert report.arity == 2
    assert report.fitted_decay == pytest.approx(3.0, abs=0.05)
    assert report.passed
