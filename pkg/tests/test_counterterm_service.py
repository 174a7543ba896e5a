"""
Tests des contre-termes E_{Λ,n}
"""
import math

import numpy as np
import pytest

from app.exceptions import DomainError
from app.models.physics import FitModel, ProfileFamily
from app.schemas.kernel import QuadSpec
from app.schemas.model import ProfileSpec
from app.services.counterterm_service import at_rest, counterterm_service
from app.services.model_service import model_service


@pytest.fixture
def delta_three_halves_model(spec_factory):
    # d = 4, α = 1/4, γ = 2 : δ = 3/2, n_* = 4
    spec = spec_factory["quadratic"](d=4, alpha=0.25, g=0.5,
                                     v=ProfileSpec(family=ProfileFamily.POWER))
    return model_service.validate_model(spec)


@pytest.mark.parametrize("cutoff", [10.0, 1e3, 1e5])
def test_first_counterterm_closed_form(relativistic_model, cutoff):
    # d = 1, Ω = ω = √(1+k²), E_0 = 0 : E_{Λ,1} = -g² asinh Λ
    model = relativistic_model.with_updates(g=0.7)
    assert counterterm_service.E_1(model, cutoff) == pytest.approx(-0.49 * math.asinh(cutoff), rel=1e-8)


def test_first_counterterm_needs_positive_cutoff(relativistic_model):
    with pytest.raises(DomainError):
        counterterm_service.E_1(relativistic_model, 0.0)


def test_first_counterterm_scales_with_coupling(quadratic_model):
    weak = counterterm_service.E_1(quadratic_model, 100.0)
    strong = counterterm_service.E_1(quadratic_model.with_updates(g=3.0), 100.0)
    assert weak < 0.0
    assert strong == pytest.approx(9.0 * weak, rel=1e-9)


def test_second_counterterm_signs(quadratic_model):
    terms = counterterm_service.e2_terms(quadratic_model, 10.0)
    assert terms.positive_term > 0.0
    assert terms.negative_term < 0.0
    assert terms.total == pytest.approx(terms.positive_term + terms.negative_term)
    assert terms.error_estimate < 1e-2 * abs(terms.negative_term)


def test_second_counterterm_needs_finite_cutoff(quadratic_model):
    with pytest.raises(DomainError):
        counterterm_service.e2_terms(quadratic_model, math.inf)


def test_orders_beyond_n_star_are_rejected(quadratic_model, relativistic_model):
    with pytest.raises(DomainError):
        counterterm_service.E_n(quadratic_model, 10.0, 3)
    with pytest.raises(DomainError):
        counterterm_service.E_n(relativistic_model, 10.0, 2)


def test_counterterms_are_taken_at_rest(quadratic_model):
    moving = quadratic_model.with_updates(P=[0.4, 0.0, 0.0])
    assert not np.any(at_rest(moving).P)
    assert at_rest(quadratic_model) is quadratic_model
    assert counterterm_service.E_n(moving, 10.0, 2) == pytest.approx(
        counterterm_service.E_n(quadratic_model, 10.0, 2))


def test_grid_first_counterterm(quadratic_model):
    points = np.array([[1.0, 0.0, 0.0], [0.0, 3.0, 0.0]])
    weights = np.array([0.5, 2.0])
    expected = -(0.5 / 5.0 + 2.0 / 21.0)
    assert counterterm_service.grid_E_n(quadratic_model, points, weights, 1, 10.0) == pytest.approx(expected)
    # le second point est hors du cutoff
    assert counterterm_service.grid_E_n(quadratic_model, points, weights, 1, 2.0) == pytest.approx(-0.1)


def test_second_counterterm_scales_with_coupling(quadratic_model):
    # E_{Λ,n} est homogène de degré 2n en g
    weak = counterterm_service.E_n(quadratic_model, 50.0, 2)
    strong = counterterm_service.E_n(quadratic_model.with_updates(g=2.0), 50.0, 2)
    assert strong == pytest.approx(16.0 * weak, rel=1e-9)

    points = np.array([[0.4, 0.0, 0.0], [0.0, -0.9, 0.0], [0.3, 0.3, 1.2]])
    weights = np.array([0.7, 1.3, 0.4])
    weak = counterterm_service.grid_E_n(quadratic_model, points, weights, 2, 5.0)
    strong = counterterm_service.grid_E_n(quadratic_model.with_updates(g=2.0), points, weights, 2, 5.0)
    assert weak != 0.0
    assert strong == pytest.approx(16.0 * weak, rel=1e-9)


def test_third_counterterm_on_grid_scales_with_coupling(delta_three_halves_model):
    points = np.array([[0.4, 0.0, 0.0, 0.0], [0.0, -0.9, 0.0, 0.0], [0.3, 0.3, 1.2, -0.5]])
    weights = np.array([0.7, 1.3, 0.4])
    weak = counterterm_service.grid_E_n(delta_three_halves_model, points, weights, 3, 5.0)
    strong = counterterm_service.grid_E_n(delta_three_halves_model.with_updates(g=2.0),
                                          points, weights, 3, 5.0)
    assert weak != 0.0
    assert strong == pytest.approx(64.0 * weak, rel=1e-9)


@pytest.mark.slow
def test_third_counterterm_scales_with_coupling(delta_three_halves_model):
    quad = QuadSpec(qmc_points=2 ** 6, seed=7)
    weak = counterterm_service.E_n(delta_three_halves_model, 20.0, 3, quad)
    strong = counterterm_service.E_n(delta_three_halves_model.with_updates(g=2.0), 20.0, 3, quad)
    assert strong == pytest.approx(64.0 * weak, rel=1e-9)


def test_sweep_validates_cutoffs(quadratic_model):
    with pytest.raises(DomainError):
        counterterm_service.sweep(quadratic_model, [10.0, 100.0, 1000.0])
    with pytest.raises(DomainError):
        counterterm_service.sweep(quadratic_model, [10.0, 100.0, 50.0, 1000.0])


def test_sweep_without_counterterms(spec_factory):
    model = model_service.validate_model(spec_factory["quadratic"](d=1))
    table = counterterm_service.sweep(model, [1.0, 10.0, 100.0, 1000.0])
    assert table.orders == []
    assert table.totals == [0.0] * 4


def test_sweep_rows(relativistic_model):
    lambdas = [10.0, 100.0, 1000.0, 10000.0]
    table = counterterm_service.sweep(relativistic_model, lambdas)
    rows = table.rows()
    assert [row.cutoff for row in rows] == lambdas
    assert all(row.n == 1 for row in rows)
    assert table.totals == pytest.approx([-math.asinh(x) for x in lambdas], rel=1e-8)
    # δ = 0 : divergence logarithmique
    assert table.fits[0].model == FitModel.LOG
    assert table.fitted_exponents == ["log"]


def test_short_sweep_is_not_fitted(relativistic_model, caplog):
    table = counterterm_service.sweep(relativistic_model, [10.0, 20.0, 40.0, 80.0])
    assert table.fits == []
    assert "deux décades" in caplog.text


@pytest.mark.slow
def test_quadratic_sweep_divergences(quadratic_model):
    lambdas = np.logspace(2.0, 4.0, 5)
    table = counterterm_service.sweep(quadratic_model.with_updates(g=0.1), lambdas, threads=2)
    first, second = table.fits
    assert first.model == FitModel.POWER
    assert first.exponent == pytest.approx(1.0, abs=0.05)
    assert first.residual < first.competing_residual
    # coefficient du logarithme sans masse : π³√3/2 - π⁴/3, fois g⁴
    assert second.model == FitModel.LOG
    expected = (math.pi ** 3 * math.sqrt(3.0) / 2.0 - math.pi ** 4 / 3.0) * 0.1 ** 4
    assert second.coefficient == pytest.approx(expected, rel=0.1)
