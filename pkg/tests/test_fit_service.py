"""
Tests des ajustements de divergence
"""
import numpy as np
import pytest

from app.exceptions import DomainError
from app.models.physics import FitModel
from app.services.fit_service import fit_service

LAMBDAS = np.logspace(2.0, 4.0, 5)


def test_power_law_is_recovered_exactly():
    exponent, prefactor, residual = fit_service.power_fit(LAMBDAS, -3.0 * LAMBDAS ** 1.5)
    assert exponent == pytest.approx(1.5, abs=1e-12)
    assert prefactor == pytest.approx(3.0, rel=1e-10)
    assert residual < 1e-12


def test_log_law_is_recovered_exactly():
    values = 0.7 * np.log1p(LAMBDAS) - 2.0
    coefficient, offset, residual = fit_service.log_fit(LAMBDAS, values)
    assert coefficient == pytest.approx(0.7, rel=1e-10)
    assert offset == pytest.approx(-2.0, rel=1e-10)
    assert residual < 1e-10


def test_model_selection():
    assert fit_service.select_model(1.0) == FitModel.POWER
    assert fit_service.select_model(0.0) == FitModel.LOG
    assert fit_service.select_model(-0.5) == FitModel.CONSTANT_LIMIT


def test_power_divergence_beats_log():
    fit = fit_service.fit_divergence(LAMBDAS, -2.0 * LAMBDAS, 1.0)
    assert fit.model == FitModel.POWER
    assert fit.exponent == pytest.approx(1.0)
    assert fit.competing_model == FitModel.LOG
    assert fit.residual < fit.competing_residual


def test_log_divergence_beats_power():
    fit = fit_service.fit_divergence(LAMBDAS, np.log1p(LAMBDAS) + 0.3, 0.0)
    assert fit.model == FitModel.LOG
    assert fit.coefficient == pytest.approx(1.0)
    assert fit.residual < fit.competing_residual


def test_convergent_sequence_has_a_limit():
    values = 5.0 - 2.0 * LAMBDAS ** -0.5
    fit = fit_service.fit_divergence(LAMBDAS, values, -0.5)
    assert fit.model == FitModel.CONSTANT_LIMIT
    assert fit.coefficient == pytest.approx(5.0)
    assert fit.offset == pytest.approx(-2.0)


def test_fit_needs_four_points():
    with pytest.raises(DomainError):
        fit_service.fit_divergence(LAMBDAS[:3], LAMBDAS[:3], 1.0)


def test_fit_needs_two_decades():
    lambdas = np.logspace(2.0, 3.5, 5)
    with pytest.raises(DomainError):
        fit_service.fit_divergence(lambdas, lambdas, 1.0)


def test_non_monotone_data_is_flagged(caplog):
    values = np.array([1.0, 3.0, 2.0, 4.0, 5.0])
    fit = fit_service.fit_divergence(LAMBDAS, values, 0.0)
    assert not fit.monotone
    assert "non monotones" in caplog.text


def test_decay_exponent():
    x = np.logspace(1.0, 3.0, 6)
    assert fit_service.decay_exponent(x, 4.0 * x ** -2.5) == pytest.approx(-2.5)
