"""
Tests des vérifications d'exposants
"""
import pytest

from app.exceptions import DomainError
from app.models.physics import StarCase
from app.services.exponent_service import exponent_service
from app.services.model_service import model_service


@pytest.fixture
def light_model(spec_factory):
    # c_b petit : les échelles a, b ≥ 10 dominent la masse
    return model_service.validate_model(spec_factory["quadratic"](c_b=0.01))


def test_predicted_exponents():
    assert exponent_service.predicted_exponents(0.5, 1.0, 1.0) == pytest.approx((0.0, -0.5))
    assert exponent_service.predicted_exponents(0.5, 2.0, 0.0) == pytest.approx((-0.5, 0.0))
    assert exponent_service.predicted_exponents(0.5, 2.0, 1.0) == pytest.approx((-0.5, -1.0))


@pytest.mark.parametrize("s, t", [(1.5, 1.0), (1.0, 0.5), (-1.0, 3.0)])
def test_lemma_domain(quadratic_model, s, t):
    with pytest.raises(DomainError):
        exponent_service.verify_integral_lemma(quadratic_model, s, t, 0.0, 1.0)


def test_lemma_needs_positive_b(quadratic_model):
    with pytest.raises(DomainError):
        exponent_service.verify_integral_lemma(quadratic_model, 2.0, 0.0, 0.0, 0.0)


@pytest.mark.slow
@pytest.mark.parametrize("s, t", [(1.0, 1.0), (2.0, 0.0), (0.5, 1.5)])
def test_integral_lemma_exponents(light_model, s, t):
    report = exponent_service.verify_integral_lemma(light_model, s, t, 0.0, 1.0)
    assert report.delta_ratio == pytest.approx(0.5)
    assert report.a_exponent.sharp == (t == 0.0)
    assert report.passed


def test_star_energies_must_exceed_one(quadratic_model):
    with pytest.raises(DomainError):
        exponent_service.verify_star_exponents(quadratic_model, StarCase.ELL_ZERO, energies=[0.5, 10.0])


@pytest.mark.slow
@pytest.mark.parametrize("case, gain", [(StarCase.ELL_MID, 0.5), (StarCase.ELL_FULL, 0.5)])
def test_contracted_star_gains(quadratic_model, case, gain):
    report = exponent_service.verify_star_exponents(quadratic_model, case)
    assert report.ell == 1
    assert report.predicted_gain == pytest.approx(gain)
    assert report.error_estimate is not None
    assert report.passed
