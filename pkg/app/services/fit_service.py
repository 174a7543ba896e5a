"""
Service d'ajustement des divergences : loi de puissance, logarithme, limite finie
"""
from typing import Sequence, Tuple
import logging

import numpy as np

from app.config import settings
from app.exceptions import DomainError
from app.models.physics import FitModel
from app.schemas.counterterm import DivergenceFit

logger = logging.getLogger(__name__)


def _relative_rms(fitted: np.ndarray, values: np.ndarray) -> float:
    scale = np.maximum(np.abs(values), 1e-300)
    return float(np.sqrt(np.mean(((fitted - values) / scale) ** 2)))


class FitService:
    """Régressions en coordonnées log-log et semi-log"""

    def power_fit(self, lambdas: Sequence[float], values: Sequence[float]) -> Tuple[float, float, float]:
        """|y| ≈ c Λ^k : renvoie (k, c, résidu relatif)"""
        x, y = np.asarray(lambdas, dtype=float), np.abs(np.asarray(values, dtype=float))
        if np.any(y <= 0):
            return float("nan"), 0.0, float("inf")
        slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
        prefactor = float(np.exp(intercept))
        return float(slope), prefactor, _relative_rms(prefactor * x ** slope, y)

    def log_fit(self, lambdas: Sequence[float], values: Sequence[float]) -> Tuple[float, float, float]:
        """y ≈ c log(1+Λ) + b : renvoie (c, b, résidu relatif)"""
        x, y = np.asarray(lambdas, dtype=float), np.asarray(values, dtype=float)
        design = np.column_stack([np.log1p(x), np.ones_like(x)])
        (coef, offset), *_ = np.linalg.lstsq(design, y, rcond=None)
        return float(coef), float(offset), _relative_rms(design @ np.array([coef, offset]), y)

    def constant_limit_fit(self, lambdas: Sequence[float], values: Sequence[float],
                           predicted: float) -> Tuple[float, float, float]:
        """y ≈ y_∞ + c Λ^{prédit} : renvoie (y_∞, c, résidu relatif)"""
        x, y = np.asarray(lambdas, dtype=float), np.asarray(values, dtype=float)
        design = np.column_stack([np.ones_like(x), x ** predicted])
        (limit, coef), *_ = np.linalg.lstsq(design, y, rcond=None)
        return float(limit), float(coef), _relative_rms(design @ np.array([limit, coef]), y)

    def select_model(self, predicted: float) -> FitModel:
        threshold = settings.LOG_FIT_THRESHOLD
        if predicted > threshold:
            return FitModel.POWER
        if predicted < -threshold:
            return FitModel.CONSTANT_LIMIT
        return FitModel.LOG

    def fit_divergence(self, lambdas: Sequence[float], values: Sequence[float],
                       predicted: float) -> DivergenceFit:
        """Ajuster le modèle choisi par l'exposant prédit, et le modèle concurrent"""
        x, y = np.asarray(lambdas, dtype=float), np.asarray(values, dtype=float)
        if len(x) < 4:
            raise DomainError("Un ajustement demande au moins 4 points")
        if np.any(x <= 0) or np.log10(x.max() / x.min()) < 2.0 - 1e-9:
            raise DomainError("Les cutoffs doivent être positifs et couvrir au moins deux décades")

        steps = np.diff(np.abs(y))
        monotone = bool(np.all(steps >= 0) or np.all(steps <= 0))
        if not monotone:
            logger.warning("Données non monotones en Λ : ajustement fourni à titre indicatif")

        model = self.select_model(predicted)
        exponent, prefactor, power_residual = self.power_fit(x, y)
        coef, offset, log_residual = self.log_fit(x, y)

        if model == FitModel.POWER:
            return DivergenceFit(model=model, predicted=predicted, exponent=exponent,
                                 coefficient=prefactor, residual=power_residual,
                                 competing_model=FitModel.LOG, competing_residual=log_residual,
                                 monotone=monotone)
        if model == FitModel.LOG:
            return DivergenceFit(model=model, predicted=predicted, coefficient=coef, offset=offset,
                                 residual=log_residual, competing_model=FitModel.POWER,
                                 competing_residual=power_residual, monotone=monotone)
        limit, scale, residual = self.constant_limit_fit(x, y, predicted)
        return DivergenceFit(model=model, predicted=predicted, exponent=predicted, coefficient=limit,
                             offset=scale, residual=residual, competing_model=FitModel.POWER,
                             competing_residual=power_residual, monotone=monotone)

    def decay_exponent(self, x: Sequence[float], y: Sequence[float]) -> float:
        """Pente de log|y| en fonction de log x"""
        slope, _ = np.polyfit(np.log(np.asarray(x, dtype=float)),
                              np.log(np.abs(np.asarray(y, dtype=float))), 1)
        return float(slope)


# Instance globale
fit_service = FitService()
