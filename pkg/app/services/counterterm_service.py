"""
Service des contre-termes E_{Λ,n} : quadratures dans le vide, balayages en Λ
et ajustement des divergences
"""
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple
import math
import logging

import numpy as np

from app.exceptions import DomainError
from app.models.physics import FitModel
from app.schemas.counterterm import CounterTermTable, DivergenceFit, E2Terms
from app.schemas.kernel import QuadSpec
from app.services.fit_service import fit_service
from app.services.kernel_service import kernel_service
from app.services.model_service import PolaronModel, model_service
from app.services.quadrature_service import GridMeasure, RadialRule, quadrature_service
from app.services.scheme_service import scheme_service

logger = logging.getLogger(__name__)


def at_rest(model: PolaronModel) -> PolaronModel:
    """Le même modèle à P = 0, point de soustraction des contre-termes"""
    if not np.any(model.P):
        return model
    return model.with_updates(P=[0.0] * model.d)


class CounterTermService:
    """Service des contre-termes"""

    # Premier ordre
    def E_1_with_error(self, model: PolaronModel, cutoff: float) -> Tuple[float, float]:
        if cutoff <= 0:
            raise DomainError("Λ doit être strictement positif")
        E_0 = model.E_0

        def integrand(r: float) -> float:
            return model.v_r(r) ** 2 / (model.Omega_r(r) + model.omega_r(r) + E_0)

        value, error = quadrature_service.radial(integrand, cutoff, model.d, rel_tol=1e-10,
                                                 label=f"E_1 à Λ={cutoff:g}")
        return -value, error

    def E_1(self, model: PolaronModel, cutoff: float) -> float:
        """E_{Λ,1} = -∫_{|k|≤Λ} v²/(Ω+ω+E_0) dk"""
        return self.E_1_with_error(model, cutoff)[0]

    # Deuxième ordre
    def _e2_on_rule(self, model: PolaronModel, rule: RadialRule) -> Tuple[float, float]:
        E_0, cutoff = model.E_0, rule.upper
        r, x, wx = rule.r, rule.x, rule.wx
        v2 = model.v_r(r, cutoff) ** 2
        omega = model.omega_r(r)
        single = model.Omega_r(r) + omega + E_0

        # |q + ξ| pour chaque couple de rayons et chaque angle relatif
        radius = np.sqrt(np.maximum(r[:, None, None] ** 2 + r[None, :, None] ** 2
                                    + 2.0 * r[:, None, None] * r[None, :, None] * x[None, None, :], 0.0))
        pair = model.Omega_r(radius) + omega[:, None, None] + omega[None, :, None] + E_0
        angular = np.tensordot(1.0 / pair, wx, axes=([2], [0]))

        # θ_{Λ,1,0}(ξ, E_0 + ω(ξ)) aux nœuds radiaux de ξ
        theta = -np.sum(rule.shell_weights[None, :] * v2[None, :]
                        * (angular - wx.sum() / single[None, :]), axis=1)
        positive = float(np.sum(rule.volume_weights * v2 * theta / single ** 2))
        negative = -float(np.sum(rule.volume_weights[:, None] * rule.shell_weights[None, :]
                                 * (v2 / single)[:, None] * (v2 / single)[None, :] * angular))
        return positive, negative

    def e2_terms(self, model: PolaronModel, cutoff: float) -> E2Terms:
        """Les deux espérances dans le vide de E_{Λ,2}, à P = 0"""
        if math.isinf(cutoff) or cutoff <= 0:
            raise DomainError("E_{Λ,2} demande un cutoff fini et positif")
        model = at_rest(model)
        rule = RadialRule(cutoff, model.d)
        positive, negative = self._e2_on_rule(model, rule)
        coarse_positive, coarse_negative = self._e2_on_rule(model, rule.coarse())
        error = abs(positive - coarse_positive) + abs(negative - coarse_negative)
        return E2Terms(cutoff=cutoff, positive_term=positive, negative_term=negative,
                       total=positive + negative, error_estimate=error)

    # Ordre quelconque
    def _vacuum_sum(self, algebra, n: int) -> float:
        total = 0.0
        for scheme in scheme_service.enumerate_schemes(n, 0):
            total += scheme_service.expansion_sign(scheme) * algebra.vacuum_value(scheme)
        return total

    def E_n_with_error(self, model: PolaronModel, cutoff: float, n: int,
                       quadrature: Optional[QuadSpec] = None) -> Tuple[float, float]:
        if n < 1 or n > model.n_star:
            raise DomainError(f"Aucun contre-terme d'ordre {n} n'est défini (n_* = {model.n_star})")
        if n == 1:
            return self.E_1_with_error(model, cutoff)
        if n == 2:
            terms = self.e2_terms(model, cutoff)
            return terms.total, terms.error_estimate
        if math.isinf(cutoff):
            raise DomainError("E_{Λ,n} demande un cutoff fini")
        model = at_rest(model)
        quadrature = quadrature or QuadSpec()
        value = self._vacuum_sum(kernel_service.algebra(model, quadrature, cutoff, depth=n), n)
        other = quadrature.model_copy(update={"seed": quadrature.seed + 1})
        check = self._vacuum_sum(kernel_service.algebra(model, other, cutoff, depth=n), n)
        return value, abs(value - check)

    def E_n(self, model: PolaronModel, cutoff: float, n: int,
            quadrature: Optional[QuadSpec] = None) -> float:
        """E_{Λ,n} : somme signée des espérances dans le vide des ϑ pour m = 0"""
        return self.E_n_with_error(model, cutoff, n, quadrature)[0]

    def grid_E_n(self, model: PolaronModel, points: np.ndarray, weights: np.ndarray, n: int,
                 cutoff: float) -> float:
        """E_{Λ,n} avec les sommes de Riemann de la grille à la place des intégrales"""
        if n < 1 or n > model.n_star:
            raise DomainError(f"Aucun contre-terme d'ordre {n} n'est défini (n_* = {model.n_star})")
        model = at_rest(model)
        points = np.asarray(points, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if n == 1:
            v2 = weights * model.v(points, cutoff) ** 2
            return -float(np.sum(v2 / (model.Omega(points) + model.omega(points) + model.E_0)))
        algebra = kernel_service.algebra(model, GridMeasure(points, weights), cutoff)
        return self._vacuum_sum(algebra, n)

    # Balayages
    def _sweep_point(self, model: PolaronModel, cutoff: float,
                     quadrature: Optional[QuadSpec]) -> Tuple[List[float], List[float]]:
        values, errors = [], []
        for n in range(1, model.n_star + 1):
            value, error = self.E_n_with_error(model, cutoff, n, quadrature)
            values.append(value)
            errors.append(error)
        logger.info(f"Contre-termes calculés à Λ = {cutoff:g}")
        return values, errors

    def sweep(self, model: PolaronModel, lambdas: Sequence[float],
              quadrature: Optional[QuadSpec] = None, threads: int = 1) -> CounterTermTable:
        """Table des E_{Λ,n} et ajustement des divergences pour chaque ordre"""
        lambdas = [float(x) for x in lambdas]
        if len(lambdas) < 4:
            raise DomainError("Un balayage demande au moins 4 cutoffs")
        if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
            raise DomainError("Les cutoffs doivent être strictement croissants")

        orders = list(range(1, model.n_star + 1))
        if not orders:
            logger.warning("n_* = 0 : aucun contre-terme, E_Λ ≡ 0")
            return CounterTermTable(lambdas=lambdas, orders=[], values=[], errors=[],
                                    totals=[0.0] * len(lambdas), fits=[], fitted_exponents=[],
                                    fit_residuals=[])

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                points = list(pool.map(lambda cutoff: self._sweep_point(model, cutoff, quadrature),
                                       lambdas))
        else:
            points = [self._sweep_point(model, cutoff, quadrature) for cutoff in lambdas]

        values = [[points[j][0][i] for j in range(len(lambdas))] for i in range(len(orders))]
        errors = [[points[j][1][i] for j in range(len(lambdas))] for i in range(len(orders))]
        totals = [float(sum(column)) for column in zip(*values)]

        predicted = model_service.scaling_report(model.spec).predicted_exponents
        fits: List[DivergenceFit] = []
        labels: List[str] = []
        residuals: List[float] = []
        spans = math.log10(lambdas[-1] / lambdas[0]) >= 2.0 - 1e-9
        for i in range(len(orders)):
            if not spans:
                logger.warning("Moins de deux décades de Λ : divergences non ajustées")
                labels.append("")
                residuals.append(float("nan"))
                continue
            fit = fit_service.fit_divergence(lambdas, values[i], predicted[i])
            fits.append(fit)
            labels.append("log" if fit.model == FitModel.LOG else f"{fit.exponent:.6g}")
            residuals.append(fit.residual)

        return CounterTermTable(lambdas=lambdas, orders=orders, values=values, errors=errors,
                                totals=totals, fits=fits, fitted_exponents=labels,
                                fit_residuals=residuals)

    def fit_divergence(self, lambdas: Sequence[float], values: Sequence[float],
                       predicted: float) -> DivergenceFit:
        return fit_service.fit_divergence(lambdas, values, predicted)


# Instance globale
counterterm_service = CounterTermService()
