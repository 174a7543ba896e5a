"""
Service de définition, validation et classification des modèles de polaron
"""
from fractions import Fraction
from typing import Callable, List, Optional, Tuple
import math
import logging

import numpy as np
from scipy.interpolate import PchipInterpolator

from app.config import settings
from app.exceptions import ModelValidationError
from app.models.physics import ProfileFamily, ScalingClass
from app.schemas.model import (
    BoundFit, ModelSpec, ProfileSpec, ScalingReport, ValidationReport, Violation
)

logger = logging.getLogger(__name__)

RadialProfile = Callable[[np.ndarray], np.ndarray]


def _exact(value: float) -> Fraction:
    return Fraction(value).limit_denominator(10 ** 6)


def sphere_area(d: int) -> float:
    """Mesure de surface de S^{d-1} (2 pour d=1)"""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _table_profile(radii: List[float], values: List[float]) -> RadialProfile:
    """Interpolation PCHIP en log-log, prolongée par des lois de puissance"""
    log_r = np.log(np.asarray(radii, dtype=float))
    log_v = np.log(np.asarray(values, dtype=float))
    interp = PchipInterpolator(log_r, log_v, extrapolate=False)
    slope_lo = (log_v[1] - log_v[0]) / (log_r[1] - log_r[0])
    slope_hi = (log_v[-1] - log_v[-2]) / (log_r[-1] - log_r[-2])

    def profile(r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        x = np.log(np.maximum(r, 1e-300))
        out = interp(x)
        low = x < log_r[0]
        high = x > log_r[-1]
        out = np.where(low, log_v[0] + slope_lo * (x - log_r[0]), out)
        out = np.where(high, log_v[-1] + slope_hi * (x - log_r[-1]), out)
        return np.exp(out)

    return profile


def build_profile(profile: ProfileSpec, default_mass: float, alpha: float = 0.0) -> RadialProfile:
    """Construire la fonction radiale associée à un ProfileSpec"""
    mass = default_mass if profile.mass is None else profile.mass
    family = profile.family
    if family == ProfileFamily.RELATIVISTIC:
        return lambda r: np.sqrt(mass + np.asarray(r, dtype=float) ** 2)
    if family == ProfileFamily.QUADRATIC:
        return lambda r: mass + np.asarray(r, dtype=float) ** 2
    if family == ProfileFamily.CONSTANT:
        return lambda r: np.ones_like(np.asarray(r, dtype=float))
    if family == ProfileFamily.POWER:
        return lambda r: (1.0 + np.asarray(r, dtype=float) ** 2) ** (-alpha / 2.0)
    return _table_profile(profile.radii, profile.values)


class PolaronModel:
    """Modèle validé : profils vectorisés et constantes d'échelle"""

    def __init__(self, spec: ModelSpec, report: Optional[ValidationReport] = None):
        self.spec = spec
        self.report = report
        self.d = spec.d
        self.alpha = spec.alpha
        self.gamma = spec.gamma
        self.g = spec.g
        self.E_0 = spec.E_0
        self.P = np.asarray(spec.P, dtype=float)
        self.Omega_r = build_profile(spec.Omega, spec.c_p)
        self.omega_r = build_profile(spec.omega, spec.c_b)
        self._v_shape = build_profile(spec.v, 0.0, spec.alpha)
        scaling = model_service.scaling_report(spec)
        self.delta = scaling.delta
        self.n_star = scaling.n_star

    # Profils radiaux
    def v_r(self, r: np.ndarray, cutoff: float = math.inf) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        values = self.g * self._v_shape(r)
        if math.isinf(cutoff):
            return values
        return np.where(r <= cutoff, values, 0.0)

    # Profils vectoriels (dernier axe = composantes)
    def Omega(self, p: np.ndarray) -> np.ndarray:
        return self.Omega_r(np.linalg.norm(p, axis=-1))

    def omega(self, k: np.ndarray) -> np.ndarray:
        return self.omega_r(np.linalg.norm(k, axis=-1))

    def v(self, k: np.ndarray, cutoff: float = math.inf) -> np.ndarray:
        return self.v_r(np.linalg.norm(k, axis=-1), cutoff)

    def dOmega_r(self, r: np.ndarray) -> np.ndarray:
        """Dérivée radiale de Ω par différences centrées"""
        r = np.asarray(r, dtype=float)
        h = settings.FD_STEP * (1.0 + r)
        return (self.Omega_r(r + h) - self.Omega_r(np.abs(r - h))) / (2.0 * h)

    @property
    def ratio(self) -> float:
        """δ/γ"""
        return self.delta / self.gamma

    def with_updates(self, **update) -> "PolaronModel":
        return PolaronModel(self.spec.model_copy(update=update), self.report)

    def __repr__(self):
        return f"<PolaronModel d={self.d} α={self.alpha} γ={self.gamma} δ={self.delta:g}>"


class ModelService:
    """Service de validation et d'analyse d'échelle"""

    def __init__(self):
        self.r_min = settings.VALIDATION_R_MIN
        self.r_max = settings.VALIDATION_R_MAX
        self.fd_step = settings.FD_STEP
        self.spread = settings.BOUND_SPREAD

    def scaling_report(self, spec: ModelSpec) -> ScalingReport:
        """Calculer δ, n_*, la classe et les exposants de divergence prédits"""
        delta = spec.d - 2 * _exact(spec.alpha) - spec.gamma
        gamma = Fraction(spec.gamma)
        critical_margin = Fraction(spec.d, 2) - _exact(spec.alpha) - gamma
        if critical_margin < 0:
            scaling_class = ScalingClass.SUBCRITICAL
        elif critical_margin == 0:
            scaling_class = ScalingClass.CRITICAL
        else:
            scaling_class = ScalingClass.SUPERCRITICAL

        n_star = 0
        if delta >= 0 and delta < gamma:
            n_star = math.floor(1 / (1 - delta / gamma))
        if delta < 0:
            logger.warning(f"δ = {float(delta):g} < 0 : aucun contre-terme nécessaire (extension documentée)")

        exponents = [float(delta - (n - 1) * (gamma - delta)) for n in range(1, n_star + 1)]
        return ScalingReport(
            delta=float(delta),
            n_star=n_star,
            scaling_class=scaling_class,
            predicted_exponents=exponents,
            needs_renormalisation=delta >= 0,
            negative_delta_extension=delta < 0,
        )

    def _radii(self, sample_count: int) -> np.ndarray:
        return np.logspace(math.log10(self.r_min), math.log10(self.r_max), sample_count)

    def _fit(self, name: str, lhs: np.ndarray, rhs: np.ndarray, radii: np.ndarray,
             upper: bool) -> Tuple[BoundFit, Optional[Violation]]:
        """Ajuster C dans lhs ≤ C·rhs (upper) ou lhs ≥ C·rhs, moindres carrés en log"""
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.abs(lhs) / rhs
        finite = np.isfinite(ratio) & (ratio > 0)
        if not finite.any():
            fit = BoundFit(inequality=name, fitted_constant=0.0, min_ratio=0.0, max_ratio=0.0,
                           holds=upper)
            if upper:
                return fit, None
            return fit, Violation(inequality=name, witness=float(radii[0]), lhs=float(lhs[0]),
                                  rhs=float(rhs[0]))
        constant = float(np.exp(np.mean(np.log(ratio[finite]))))
        if upper:
            worst = int(np.nanargmax(np.where(finite, ratio, -np.inf)))
            holds = ratio[worst] <= constant * self.spread
        else:
            worst = int(np.nanargmin(np.where(finite, ratio, np.inf)))
            holds = bool(finite.all()) and ratio[worst] >= constant / self.spread
        fit = BoundFit(inequality=name, fitted_constant=constant,
                       min_ratio=float(np.min(ratio[finite])), max_ratio=float(np.max(ratio[finite])),
                       holds=bool(holds))
        if holds:
            return fit, None
        return fit, Violation(inequality=name, witness=float(radii[worst]), lhs=float(lhs[worst]),
                              rhs=float(rhs[worst]), fitted_constant=constant)

    def _derivatives(self, profile: RadialProfile, radii: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Dérivées radiales première et seconde par différences centrées"""
        h = self.fd_step * (1.0 + radii)
        plus, centre, minus = profile(radii + h), profile(radii), profile(np.abs(radii - h))
        first = (plus - minus) / (2.0 * h)
        second = (plus - 2.0 * centre + minus) / h ** 2
        return first, second

    def check_model(self, spec: ModelSpec, sample_count: Optional[int] = None) -> ValidationReport:
        """Vérifier toutes les inégalités sans lever d'exception"""
        sample_count = sample_count or settings.VALIDATION_SAMPLES
        if sample_count < 16:
            raise ValueError("sample_count doit être au moins 16")
        scaling = self.scaling_report(spec)
        violations: List[Violation] = []
        fits: List[BoundFit] = []
        flags: List[str] = []

        for name in ("Omega", "omega", "v"):
            if not getattr(spec, name).radial:
                violations.append(Violation(inequality=f"{name} radial", lhs=0.0, rhs=1.0))

        if not 2 * _exact(spec.alpha) < spec.d:
            violations.append(Violation(inequality="alpha < d/2", lhs=spec.alpha, rhs=spec.d / 2))
        if scaling.scaling_class != ScalingClass.SUBCRITICAL:
            violations.append(Violation(inequality="delta < gamma", lhs=scaling.delta,
                                        rhs=float(spec.gamma)))
        if scaling.negative_delta_extension:
            flags.append("negative_delta_extension")

        radii = self._radii(sample_count)
        gamma = spec.gamma
        Omega = build_profile(spec.Omega, spec.c_p)
        omega = build_profile(spec.omega, spec.c_b)
        v_shape = build_profile(spec.v, 0.0, spec.alpha)

        checks = [
            ("omega(k) >= C (c_b + k^2)^(gamma/2)", omega(radii),
             (spec.c_b + radii ** 2) ** (gamma / 2.0), False),
            ("Omega(p) >= C (c_p + p^2)^(gamma/2)", Omega(radii),
             (spec.c_p + radii ** 2) ** (gamma / 2.0), False),
            ("|v(k)| <= C |k|^(-alpha)", spec.g * v_shape(radii), radii ** (-spec.alpha), True),
        ]
        first, second = self._derivatives(Omega, radii)
        checks.append(("|D Omega(p)| <= C (c_p + p^2)^((gamma-1)/2)", first,
                       (spec.c_p + radii ** 2) ** ((gamma - 1) / 2.0), True))
        if gamma == 2:
            hessian = np.maximum(np.abs(second), np.abs(first) / radii)
            checks.append(("|D^2 Omega(p)| <= C", hessian, np.ones_like(radii), True))

        for name, lhs, rhs, upper in checks:
            fit, violation = self._fit(name, lhs, rhs, radii, upper)
            fits.append(fit)
            if violation is not None:
                violations.append(violation)

        return ValidationReport(
            valid=not violations,
            delta=scaling.delta,
            scaling_class=scaling.scaling_class,
            fits=fits,
            violations=violations,
            flags=flags,
        )

    def validate_model(self, spec: ModelSpec, sample_count: Optional[int] = None) -> PolaronModel:
        """Valider un modèle ; lève ModelValidationError avec les témoins en cas d'échec"""
        report = self.check_model(spec, sample_count)
        if not report.valid:
            names = ", ".join(v.inequality for v in report.violations)
            logger.error(f"Modèle rejeté : {names}")
            raise ModelValidationError(f"Modèle rejeté : {names}", report.violations,
                                       report.scaling_class.value)
        logger.info(f"Modèle validé : δ = {report.delta:g}, classe {report.scaling_class.value}")
        return PolaronModel(spec, report)


# Instance globale
model_service = ModelService()
