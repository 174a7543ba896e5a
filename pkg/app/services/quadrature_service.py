"""
Service de quadrature : intégrales radiales adaptatives, règle angulaire,
mesures discrètes (grille) et quasi-Monte-Carlo (Sobol)
"""
from functools import lru_cache
from itertools import product
from threading import Lock
from typing import Callable, Dict, List, Optional, Tuple
import math
import logging
import warnings

import numpy as np
from scipy import integrate
from scipy.stats import norm, qmc

from app.config import settings
from app.exceptions import QuadratureError
from app.schemas.kernel import QuadSpec
from app.services.model_service import sphere_area

logger = logging.getLogger(__name__)

# Plancher absolu pour le test d'acceptation (intégrandes identiquement nuls)
ABS_FLOOR = 1e-13


@lru_cache(maxsize=32)
def angular_rule(d: int, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nœuds x = cos θ et poids w avec Σ w f(x) = ∫_{S^{d-1}} f(ê·ξ̂) dσ(ξ̂)"""
    if d == 1:
        return np.array([1.0, -1.0]), np.array([1.0, 1.0])
    t, weights = np.polynomial.legendre.leggauss(nodes)
    theta = 0.5 * math.pi * (t + 1.0)
    w = 0.5 * math.pi * weights * sphere_area(d - 1) * np.sin(theta) ** (d - 2)
    return np.cos(theta), w


def decade_edges(upper: float, low_exp: int = -4, high_exp: int = 12) -> Tuple[List[float], bool]:
    """Points de coupure aux décades ; le booléen signale une queue infinie"""
    edges = [0.0] + [10.0 ** k for k in range(low_exp, high_exp + 1) if 10.0 ** k < upper]
    if math.isinf(upper):
        return edges, True
    edges.append(float(upper))
    return edges, False


class RadialRule:
    """Règle de Gauss-Legendre composite en log r, vectorisée

    Le premier panneau [0, r_min] est linéaire, les suivants couvrent une décade
    chacun jusqu'à upper (ou r_max si upper est infini).
    """

    def __init__(self, upper: float, d: int, nodes_per_panel: int = 12, angular_nodes: int = 24,
                 r_min: float = 1e-4, r_max: float = 1e10):
        self.upper = upper
        self.d = d
        self.nodes_per_panel = nodes_per_panel
        self.angular_nodes = angular_nodes
        top = min(upper, r_max)
        t, weights = np.polynomial.legendre.leggauss(nodes_per_panel)
        radii, radial_weights = [], []

        first = min(r_min, top)
        radii.append(0.5 * first * (t + 1.0))
        radial_weights.append(0.5 * first * weights)
        lo = first
        while lo < top:
            hi = min(lo * 10.0, top)
            a, b = math.log(lo), math.log(hi)
            r = np.exp(0.5 * (b - a) * (t + 1.0) + a)
            radii.append(r)
            radial_weights.append(0.5 * (b - a) * weights * r)
            lo = hi

        self.r = np.concatenate(radii)
        self.w = np.concatenate(radial_weights)
        # poids de ∫_{|ξ|≤upper} dξ pour une fonction radiale
        self.volume_weights = sphere_area(d) * self.w * self.r ** (d - 1)
        self.shell_weights = self.w * self.r ** (d - 1)
        self.x, self.wx = angular_rule(d, angular_nodes)

    def coarse(self) -> "RadialRule":
        """Règle à moitié moins de nœuds, pour l'estimation d'erreur"""
        return RadialRule(self.upper, self.d, max(2, self.nodes_per_panel // 2),
                          max(2, self.angular_nodes // 2))


class GridMeasure:
    """Mesure discrète Σ_k w_k δ_k sur les points d'une grille"""
    scalable = False

    def __init__(self, points: np.ndarray, weights: np.ndarray):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.d = self.points.shape[1]

    def nodes(self, ell: int) -> Tuple[np.ndarray, np.ndarray]:
        """Tous les ℓ-uplets de points de la grille et le produit des poids"""
        count = len(self.points)
        idx = np.array(list(product(range(count), repeat=ell)), dtype=int).reshape(count ** ell, ell)
        return self.points[idx], np.prod(self.weights[idx], axis=1)

    def __repr__(self):
        return f"<GridMeasure {len(self.points)} points>"


class QMCMeasure:
    """Points de Sobol brouillés, compactification radiale r = tan(πu/2)

    Chaque variable contractée consomme d+1 coordonnées : une pour le rayon,
    d pour la direction (gaussienne normalisée, ou un signe si d = 1).
    L'échelle s est appliquée par l'appelant : ξ = s·t, poids × s^{ℓd}.
    """
    scalable = True

    def __init__(self, d: int, points: int, seed: int):
        self.d = d
        self.points = points
        self.seed = seed
        self._cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        self._lock = Lock()

    def nodes(self, ell: int) -> Tuple[np.ndarray, np.ndarray]:
        with self._lock:
            if ell not in self._cache:
                self._cache[ell] = self._build(ell)
            return self._cache[ell]

    def _build(self, ell: int) -> Tuple[np.ndarray, np.ndarray]:
        d = self.d
        if ell == 0:
            return np.zeros((1, 0, d)), np.ones(1)
        sampler = qmc.Sobol(d=ell * (d + 1), scramble=True, seed=self.seed)
        u = sampler.random_base2(m=max(1, math.ceil(math.log2(self.points))))
        u = np.clip(u, 1e-12, 1.0 - 1e-12)
        xi = np.empty((len(u), ell, d))
        weights = np.full(len(u), 1.0 / len(u))
        for mu in range(ell):
            block = u[:, mu * (d + 1):(mu + 1) * (d + 1)]
            t = np.tan(0.5 * math.pi * block[:, 0])
            if d == 1:
                direction = np.where(block[:, 1:2] < 0.5, -1.0, 1.0)
            else:
                z = norm.ppf(block[:, 1:])
                direction = z / np.linalg.norm(z, axis=1, keepdims=True)
            xi[:, mu, :] = t[:, None] * direction
            weights *= sphere_area(d) * t ** (d - 1) * 0.5 * math.pi * (1.0 + t ** 2)
        return xi, weights

    def for_depth(self, depth: int) -> "QMCMeasure":
        """Budget par niveau pour des contractions imbriquées sur depth niveaux"""
        if depth <= 1:
            return self
        exponent = max(5, int(math.log2(self.points)) // depth)
        return QMCMeasure(self.d, 2 ** exponent, self.seed)

    def __repr__(self):
        return f"<QMCMeasure {self.points} points seed={self.seed}>"


class QuadratureService:
    """Intégrales radiales adaptatives (QUADPACK) avec coupures aux décades"""

    def __init__(self):
        self.rel_tol = settings.QUAD_REL_TOL
        self.accept_tol = settings.QUAD_ACCEPT_TOL
        self.limit = settings.QUAD_LIMIT

    def integrate(self, func: Callable[[float], float], upper: float,
                  rel_tol: Optional[float] = None, accept_tol: Optional[float] = None,
                  label: str = "intégrale") -> Tuple[float, float]:
        """∫_0^upper func(r) dr par panneaux ; lève QuadratureError au-delà de la tolérance"""
        rel_tol = rel_tol or self.rel_tol
        accept_tol = accept_tol or self.accept_tol
        edges, tail = decade_edges(upper)
        value, error = 0.0, 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            for a, b in zip(edges[:-1], edges[1:]):
                part, err = integrate.quad(func, a, b, epsabs=0.0, epsrel=rel_tol, limit=self.limit)
                value += part
                error += err
            if tail:
                part, err = integrate.quad(func, edges[-1], np.inf, epsabs=0.0, epsrel=rel_tol,
                                           limit=self.limit)
                value += part
                error += err
        if error > max(accept_tol * abs(value), ABS_FLOOR):
            logger.error(f"Quadrature non convergée : {label}")
            raise QuadratureError(f"Quadrature non convergée : {label}", error, value)
        return value, error

    def radial(self, f: Callable[[float], float], upper: float, d: int, **kwargs) -> Tuple[float, float]:
        """∫_{|ξ|≤upper} f(|ξ|) dξ"""
        area = sphere_area(d)
        value, error = self.integrate(lambda r: r ** (d - 1) * f(r), upper, **kwargs)
        return area * value, area * error

    def radial_angular(self, f: Callable[[float, np.ndarray], np.ndarray], upper: float, d: int,
                       nodes: Optional[int] = None, **kwargs) -> Tuple[float, float]:
        """∫_{|ξ|≤upper} f(|ξ|, ê·ξ̂) dξ, l'angle polaire par Gauss-Legendre"""
        x, w = angular_rule(d, nodes or settings.ANGULAR_NODES)
        return self.integrate(lambda r: r ** (d - 1) * float(np.dot(w, f(r, x))), upper, **kwargs)

    def measure(self, quad: QuadSpec, d: int) -> QMCMeasure:
        return QMCMeasure(d, quad.qmc_points, quad.seed)


# Instance globale
quadrature_service = QuadratureService()
