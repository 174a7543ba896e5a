"""
Service des noyaux intégraux : poids ρ, θ_{1,1}, θ_{1,0}, produits ⋆_ℓ,
récurrence τ et assemblage des θ_{n,m}
"""
from collections import OrderedDict
from itertools import combinations, permutations
from threading import Lock, RLock
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
import math
import logging

import numpy as np
from scipy.stats import special_ortho_group

from app.config import settings
from app.exceptions import DomainError
from app.models.physics import QuadScheme
from app.schemas.kernel import KernelBoundReport, QuadSpec
from app.schemas.scheme import ContractionScheme
from app.services.model_service import PolaronModel
from app.services.quadrature_service import (
    GridMeasure, QMCMeasure, RadialRule, quadrature_service
)
from app.services.scheme_service import scheme_service

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
Measure = Union[GridMeasure, QMCMeasure]

# Nombre max de lignes aplaties par appel d'évaluateur
CHUNK_ROWS = 2 ** 16
# Au-delà, un lot n'est pas mémorisé (évaluations internes aux quadratures)
MEMO_BATCH = 256
S_GRID = (-1.0, -0.5, 0.0, 0.5, 1.0)
# Au-delà, le reste de Taylor est sous l'arrondi de 1/(Ω+ω+E)
TAYLOR_TAIL_RADIUS = 1e8


class KernelHandle:
    """Noyau κ(Q, R, p, E) évalué par lots

    Q : (B, m_left, d), R : (B, m_right, d), p : (B, d), E : (B,).
    """

    def __init__(self, evaluator: Evaluator, m_left: int, m_right: int, model: PolaronModel,
                 lambda_class: float = 0.0, cutoff: float = math.inf, label: str = "κ"):
        self.evaluator = evaluator
        self.m_left = m_left
        self.m_right = m_right
        self.model = model
        self.d = model.d
        self.lambda_class = lambda_class
        self.cutoff = cutoff
        self.label = label
        self._memo: "OrderedDict[bytes, float]" = OrderedDict()
        self._lock = Lock()

    def evaluate(self, Q: np.ndarray, R: np.ndarray, p: np.ndarray, E: np.ndarray) -> np.ndarray:
        """Évaluation brute, sans mémoïsation ni mise en forme"""
        return np.asarray(self.evaluator(Q, R, p, E), dtype=float)

    def _shape(self, Q, R, p, E) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        E = np.atleast_1d(np.asarray(E, dtype=float))
        B = len(E)
        Q = np.asarray(Q, dtype=float).reshape(B, self.m_left, self.d)
        R = np.asarray(R, dtype=float).reshape(B, self.m_right, self.d)
        p = np.asarray(p, dtype=float).reshape(B, self.d)
        return Q, R, p, E

    def batch(self, Q, R, p, E) -> np.ndarray:
        """Évaluation par lot ; les petits lots passent par la table mémo"""
        Q, R, p, E = self._shape(Q, R, p, E)
        if np.any(E <= 0):
            raise DomainError("E doit être strictement positif")
        B = len(E)
        if B > MEMO_BATCH:
            return self.evaluate(Q, R, p, E)

        flat = np.concatenate([Q.reshape(B, -1), R.reshape(B, -1), p, E[:, None]], axis=1)
        keys = [row.tobytes() for row in np.round(flat / settings.MEMO_RESOLUTION).astype(np.int64)]
        out = np.empty(B)
        missing = []
        with self._lock:
            for i, key in enumerate(keys):
                if key in self._memo:
                    out[i] = self._memo[key]
                    self._memo.move_to_end(key)
                else:
                    missing.append(i)
        if missing:
            idx = np.array(missing)
            values = self.evaluate(Q[idx], R[idx], p[idx], E[idx])
            out[idx] = values
            with self._lock:
                for i, value in zip(missing, values):
                    self._memo[keys[i]] = float(value)
                while len(self._memo) > settings.MEMO_MAX_ENTRIES:
                    self._memo.popitem(last=False)
        return out

    def __call__(self, Q: Sequence = (), R: Sequence = (), p: Optional[Sequence] = None,
                 E: float = 1.0) -> float:
        """Évaluation en un point ; Q et R sont des listes de vecteurs de ℝ^d"""
        p = np.zeros(self.d) if p is None else p
        return float(self.batch(np.asarray(Q, dtype=float)[None], np.asarray(R, dtype=float)[None],
                                np.asarray(p, dtype=float)[None], [E])[0])

    @property
    def arity(self) -> Tuple[int, int]:
        return self.m_left, self.m_right

    def __repr__(self):
        return f"<KernelHandle {self.label} ({self.m_left},{self.m_right}) λ={self.lambda_class:g}>"


def _chunked(fn: Callable[[slice], np.ndarray], rows: int, per_row: int) -> np.ndarray:
    """Appliquer fn par tranches de lignes pour borner la mémoire"""
    size = max(1, CHUNK_ROWS // max(1, per_row))
    if rows <= size:
        return fn(slice(0, rows))
    return np.concatenate([fn(slice(start, min(start + size, rows)))
                           for start in range(0, rows, size)])


class StarProduct:
    """Produit κ H_0^{-1} ⋆_ℓ κ′ avec exactement ℓ contractions

    Variables du résultat : Q = (Q_κ, Q′ non contractées), R = (R_κ non
    contractées, R′). Les annihilations non contractées de κ décalent (p, E)
    de κ′, les créations non contractées de κ′ décalent (p, E) de κ, et
    H_0^{-1} voit les deux décalages plus les variables contractées.
    """

    def __init__(self, left: KernelHandle, right: KernelHandle, ell: int, measure: Measure):
        n_c, n_a = left.arity
        n_c2, n_a2 = right.arity
        if ell < 0 or ell > min(n_a, n_c2):
            raise DomainError(f"ℓ = {ell} dépasse l'arité ({n_a} annihilations, {n_c2} créations)")
        self.left = left
        self.right = right
        self.ell = ell
        self.measure = measure
        self.model = left.model
        self.n_c, self.n_a, self.n_c2, self.n_a2 = n_c, n_a, n_c2, n_a2
        self.m_left = n_c + n_c2 - ell
        self.m_right = n_a - ell + n_a2
        self.placements = [(list(I), list(J))
                           for I in combinations(range(n_a), ell)
                           for J in permutations(range(n_c2), ell)]
        if ell == 0:
            self._xi = np.zeros((1, 0, self.model.d))
            self._w = np.ones(1)
        else:
            self._xi, self._w = measure.nodes(ell)

    def scale(self, E: np.ndarray) -> np.ndarray:
        """Échelle des nœuds QMC adaptée à E^{1/γ}"""
        return np.maximum(1.0, E) ** (1.0 / self.model.gamma)

    def summands(self, Q: np.ndarray, R: np.ndarray, p: np.ndarray, E: np.ndarray,
                 scale: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Intégrande (B, M) aux nœuds et poids correspondants"""
        model = self.model
        B, d = len(E), model.d
        M = len(self._w)
        if self.ell > 0 and self.measure.scalable:
            xi = scale[:, None, None, None] * self._xi[None]
            w = self._w[None, :] * scale[:, None] ** (self.ell * d)
        else:
            xi = np.broadcast_to(self._xi[None], (B,) + self._xi.shape)
            w = np.broadcast_to(self._w[None, :], (B, M))

        Q_k, Q_u = Q[:, :self.n_c], Q[:, self.n_c:]
        R_u, R_2 = R[:, :self.n_a - self.ell], R[:, self.n_a - self.ell:]
        shift_Q, omega_Q = Q_u.sum(axis=1), model.omega(Q_u).sum(axis=1)
        shift_R, omega_R = R_u.sum(axis=1), model.omega(R_u).sum(axis=1)
        shift_xi, omega_xi = xi.sum(axis=2), model.omega(xi).sum(axis=2)

        h = 1.0 / (model.Omega((p + shift_R + shift_Q)[:, None, :] + shift_xi)
                   + (E + omega_R + omega_Q)[:, None] + omega_xi)

        flat = B * M
        left_p = np.repeat(p + shift_Q, M, axis=0)
        left_E = np.repeat(E + omega_Q, M)
        right_p = np.repeat(p + shift_R, M, axis=0)
        right_E = np.repeat(E + omega_R, M)
        left_Q = np.repeat(Q_k, M, axis=0)
        right_R = np.repeat(R_2, M, axis=0)

        total = np.zeros((B, M))
        for I, J in self.placements:
            S = np.empty((B, M, self.n_a, d))
            S[:, :, I] = xi
            S[:, :, [i for i in range(self.n_a) if i not in I]] = R_u[:, None]
            U = np.empty((B, M, self.n_c2, d))
            U[:, :, J] = xi
            U[:, :, [j for j in range(self.n_c2) if j not in J]] = Q_u[:, None]
            k_left = self.left.evaluate(left_Q, S.reshape(flat, self.n_a, d), left_p, left_E)
            k_right = self.right.evaluate(U.reshape(flat, self.n_c2, d), right_R, right_p, right_E)
            total += (k_left * k_right).reshape(B, M)
        return total * h, w

    def __call__(self, Q: np.ndarray, R: np.ndarray, p: np.ndarray, E: np.ndarray) -> np.ndarray:
        per_row = len(self._w) * max(1, len(self.placements))

        def block(rows: slice) -> np.ndarray:
            values, w = self.summands(Q[rows], R[rows], p[rows], E[rows], self.scale(E[rows]))
            return np.sum(values * w, axis=1)

        return _chunked(block, len(E), per_row)

    def vacuum_subtracted(self, E_0: float, gradient: bool) -> Evaluator:
        """Intégrande à (p, E) moins l'intégrande à (0, E_0), sur les mêmes nœuds

        Avec gradient, le terme d'ordre un p·∇_p de l'intégrande en (0, E) est
        aussi retranché (différences centrées) ; son intégrale est nulle.
        """
        step = settings.FD_STEP
        per_row = len(self._w) * max(1, len(self.placements)) * (4 if gradient else 2)

        def evaluator(Q, R, p, E):
            def block(rows: slice) -> np.ndarray:
                q, r, pp, e = Q[rows], R[rows], p[rows], E[rows]
                scale = self.scale(e)
                values, w = self.summands(q, r, pp, e, scale)
                reference, _ = self.summands(q, r, np.zeros_like(pp), np.full_like(e, E_0), scale)
                values = values - reference
                if gradient:
                    plus, _ = self.summands(q, r, step * pp, e, scale)
                    minus, _ = self.summands(q, r, -step * pp, e, scale)
                    values = values - (plus - minus) / (2.0 * step)
                return np.sum(values * w, axis=1)

            return _chunked(block, len(E), per_row)

        return evaluator


class KernelAlgebra:
    """θ_{n,m}, τ et ϑ pour un modèle, une mesure et un cutoff donnés"""

    def __init__(self, model: PolaronModel, measure: Measure, cutoff: float = math.inf):
        self.model = model
        self.measure = measure
        self.cutoff = cutoff
        self.gain = 1.0 - model.ratio
        self.grid = isinstance(measure, GridMeasure)
        self.rule = None if self.grid else RadialRule(cutoff, model.d)
        self._theta: Dict[Tuple[int, int], KernelHandle] = {}
        self._lock = RLock()

    # Opérateurs élémentaires
    def a(self) -> KernelHandle:
        """a(v_Λ) comme noyau (0, 1)"""
        model, cutoff = self.model, self.cutoff
        return KernelHandle(lambda Q, R, p, E: model.v(R[:, 0], cutoff), 0, 1, model,
                            cutoff=cutoff, label="a")

    def a_star(self) -> KernelHandle:
        """a*(v_Λ) comme noyau (1, 0)"""
        model, cutoff = self.model, self.cutoff
        return KernelHandle(lambda Q, R, p, E: model.v(Q[:, 0], cutoff), 1, 0, model,
                            cutoff=cutoff, label="a*")

    def star(self, left: KernelHandle, right: KernelHandle, ell: int) -> KernelHandle:
        product = StarProduct(left, right, ell, self.measure)
        return KernelHandle(product, product.m_left, product.m_right, self.model,
                            lambda_class=left.lambda_class + right.lambda_class + ell * self.gain,
                            cutoff=self.cutoff, label=f"({left.label}⋆{ell}{right.label})")

    # Noyaux d'ordre un
    def theta_1_1(self) -> KernelHandle:
        model, cutoff = self.model, self.cutoff

        def evaluator(Q, R, p, E):
            q, r = Q[:, 0], R[:, 0]
            return -model.v(q, cutoff) * model.v(r, cutoff) / (
                model.Omega(p + q + r) + E + model.omega(q) + model.omega(r))

        return KernelHandle(evaluator, 1, 1, model, 0.0, cutoff, "θ11")

    def theta_1_0(self) -> KernelHandle:
        model, cutoff = self.model, self.cutoff
        E_0 = model.E_0
        if self.grid:
            points, weights = self.measure.points, self.measure.weights
            v2 = weights * model.v(points, cutoff) ** 2
            omega = model.omega(points)
            reference = np.sum(v2 / (model.Omega(points) + omega + E_0))

            def evaluator(Q, R, p, E):
                shifted = model.Omega(p[:, None, :] + points[None]) + omega[None] + E[:, None]
                return reference - np.sum(v2[None] / shifted, axis=1)
        else:
            evaluator = self._theta_1_0_rule(self.rule)
        return KernelHandle(evaluator, 0, 0, model, self.gain, cutoff, "θ10")

    def _theta_1_0_rule(self, rule: RadialRule) -> Evaluator:
        """θ_{Λ,1,0} par la règle radiale × angulaire vectorisée"""
        model, cutoff = self.model, self.cutoff
        E_0 = model.E_0
        r, x, wx = rule.r, rule.x, rule.wx
        v2 = model.v_r(r, cutoff) ** 2
        omega = model.omega_r(r)
        Omega = model.Omega_r(r)
        dOmega = model.dOmega_r(r)
        gradient = math.isinf(cutoff) and model.gamma == 2
        reference = v2 / (Omega + omega + E_0)

        def evaluator(Q, R, p, E):
            def block(rows: slice) -> np.ndarray:
                norm_p = np.linalg.norm(p[rows], axis=1)[:, None, None]
                e = E[rows][:, None, None]
                radius = np.sqrt(np.maximum(norm_p ** 2 + r[None, :, None] ** 2
                                            + 2.0 * norm_p * r[None, :, None] * x[None, None, :], 0.0))
                inner = 1.0 / (model.Omega_r(radius) + omega[None, :, None] + e)
                if gradient:
                    inner = inner + dOmega[None, :, None] * norm_p * x[None, None, :] / (
                        Omega[None, :, None] + omega[None, :, None] + e) ** 2
                angular = np.tensordot(inner, wx, axes=([2], [0]))
                return np.sum(rule.shell_weights[None] * (reference[None] * rule.wx.sum()
                                                          - v2[None] * angular), axis=1)

            return _chunked(block, len(E), len(r) * len(x))

        return evaluator

    # Récurrence
    def theta(self, n: int, m: int) -> KernelHandle:
        if n < 1 or n > self.model.n_star:
            raise DomainError(f"Aucun contre-terme d'ordre {n} n'est défini (n_* = {self.model.n_star})")
        if m < 0 or m > n:
            raise DomainError(f"m = {m} hors de [0, {n}]")
        with self._lock:
            if (n, m) not in self._theta:
                self._theta[(n, m)] = self._build_theta(n, m)
            return self._theta[(n, m)]

    def _build_theta(self, n: int, m: int) -> KernelHandle:
        if n == 1:
            return self.theta_1_1() if m == 1 else self.theta_1_0()
        model = self.model
        terms: List[Tuple[int, Evaluator]] = []
        for scheme in scheme_service.enumerate_schemes(n, m):
            sign = scheme_service.expansion_sign(scheme)
            outer = self._vartheta_product(scheme)
            if m == 0:
                gradient = (not self.grid) and math.isinf(self.cutoff) and model.gamma == 2
                terms.append((sign, outer.vacuum_subtracted(model.E_0, gradient)))
            else:
                terms.append((sign, outer))
        logger.info(f"θ_{n},{m} assemblé à partir de {len(terms)} schémas")

        def evaluator(Q, R, p, E):
            total = np.zeros(len(E))
            for sign, term in terms:
                total += sign * term(Q, R, p, E)
            return total

        return KernelHandle(evaluator, m, m, model, (n - m) * self.gain, self.cutoff, f"θ{n}{m}")

    def tau(self, I: Tuple[int, ...], L: Tuple[int, ...], J: Tuple[int, ...]) -> KernelHandle:
        """Pli à gauche τ ⋆_{ℓ_μ} θ_{j_{μ+1}, i_{μ+1}} ; L ne contient que ℓ_1..ℓ_{ν-1}"""
        nu = len(J)
        if len(I) != nu or len(L) != max(0, nu - 1):
            raise DomainError("τ demande |I| = |J| = ν et |L| = ν - 1")
        if any(i > j for i, j in zip(I, J)):
            raise DomainError("τ demande i_μ ≤ j_μ")
        for mu in range(1, nu):
            if L[mu - 1] > min(sum(I[:mu]) - sum(L[:mu - 1]), I[mu]):
                raise DomainError(f"ℓ_{mu} = {L[mu - 1]} viole la contrainte de contraction")
        tau = self.theta(J[0], I[0])
        for mu in range(1, nu):
            tau = self.star(tau, self.theta(J[mu], I[mu]), L[mu - 1])
        if nu > 1:
            tau.lambda_class = (sum(J) - sum(I) + sum(L)) * self.gain
            tau.label = f"τ{I}{L}"
        return tau

    def _vartheta_product(self, scheme: ContractionScheme) -> StarProduct:
        tau = self.tau(scheme.I, scheme.L[1:-1], scheme.J)
        inner = self.star(self.a(), tau, scheme.L[0])
        return StarProduct(inner, self.a_star(), scheme.L[-1], self.measure)

    def vartheta(self, scheme: ContractionScheme) -> KernelHandle:
        """ϑ_{J,I,L} = (a H_0^{-1} ⋆_{ℓ_0} τ) H_0^{-1} ⋆_{ℓ_ν} a*, sans soustraction"""
        product = self._vartheta_product(scheme)
        return KernelHandle(product, product.m_left, product.m_right, self.model,
                            cutoff=self.cutoff, label=f"ϑ{scheme.J}{scheme.I}{scheme.L}")

    def vacuum_value(self, scheme: ContractionScheme) -> float:
        """⟨∅, ϑ ∅⟩ à P = 0"""
        d = self.model.d
        product = self._vartheta_product(scheme)
        return float(product(np.zeros((1, 0, d)), np.zeros((1, 0, d)), np.zeros((1, d)),
                             np.array([self.model.E_0]))[0])


class KernelService:
    """Service des noyaux intégraux"""

    # Poids ρ et ρ̃
    def rho_batch(self, model: PolaronModel, lam: float, Q: np.ndarray, E: np.ndarray) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        if np.any(E <= 0):
            raise DomainError("ρ demande E > 0")
        Q = np.asarray(Q, dtype=float)
        v = np.abs(model.v(Q))
        tails = np.cumsum(model.omega(Q)[:, ::-1], axis=1)[:, ::-1]  # ω(Q_j^n)
        E = E[:, None]
        head = np.prod(v[:, :-1] / (E + tails[:, :-1]), axis=1)
        return head * v[:, -1] / (E[:, 0] + tails[:, -1]) ** ((1.0 + lam) / 2.0)

    def rho(self, model: PolaronModel, n: int, lam: float, Q: Sequence, E: float) -> float:
        """ρ_{n,λ}(Q, E)"""
        Q = np.asarray(Q, dtype=float).reshape(1, -1, model.d)
        if Q.shape[1] != n or n < 1:
            raise DomainError(f"ρ_{n} demande exactement {n} impulsions")
        return float(self.rho_batch(model, lam, Q, [E])[0])

    def rho_tilde(self, model: PolaronModel, n: int, lam: float, R: Sequence, E: float) -> float:
        """ρ̃_{n,λ}(R, E) = ρ_{n,λ}((r_n, ..., r_1), E)"""
        R = np.asarray(R, dtype=float).reshape(-1, model.d)
        return self.rho(model, n, lam, R[::-1], E)

    # Noyaux explicites
    def theta_1_1(self, model: PolaronModel, q: Sequence, r: Sequence, p: Sequence, E: float,
                  cutoff: float = math.inf) -> float:
        if E <= 0:
            raise DomainError("θ_{1,1} demande E > 0")
        q, r, p = (np.asarray(x, dtype=float) for x in (q, r, p))
        return float(-model.v(q, cutoff) * model.v(r, cutoff)
                     / (model.Omega(p + q + r) + E + model.omega(q) + model.omega(r)))

    def theta_1_0(self, model: PolaronModel, p: Sequence, E: float) -> float:
        """θ_{1,0}(p, E) à Λ = ∞ par la représentation soustraite de Taylor"""
        value, _ = self.theta_1_0_with_error(model, p, E)
        return value

    def theta_1_0_with_error(self, model: PolaronModel, p: Sequence, E: float) -> Tuple[float, float]:
        if E < 1:
            raise DomainError("θ_{1,0} demande E ≥ 1")
        E_0 = model.E_0
        norm_p = float(np.linalg.norm(p))

        def energy_term(r: float) -> float:
            base = model.Omega_r(r) + model.omega_r(r)
            return model.v_r(r) ** 2 * (E_0 - E) / ((base + E) * (base + E_0))

        value, error = quadrature_service.radial(energy_term, math.inf, model.d,
                                                 label="θ10 terme en E")
        if norm_p > 0:
            gradient = model.gamma == 2

            def remainder(r: float, x: np.ndarray) -> np.ndarray:
                omega, Omega = model.omega_r(r), model.Omega_r(r)
                radius = np.sqrt(np.maximum(norm_p ** 2 + r ** 2 + 2.0 * norm_p * r * x, 0.0))
                out = 1.0 / (model.Omega_r(radius) + omega + E) - 1.0 / (Omega + omega + E)
                if gradient:
                    out = out + model.dOmega_r(r) * norm_p * x / (Omega + omega + E) ** 2
                return model.v_r(r) ** 2 * out

            rest, rest_error = quadrature_service.radial_angular(
                remainder, TAYLOR_TAIL_RADIUS, model.d, label="θ10 reste de Taylor")
            value += rest
            error += rest_error
        return -value, error

    def theta_1_0_cutoff(self, model: PolaronModel, p: Sequence, E: float, cutoff: float) -> float:
        """θ_{Λ,1,0}(p, E) comme une seule intégrale soustraite sur |ξ| ≤ Λ"""
        if E <= 0:
            raise DomainError("θ_{1,0} demande E > 0")
        E_0 = model.E_0
        norm_p = float(np.linalg.norm(p))

        def integrand(r: float, x: np.ndarray) -> np.ndarray:
            omega = model.omega_r(r)
            radius = np.sqrt(np.maximum(norm_p ** 2 + r ** 2 + 2.0 * norm_p * r * x, 0.0))
            return model.v_r(r) ** 2 * (1.0 / (model.Omega_r(radius) + omega + E)
                                        - 1.0 / (model.Omega_r(r) + omega + E_0))

        value, _ = quadrature_service.radial_angular(integrand, cutoff, model.d,
                                                     label="θ10 à cutoff fini")
        return -value

    def theta_1_0_dE(self, model: PolaronModel, p: Sequence, E: float,
                     cutoff: float = math.inf) -> float:
        """∂_E θ_{1,0}(p, E) = ∫ v²/(Ω(p+ξ)+ω(ξ)+E)² dξ"""
        norm_p = float(np.linalg.norm(p))

        def integrand(r: float, x: np.ndarray) -> np.ndarray:
            radius = np.sqrt(np.maximum(norm_p ** 2 + r ** 2 + 2.0 * norm_p * r * x, 0.0))
            return model.v_r(r) ** 2 / (model.Omega_r(radius) + model.omega_r(r) + E) ** 2

        value, _ = quadrature_service.radial_angular(integrand, cutoff, model.d, label="∂_E θ10")
        return value

    # Algèbre des noyaux
    def measure(self, model: PolaronModel, quadrature: Union[QuadSpec, Measure, None]) -> Measure:
        if isinstance(quadrature, (GridMeasure, QMCMeasure)):
            return quadrature
        quadrature = quadrature or QuadSpec()
        if quadrature.scheme == QuadScheme.GRID:
            raise DomainError("Le schéma grid demande la grille d'un FockRig")
        return quadrature_service.measure(quadrature, model.d)

    def algebra(self, model: PolaronModel, quadrature: Union[QuadSpec, Measure, None] = None,
                cutoff: float = math.inf, depth: int = 1) -> KernelAlgebra:
        measure = self.measure(model, quadrature)
        if isinstance(measure, QMCMeasure):
            measure = measure.for_depth(depth)
        return KernelAlgebra(model, measure, cutoff)

    def star_product(self, kappa: KernelHandle, kappa2: KernelHandle, ell: int,
                     quadrature: Union[QuadSpec, Measure, None] = None) -> KernelHandle:
        """κ H_0^{-1} ⋆_ℓ κ′"""
        algebra = self.algebra(kappa.model, quadrature, min(kappa.cutoff, kappa2.cutoff))
        return algebra.star(kappa, kappa2, ell)

    def tau(self, model: PolaronModel, I: Tuple[int, ...], L: Tuple[int, ...], J: Tuple[int, ...],
            quadrature: Union[QuadSpec, Measure, None] = None, cutoff: float = math.inf) -> KernelHandle:
        return self.algebra(model, quadrature, cutoff, depth=sum(J)).tau(tuple(I), tuple(L), tuple(J))

    def theta(self, model: PolaronModel, n: int, m: int,
              quadrature: Union[QuadSpec, Measure, None] = None, cutoff: float = math.inf) -> KernelHandle:
        """θ_{Λ,n,m} ; n = 1 donne les formes explicites"""
        return self.algebra(model, quadrature, cutoff, depth=max(1, n - m)).theta(n, m)

    # Vérifications
    def _samples(self, handle: KernelHandle, samples: int, seed: int):
        rng = np.random.default_rng(seed)
        d = handle.d
        top = min(handle.cutoff, 1e2)

        def momenta(count: int) -> np.ndarray:
            radii = np.exp(rng.uniform(math.log(1e-2), math.log(top), size=(samples, count)))
            z = rng.standard_normal((samples, count, d))
            return radii[..., None] * z / np.linalg.norm(z, axis=-1, keepdims=True)

        Q, R = momenta(handle.m_left), momenta(handle.m_right)
        p = momenta(1)[:, 0]
        E = np.exp(rng.uniform(0.0, math.log(1e3), size=samples))
        return Q, R, p, E

    def kernel_bound_constant(self, handle: KernelHandle, samples: int = 1000,
                              seed: Optional[int] = None) -> KernelBoundReport:
        """Plus petite constante C telle que |κ| ≤ C · borne de K_{m,λ} sur les échantillons"""
        if handle.m_left != handle.m_right:
            raise DomainError("La borne K_{m,λ} demande m_left = m_right")
        model, m, lam = handle.model, handle.m_left, handle.lambda_class
        sigma = 0.0 if lam <= 0 else (1.0 if lam > 1 else max(0.0, lam - 1e-3))
        Q, R, p, E = self._samples(handle, samples, seed if seed is not None else settings.QMC_SEED)
        values = np.abs(handle.evaluate(Q, R, p, E))
        decay = E ** (-max(lam - 1.0, 0.0))
        if m == 0:
            bound = (model.Omega(p) + E) * E ** (-sigma)
        else:
            grid = sorted({s for s in S_GRID if sigma - 1.0 <= s <= 1.0 - sigma}
                          | {sigma - 1.0, 1.0 - sigma})
            bound = np.min([self.rho_batch(model, sigma + s, Q, E)
                            * self.rho_batch(model, sigma - s, R[:, ::-1], E) for s in grid], axis=0)
            bound = bound * decay
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, values / bound, 0.0)
        return KernelBoundReport(label=handle.label, arity=m, lambda_class=lam, sigma=sigma,
                                 fitted_constant=float(np.max(ratio)), samples=samples)

    def rotation_defect(self, handle: KernelHandle, rotations: int = 100, samples: int = 8,
                        seed: Optional[int] = None) -> float:
        """Plus grand écart relatif sous des rotations simultanées de (Q, R, p)"""
        if handle.d == 1:
            return 0.0
        seed = seed if seed is not None else settings.QMC_SEED
        Q, R, p, E = self._samples(handle, samples, seed)
        reference = handle.evaluate(Q, R, p, E)
        matrices = special_ortho_group.rvs(handle.d, size=rotations, random_state=seed)
        matrices = np.asarray(matrices).reshape(rotations, handle.d, handle.d)
        worst = 0.0
        for O in matrices:
            rotated = handle.evaluate(Q @ O.T, R @ O.T, p @ O.T, E)
            scale = np.maximum(np.abs(reference), 1e-300)
            worst = max(worst, float(np.max(np.abs(rotated - reference) / scale)))
        return worst


# Instance globale
kernel_service = KernelService()
