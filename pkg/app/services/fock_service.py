"""
Service des espaces de Fock tronqués : base, opérateurs creux, récurrence de T_Λ,
habillage G, reste R_Λ, spectres et identités opératorielles
"""
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, product
from threading import Lock
from typing import Dict, List, Optional, Sequence, Tuple, Union
import math
import logging

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as sparse_linalg

from app.config import settings
from app.exceptions import BasisTooLargeError, DomainError, EscalationError, SolverError
from app.models.physics import GroundStateMethod
from app.schemas.fock import (
    CheckResult, ConvergenceRow, ConvergenceTable, EscalationStep, GridSpec,
    GroundStateResult, OperatorBoundsReport, OracleReport, ResolventCheckReport
)
from app.services.counterterm_service import counterterm_service
from app.services.fit_service import fit_service
from app.services.kernel_service import KernelHandle, kernel_service
from app.services.model_service import PolaronModel, sphere_area
from app.services.quadrature_service import GridMeasure
from app.services.scheme_service import all_compositions, compositions

logger = logging.getLogger(__name__)

Matrix = Union[sparse.spmatrix, np.ndarray]

# Tolérances des identités exactes
EXACT_TOL = 1e-12
ORACLE_TOL = 1e-10
IDENTITY_TOL = 1e-9
DOMAIN_TOL = 1e-8


def _max_abs(matrix: Matrix) -> float:
    if sparse.issparse(matrix):
        return float(abs(matrix).max()) if matrix.nnz else 0.0
    return float(np.max(np.abs(matrix))) if matrix.size else 0.0


def relative_residual(lhs: Matrix, rhs: Matrix) -> float:
    """max|lhs - rhs| / max(1, max|rhs|)"""
    return _max_abs(lhs - rhs) / max(1.0, _max_abs(rhs))


def _dense(matrix: Matrix) -> np.ndarray:
    return matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix)


def _parts(total: int) -> List[Tuple[int, ...]]:
    """Compositions de total, la composition vide pour total = 0"""
    return [()] if total == 0 else list(all_compositions(total))


class Grid:
    """Points de ℝ^d et poids de quadrature associés"""

    def __init__(self, points: Sequence, weights: Sequence):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        weights = np.asarray(weights, dtype=float)
        if len(points) == 0:
            raise DomainError("Une grille demande au moins un point")
        if len(weights) != len(points):
            raise DomainError("points et weights doivent avoir la même longueur")
        if np.any(weights <= 0):
            raise DomainError("Les poids de la grille doivent être strictement positifs")
        if len(np.unique(np.round(points, 12), axis=0)) != len(points):
            raise DomainError("Les points de la grille doivent être distincts")
        self.points = points
        self.weights = weights

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def max_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.points, axis=1)))

    def measure(self) -> GridMeasure:
        return GridMeasure(self.points, self.weights)

    @classmethod
    def radial_shells(cls, d: int, shells: int, r_min: float, r_max: float,
                      directions: int = 1) -> "Grid":
        """Coquilles log-espacées, paires antipodales le long des premiers axes"""
        if directions > d:
            raise DomainError(f"au plus {d} directions en dimension {d}")
        edges = np.geomspace(r_min, r_max, shells + 1) if shells > 1 else np.array([r_min, r_max])
        if shells == 1 and r_min == r_max:
            edges = np.array([0.5 * r_min, 1.5 * r_min])
        radii = np.sqrt(edges[:-1] * edges[1:])
        volumes = sphere_area(d) / d * (edges[1:] ** d - edges[:-1] ** d)
        axes = np.eye(d)[:directions]
        points, weights = [], []
        for radius, volume in zip(radii, volumes):
            for axis in axes:
                for sign in (1.0, -1.0):
                    points.append(sign * radius * axis)
                    weights.append(volume / (2 * directions))
        return cls(points, weights)

    @classmethod
    def from_spec(cls, spec: GridSpec, d: int) -> "Grid":
        if spec.family == "explicit":
            grid = cls(spec.points, spec.weights)
            if grid.d != d:
                raise DomainError(f"Les points de la grille doivent être dans ℝ^{d}")
            return grid
        return cls.radial_shells(d, spec.shells, spec.r_min, spec.r_max, spec.directions)

    def __repr__(self):
        return f"<Grid {self.size} points d={self.d}>"


class FockRig:
    """Espace de Fock tronqué sur une grille

    La base va jusqu'à N_max + tampon bosons ; les N_max premiers niveaux forment
    l'espace physique, les niveaux du tampon servent aux opérateurs qui créent
    avant d'annihiler.
    """

    def __init__(self, grid: Grid, N_max: int, model: PolaronModel, buffer: int):
        if N_max < 0:
            raise DomainError("N_max doit être positif ou nul")
        if grid.d != model.d:
            raise DomainError(f"La grille doit être dans ℝ^{model.d}")
        self.grid = grid
        self.N_max = N_max
        self.model = model
        self.N_ext = N_max + buffer
        size = grid.size

        dim_ext = sum(math.comb(size + n - 1, n) for n in range(self.N_ext + 1))
        if dim_ext > settings.MAX_BASIS_DIM:
            logger.error(f"Dimension {dim_ext} au-delà du plafond {settings.MAX_BASIS_DIM}")
            raise BasisTooLargeError(dim_ext, settings.MAX_BASIS_DIM)

        self.basis: List[Tuple[int, ...]] = [
            state for n in range(self.N_ext + 1)
            for state in combinations_with_replacement(range(size), n)
        ]
        self.index: Dict[Tuple[int, ...], int] = {state: i for i, state in enumerate(self.basis)}
        self.sizes = np.array([len(state) for state in self.basis])
        self.dim = int(np.sum(self.sizes <= N_max))
        self.dim_ext = len(self.basis)

        omega = model.omega(grid.points)
        self.momenta = np.array([grid.points[list(state)].sum(axis=0) if state else np.zeros(grid.d)
                                 for state in self.basis])
        self.omega_sums = np.array([omega[list(state)].sum() if state else 0.0
                                    for state in self.basis])
        self._annihilators = [self._build_annihilator(i) for i in range(size)]
        self._cache: Dict[tuple, "TSequence"] = {}
        self._lock = Lock()
        logger.info(f"Rig construit : {size} points, N_max = {N_max}, dim = {self.dim} "
                    f"(tampon {self.dim_ext})")

    def _build_annihilator(self, i: int) -> sparse.csr_matrix:
        rows, cols, data = [], [], []
        for col, state in enumerate(self.basis):
            count = state.count(i)
            if count:
                position = state.index(i)
                rows.append(self.index[state[:position] + state[position + 1:]])
                cols.append(col)
                data.append(math.sqrt(count))
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.dim_ext, self.dim_ext))

    def build_creator(self, i: int) -> sparse.csr_matrix:
        """b*_i construit directement (√(n_i+1)), sans transposition"""
        rows, cols, data = [], [], []
        for col, state in enumerate(self.basis):
            if len(state) == self.N_ext:
                continue
            target = tuple(sorted(state + (i,)))
            rows.append(self.index[target])
            cols.append(col)
            data.append(math.sqrt(state.count(i) + 1))
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.dim_ext, self.dim_ext))

    def annihilator(self, i: int) -> sparse.csr_matrix:
        return self._annihilators[i]

    def h0_diag(self, E_0: Optional[float] = None, P: Optional[np.ndarray] = None) -> np.ndarray:
        """Ω(dΓ(k) - P) + dΓ(ω) + E_0 sur l'espace tamponné"""
        E_0 = self.model.E_0 if E_0 is None else E_0
        P = self.model.P if P is None else np.asarray(P, dtype=float)
        return self.model.Omega(self.momenta - P) + self.omega_sums + E_0

    def a(self, cutoff: float = math.inf) -> sparse.csr_matrix:
        """a(v_Λ) = Σ_k v_Λ(k) √w_k b_k"""
        coefficients = self.model.v(self.grid.points, cutoff) * np.sqrt(self.grid.weights)
        total = sparse.csr_matrix((self.dim_ext, self.dim_ext))
        for coefficient, b in zip(coefficients, self._annihilators):
            if coefficient != 0.0:
                total = total + coefficient * b
        return total.tocsr()

    def restrict(self, matrix: Matrix) -> Matrix:
        """Bloc physique (au plus N_max bosons)"""
        if sparse.issparse(matrix):
            return matrix.tocsr()[:self.dim, :self.dim]
        return matrix[:self.dim, :self.dim]

    @property
    def operators(self) -> Dict[str, sparse.csr_matrix]:
        """Opérateurs nommés sur l'espace physique"""
        a = self.restrict(self.a())
        return {
            "H_0": sparse.diags(self.h0_diag()[:self.dim]).tocsr(),
            "N": sparse.diags(self.sizes[:self.dim].astype(float)).tocsr(),
            "a": a,
            "a*": a.T.tocsr(),
        }

    def __repr__(self):
        return f"<FockRig {self.grid.size} points N_max={self.N_max} dim={self.dim}>"


@dataclass
class TSequence:
    """T_{Λ,1..n_*} sur l'espace tamponné et les contre-termes de grille"""
    cutoff: float
    E_0: float
    T: List[sparse.csr_matrix]
    E: List[float]
    h0: np.ndarray

    @property
    def E_lambda(self) -> float:
        return float(sum(self.E))

    def total(self) -> sparse.csr_matrix:
        total = sparse.csr_matrix((len(self.h0), len(self.h0)))
        for term in self.T:
            total = total + term
        return total


@dataclass
class RenormalisedHamiltonian:
    """Facteurs de H_Λ sur l'espace physique"""
    cutoff: float
    E_0: float
    E_lambda: float
    H: sparse.csr_matrix
    T: sparse.csr_matrix
    G: sparse.csr_matrix
    R: sparse.csr_matrix
    R_sum: np.ndarray
    H_via_factorization: sparse.csr_matrix
    norm_G: float
    identity_residual: float
    r_formula_residual: float
    escalation: List[EscalationStep] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "cutoff": self.cutoff, "E_0": self.E_0, "E_lambda": self.E_lambda,
            "norm_G": self.norm_G, "identity_residual": self.identity_residual,
            "r_formula_residual": self.r_formula_residual,
            "escalation": [step.model_dump() for step in self.escalation],
        }


class FockService:
    """Service des espaces de Fock tronqués"""

    def build_rig(self, grid: Grid, N_max: int, model: PolaronModel) -> FockRig:
        return FockRig(grid, N_max, model, buffer=model.n_star + 1)

    # Récurrence de T
    def _recursion(self, rig: FockRig, cutoff: float, h0: np.ndarray,
                   counterterms: Optional[List[float]] = None) -> Tuple[List[sparse.csr_matrix], List[float]]:
        """T_{j+1} + E_{j+1} = Σ_J (-1)^{ν+1} a H_0^{-1} Π (T_{j_μ} H_0^{-1}) a*"""
        R0 = sparse.diags(1.0 / h0).tocsr()
        A = rig.a(cutoff)
        A_star = A.T.tocsr()
        identity = sparse.identity(rig.dim_ext, format="csr")
        T: List[sparse.csr_matrix] = []
        E: List[float] = []
        for j in range(rig.model.n_star):
            block = sparse.csr_matrix((rig.dim_ext, rig.dim_ext))
            for J in _parts(j):
                chain = R0
                for part in J:
                    chain = chain @ T[part - 1] @ R0
                block = block + (-1) ** (len(J) + 1) * (A @ chain @ A_star)
            block = block.tocsr()
            value = float(block[0, 0]) if counterterms is None else counterterms[j]
            E.append(value)
            T.append((block - value * identity).tocsr())
        return T, E

    def t_sequence(self, rig: FockRig, cutoff: float, E_0: Optional[float] = None) -> TSequence:
        E_0 = rig.model.E_0 if E_0 is None else E_0
        if not math.isinf(cutoff) and cutoff > rig.grid.max_radius * (1.0 + 1e-12):
            raise DomainError(f"Λ = {cutoff:g} dépasse le rayon maximal de la grille")
        key = (cutoff, E_0)
        with rig._lock:
            if key in rig._cache:
                return rig._cache[key]
        h0 = rig.h0_diag(E_0)
        counterterms = None
        if np.any(rig.model.P):
            # Les contre-termes sont pris à P = 0
            _, counterterms = self._recursion(rig, cutoff, rig.h0_diag(E_0, np.zeros(rig.grid.d)))
        T, E = self._recursion(rig, cutoff, h0, counterterms)
        sequence = TSequence(cutoff=cutoff, E_0=E_0, T=T, E=E, h0=h0)
        with rig._lock:
            rig._cache[key] = sequence
        return sequence

    def assemble_T(self, rig: FockRig, n: int, cutoff: float, E_0: Optional[float] = None) -> sparse.csr_matrix:
        """T_{Λ,n} restreint à l'espace physique"""
        if n < 1 or n > rig.model.n_star:
            raise DomainError(f"Aucun contre-terme d'ordre {n} n'est défini (n_* = {rig.model.n_star})")
        return rig.restrict(self.t_sequence(rig, cutoff, E_0).T[n - 1])

    # Noyaux → matrices
    def kernel_operator(self, rig: FockRig, handle: KernelHandle) -> sparse.csr_matrix:
        """∫ b*_Q κ(Q, R, dΓ(k) - P, dΓ(ω) + E_0) b_R sur l'espace physique"""
        m_left, m_right = handle.arity
        size = rig.grid.size
        triples = rig.dim * size ** (m_left + m_right)
        if triples > settings.KERNEL_ASSEMBLY_CAP:
            raise DomainError(f"{triples} triplets au-delà du plafond {settings.KERNEL_ASSEMBLY_CAP}")
        sqrt_w = np.sqrt(rig.grid.weights)
        rows, cols, amplitudes, left, right, spectators = [], [], [], [], [], []
        for col in range(rig.dim):
            state = rig.basis[col]
            if len(state) < m_right:
                continue
            if len(state) - m_right + m_left > rig.N_max:
                continue
            for R in product(range(size), repeat=m_right):
                counts = Counter(state)
                amplitude = 1.0
                for r in R:
                    if counts[r] == 0:
                        amplitude = 0.0
                        break
                    amplitude *= math.sqrt(counts[r])
                    counts[r] -= 1
                if amplitude == 0.0:
                    continue
                spectator = tuple(sorted(counts.elements()))
                for Q in product(range(size), repeat=m_left):
                    created = Counter(spectator)
                    weight = amplitude
                    for q in Q:
                        weight *= math.sqrt(created[q] + 1)
                        created[q] += 1
                    weight *= float(np.prod(sqrt_w[list(Q) + list(R)]))
                    rows.append(rig.index[tuple(sorted(created.elements()))])
                    cols.append(col)
                    amplitudes.append(weight)
                    left.append(Q)
                    right.append(R)
                    spectators.append(rig.index[spectator])

        if not rows:
            return sparse.csr_matrix((rig.dim, rig.dim))
        points, model = rig.grid.points, handle.model
        spectators = np.array(spectators)
        Q = points[np.array(left, dtype=int).reshape(len(rows), m_left)]
        R = points[np.array(right, dtype=int).reshape(len(rows), m_right)]
        p = rig.momenta[spectators] - model.P
        E = rig.omega_sums[spectators] + model.E_0
        values = handle.evaluate(Q, R, p, E)
        data = np.asarray(amplitudes) * values
        return sparse.coo_matrix((data, (rows, cols)), shape=(rig.dim, rig.dim)).tocsr()

    # Habillage et reste
    def operator_norm(self, matrix: Matrix, seed: int = 0) -> float:
        """‖M‖ par itération de puissance sur M* M"""
        if _max_abs(matrix) == 0.0:
            return 0.0
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(matrix.shape[1])
        x /= np.linalg.norm(x)
        estimate = 0.0
        for _ in range(settings.POWER_ITERATIONS):
            y = matrix.conj().T @ (matrix @ x)
            value = float(np.linalg.norm(y))
            if value == 0.0:
                return 0.0
            x = y / value
            if abs(value - estimate) <= settings.POWER_TOL * value:
                estimate = value
                break
            estimate = value
        return math.sqrt(estimate)

    def _dressing(self, rig: FockRig, cutoff: float, E_0: float):
        sequence = self.t_sequence(rig, cutoff, E_0)
        T = rig.restrict(sequence.total())
        h0 = sequence.h0[:rig.dim]
        A = rig.restrict(rig.a(cutoff))
        K = (sparse.diags(h0) + T).tocsc()
        K_inv_A_star = sparse.csr_matrix(sparse_linalg.spsolve(K, A.T.tocsc()))
        G = (-K_inv_A_star).tocsr()
        return sequence, T, h0, A, K, G

    def g_norm(self, rig: FockRig, cutoff: float, E_0: float) -> float:
        """‖G_{T_Λ}‖ = ‖(H_0+T)^{-1} a*(v_Λ)‖"""
        return self.operator_norm(self._dressing(rig, cutoff, E_0)[5])

    def escalate_E0(self, rig: FockRig, cutoff: float) -> Tuple[float, List[EscalationStep]]:
        """Multiplier E_0 jusqu'à ‖G‖ ≤ cible, dans la limite du nombre d'escalades"""
        E_0 = rig.model.E_0
        if E_0 <= 0:
            logger.warning("E_0 ≤ 0 : l'escalade part de E_0 = 1")
            E_0 = 1.0
        history: List[EscalationStep] = []
        for step in range(settings.E0_MAX_ESCALATIONS + 1):
            norm = self.g_norm(rig, cutoff, E_0)
            history.append(EscalationStep(E_0=E_0, norm_G=norm))
            if norm <= settings.G_NORM_TARGET:
                return E_0, history
            if step < settings.E0_MAX_ESCALATIONS:
                logger.info(f"‖G‖ = {norm:.4f} à E_0 = {E_0:g} : escalade")
                E_0 *= settings.E0_ESCALATION_FACTOR
        logger.error(f"‖G‖ = {norm:.4f} après escalade")
        raise EscalationError(norm, E_0)

    def _s_sequence(self, T: List[Matrix], resolvent: Matrix, count: int) -> List[Matrix]:
        """S_ℓ = Σ_ν (-1)^ν Σ_{|J|=ℓ} Π T_{j_μ} R, par compositions explicites"""
        n = len(T)
        dim = resolvent.shape[0]
        S = [sparse.identity(dim, format="csr") if sparse.issparse(resolvent) else np.eye(dim)]
        for ell in range(1, count):
            total = 0 * S[0]
            for nu in range(1, ell + 1):
                for J in compositions(ell, nu, n):
                    chain = S[0]
                    for part in J:
                        chain = chain @ T[part - 1] @ resolvent
                    total = total + (-1) ** nu * chain
            S.append(total)
        return S

    def r_sum_formula(self, rig: FockRig, sequence: TSequence) -> np.ndarray:
        """R_Λ = Σ_ℓ Σ_{j>ℓ} a (H_0+T)^{-1} T_j H_0^{-1} S_{n_*-1-ℓ} a*, restreint"""
        n_star = len(sequence.T)
        if n_star == 0:
            return np.zeros((rig.dim, rig.dim))
        R0 = sparse.diags(1.0 / sequence.h0).tocsr()
        A = rig.a(sequence.cutoff)
        K = (sparse.diags(sequence.h0) + sequence.total()).tocsc()
        S = self._s_sequence(sequence.T, R0, n_star)
        total = sparse.csr_matrix((rig.dim_ext, rig.dim_ext))
        for ell in range(n_star):
            for j in range(ell + 1, n_star + 1):
                total = total + sequence.T[j - 1] @ R0 @ S[n_star - 1 - ell] @ A.T
        inner = sparse_linalg.spsolve(K, total.tocsc())
        return _dense(rig.restrict(A @ sparse.csr_matrix(inner)))

    def assemble_renormalized_H(self, rig: FockRig, cutoff: float) -> RenormalisedHamiltonian:
        """H_Λ et sa factorisation (1-G*)(H_0+T)(1-G) + R_Λ - E_0"""
        E_0, history = self.escalate_E0(rig, cutoff)
        sequence, T, h0, A, K, G = self._dressing(rig, cutoff, E_0)
        E_lambda = sequence.E_lambda
        identity = sparse.identity(rig.dim, format="csr")
        H = (sparse.diags(h0) - E_0 * identity + A + A.T).tocsr()

        R = (-T + A @ G - E_lambda * identity).tocsr()
        one_minus_G = identity - G
        factorised = (one_minus_G.T @ K @ one_minus_G + R - E_0 * identity).tocsr()
        identity_residual = relative_residual(factorised, H - E_lambda * identity)

        # R exact sur l'espace tamponné, comparé à la formule en somme
        A_ext = rig.a(cutoff)
        K_ext = (sparse.diags(sequence.h0) + sequence.total()).tocsc()
        inner = sparse.csr_matrix(sparse_linalg.spsolve(K_ext, A_ext.T.tocsc()))
        R_exact = rig.restrict(-sequence.total() - A_ext @ inner
                               - E_lambda * sparse.identity(rig.dim_ext, format="csr"))
        R_sum = self.r_sum_formula(rig, sequence)
        r_residual = _max_abs(_dense(R_exact) - R_sum) / max(_max_abs(R_exact), 1e-300)

        norm_G = history[-1].norm_G
        if identity_residual > IDENTITY_TOL:
            logger.warning(f"Résidu de factorisation {identity_residual:.2e}")
        logger.info(f"H_Λ assemblé à Λ = {cutoff:g}, E_0 = {E_0:g}, ‖G‖ = {norm_G:.4f}")
        return RenormalisedHamiltonian(cutoff=cutoff, E_0=E_0, E_lambda=E_lambda, H=H, T=T, G=G,
                                       R=R, R_sum=R_sum, H_via_factorization=factorised,
                                       norm_G=norm_G, identity_residual=identity_residual,
                                       r_formula_residual=r_residual, escalation=history)

    def domain_identity_residual(self, rig: FockRig, renormalised: RenormalisedHamiltonian,
                                 samples: int = 20, seed: int = 0) -> float:
        """HΨ = Ω(dΓ(k)-P)Ψ + dΓ(ω)Ψ + a*Ψ + a(1-G)Ψ + (T+R)Ψ pour Ψ = (1-G)^{-1}(H_0+T)^{-1}φ"""
        cutoff, E_0 = renormalised.cutoff, renormalised.E_0
        _, T, h0, A, K, G = self._dressing(rig, cutoff, E_0)
        identity = sparse.identity(rig.dim, format="csc")
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(samples):
            phi = rng.standard_normal(rig.dim)
            psi = sparse_linalg.spsolve((identity - G).tocsc(), sparse_linalg.spsolve(K, phi))
            lhs = renormalised.H @ psi - renormalised.E_lambda * psi
            rhs = (h0 - E_0) * psi + A.T @ psi + A @ (psi - G @ psi) + (T + renormalised.R) @ psi
            worst = max(worst, float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(lhs), 1e-300)))
        return worst

    # Spectre
    def ground_state(self, matrix: Matrix,
                     method: GroundStateMethod = GroundStateMethod.LANCZOS) -> Tuple[float, np.ndarray, float]:
        """Plus basse paire propre d'une matrice symétrique : (énergie, vecteur, résidu)"""
        dim = matrix.shape[0]
        scale = max(1.0, _max_abs(matrix))
        if _max_abs(matrix - matrix.T) > 1e-10 * scale:
            raise DomainError("ground_state demande une matrice symétrique")

        def dense_pair() -> Tuple[float, np.ndarray]:
            if dim > settings.DENSE_DIM_CAP:
                raise DomainError(f"Diagonalisation dense limitée à dim ≤ {settings.DENSE_DIM_CAP}")
            values, vectors = linalg.eigh(_dense(matrix), subset_by_index=[0, 0])
            return float(values[0]), vectors[:, 0]

        if method == GroundStateMethod.DENSE or dim < 3:
            if method == GroundStateMethod.LANCZOS:
                logger.warning(f"dim = {dim} trop petite pour Lanczos : diagonalisation dense")
            energy, vector = dense_pair()
        else:
            try:
                values, vectors = sparse_linalg.eigsh(sparse.csr_matrix(matrix), k=1, which="SA",
                                                      maxiter=settings.LANCZOS_MAXITER,
                                                      tol=settings.LANCZOS_TOL)
            except sparse_linalg.ArpackNoConvergence as exc:
                residual = float("nan")
                if len(exc.eigenvalues):
                    v = exc.eigenvectors[:, 0]
                    residual = float(np.linalg.norm(matrix @ v - exc.eigenvalues[0] * v))
                logger.error("Lanczos non convergé")
                raise SolverError("Lanczos non convergé", residual) from exc
            energy, vector = float(values[0]), vectors[:, 0]
            if dim <= settings.DENSE_DIM_CAP:
                reference, reference_vector = dense_pair()
                if abs(reference - energy) > 1e-9 * max(1.0, abs(reference)):
                    logger.warning(f"Lanczos ({energy:.12g}) et dense ({reference:.12g}) divergent : "
                                   "résultat dense retenu")
                    energy, vector = reference, reference_vector
        residual = float(np.linalg.norm(matrix @ vector - energy * vector))
        return energy, vector, residual

    def ground_state_result(self, matrix: Matrix,
                            method: GroundStateMethod = GroundStateMethod.LANCZOS) -> GroundStateResult:
        energy, _, residual = self.ground_state(matrix, method)
        return GroundStateResult(energy=energy, residual=residual, method=method, dim=matrix.shape[0])

    # Développement de la résolvante
    def resolvent_expansion_check(self, rig: FockRig, n: int, cutoff: float,
                                  L_order: int) -> ResolventCheckReport:
        """Les deux membres du développement de (H_n + z)^{-1} en z = i, pour L = 0..L_order"""
        if n < 1 or n > rig.model.n_star:
            raise DomainError(f"Aucun contre-terme d'ordre {n} n'est défini (n_* = {rig.model.n_star})")
        if L_order < 0:
            raise DomainError("L_order doit être positif ou nul")
        if rig.dim > settings.DENSE_DIM_CAP:
            raise DomainError(f"Vérification dense limitée à dim ≤ {settings.DENSE_DIM_CAP}")
        sequence = self.t_sequence(rig, cutoff)
        T = [_dense(rig.restrict(term)).astype(complex) for term in sequence.T[:n]]
        h0 = sequence.h0[:rig.dim]
        z = 1j
        Rz = np.diag(1.0 / (h0 + z))
        H_n = np.diag(h0).astype(complex) + sum(T)
        try:
            Gz = linalg.inv(H_n + z * np.eye(rig.dim))
        except linalg.LinAlgError as exc:
            logger.error("H_n + z non inversible")
            raise SolverError("H_n + z non inversible") from exc

        S = self._s_sequence(T, Rz, L_order + 2)
        scale = max(_max_abs(Gz), 1e-300)
        residuals = []
        for L in range(L_order + 1):
            rhs = Rz @ sum(S[:L + 1])
            for ell in range(L + 1):
                for j in range(ell + 1, n + 1):
                    rhs = rhs - Gz @ T[j - 1] @ Rz @ S[L - ell]
            residuals.append(_max_abs(Gz - rhs) / scale)

        # S_ℓ par récurrence
        recursive = [np.eye(rig.dim, dtype=complex)]
        for ell in range(1, L_order + 2):
            term = np.zeros((rig.dim, rig.dim), dtype=complex)
            for j in range(1, min(ell, n) + 1):
                term -= T[j - 1] @ Rz @ recursive[ell - j]
            recursive.append(term)
        recursion_residual = max(_max_abs(a - b) / max(1.0, _max_abs(b)) for a, b in zip(S, recursive))

        # Série de Neumann de (H_0 + Σ ε^j T_j + z)^{-1}
        perturbation = np.linalg.norm(sum(T) @ Rz, 2) if T else 0.0
        epsilon = 0.1 / max(1.0, perturbation)
        orders = []
        for L in range(L_order + 1):
            errors = []
            for eps in (epsilon, epsilon / 2.0):
                exact = linalg.inv(np.diag(h0 + z) + sum(eps ** (j + 1) * T[j] for j in range(n)))
                approx = Rz @ sum(eps ** ell * S[ell] for ell in range(L + 1))
                errors.append(_max_abs(exact - approx))
            orders.append(math.log2(errors[0] / errors[1]) if errors[1] > 0 and errors[0] > 0
                          else float("nan"))

        max_residual = max(residuals)
        passed = max_residual <= IDENTITY_TOL and recursion_residual <= IDENTITY_TOL
        return ResolventCheckReport(n=n, cutoff=cutoff, residuals=residuals, max_residual=max_residual,
                                    recursion_residual=recursion_residual, neumann_orders=orders,
                                    passed=passed)

    # Identités exactes
    def rig_identities(self, rig: FockRig, cutoff: float) -> List[CheckResult]:
        """Adjonction, commutateurs, pull-through, symétrie et conservation du nombre de T"""
        checks: List[CheckResult] = []

        def record(name: str, residual: float, tolerance: float = EXACT_TOL):
            checks.append(CheckResult(name=name, residual=residual, tolerance=tolerance,
                                      passed=residual <= tolerance))

        size = rig.grid.size
        creators = [rig.build_creator(i) for i in range(size)]
        record("adjointness", max(_max_abs(creators[i] - rig.annihilator(i).T) for i in range(size)))
        A = rig.a(cutoff)
        coefficients = rig.model.v(rig.grid.points, cutoff) * np.sqrt(rig.grid.weights)
        A_star = sum(c * b for c, b in zip(coefficients, creators))
        record("a_adjoint", _max_abs(A_star - A.T))
        record("a_vacuum", float(np.max(np.abs(A[:, 0].toarray()))) if A.nnz else 0.0)

        lower = np.flatnonzero(rig.sizes <= rig.N_ext - 1)
        worst = 0.0
        for i in range(size):
            for j in range(size):
                commutator = (rig.annihilator(i) @ creators[j] - creators[j] @ rig.annihilator(i)).tocsr()
                block = commutator[lower][:, lower]
                expected = sparse.identity(len(lower)) * (1.0 if i == j else 0.0)
                worst = max(worst, _max_abs(block - expected))
        record("canonical_commutators", worst)

        worst = 0.0
        omega = rig.model.omega(rig.grid.points)
        for i in range(size):
            b = rig.annihilator(i)
            for c in range(rig.grid.d):
                momentum = rig.momenta[:, c]
                lhs = b @ sparse.diags(momentum)
                rhs = sparse.diags(momentum + rig.grid.points[i, c]) @ b
                worst = max(worst, _max_abs(lhs - rhs))
            lhs = b @ sparse.diags(rig.omega_sums)
            rhs = sparse.diags(rig.omega_sums + omega[i]) @ b
            worst = max(worst, _max_abs(lhs - rhs))
        record("pull_through", worst)

        if rig.model.n_star:
            sequence = self.t_sequence(rig, cutoff)
            number = sparse.diags(rig.sizes[:rig.dim].astype(float))
            symmetry = conservation = 0.0
            for term in sequence.T:
                T = rig.restrict(term)
                scale = max(1.0, _max_abs(T))
                symmetry = max(symmetry, _max_abs(T - T.T) / scale)
                conservation = max(conservation, _max_abs(T @ number - number @ T) / scale)
            record("T_symmetry", symmetry)
            record("T_number_conservation", conservation)
            if not np.any(rig.model.P):
                record("T_vacuum_gauge", max(abs(float(term[0, 0])) for term in sequence.T))
        return checks

    def oracle_check(self, rig: FockRig, cutoff: float) -> OracleReport:
        """Opérateurs assemblés depuis les noyaux contre la récurrence matricielle"""
        model = rig.model
        if model.n_star < 1:
            raise DomainError("L'oracle demande n_* ≥ 1")
        algebra = kernel_service.algebra(model, rig.grid.measure(), cutoff)
        sequence = self.t_sequence(rig, cutoff)
        checks: List[CheckResult] = []

        def record(name: str, lhs: Matrix, rhs: Matrix):
            residual = _max_abs(lhs - rhs) / max(_max_abs(rhs), 1e-300)
            checks.append(CheckResult(name=name, residual=residual, tolerance=ORACLE_TOL,
                                      passed=residual <= ORACLE_TOL))

        op = lambda handle: self.kernel_operator(rig, handle)
        for n in range(1, min(model.n_star, 2) + 1):
            assembled = sum(op(algebra.theta(n, m)) for m in range(n + 1))
            record(f"theta_{n}", assembled, rig.restrict(sequence.T[n - 1]))

        theta = algebra.theta_1_1()
        R0 = sparse.diags(1.0 / sequence.h0[:rig.dim])
        matrix = op(theta)
        record("star_theta_1_1", op(algebra.star(theta, theta, 0)) + op(algebra.star(theta, theta, 1)),
               matrix @ R0 @ matrix)

        A_ext = rig.a(cutoff)
        R0_ext = sparse.diags(1.0 / sequence.h0)
        a, a_star = algebra.a(), algebra.a_star()
        record("star_a_a_star", op(algebra.star(a, a_star, 0)) + op(algebra.star(a, a_star, 1)),
               rig.restrict(A_ext @ R0_ext @ A_ext.T))

        points, weights = rig.grid.points, rig.grid.weights
        for n in range(1, model.n_star + 1):
            value = counterterm_service.grid_E_n(model, points, weights, n, cutoff)
            record(f"E_{n}_grid", np.array([value]), np.array([sequence.E[n - 1]]))

        passed = all(check.passed for check in checks)
        logger.info(f"Oracle noyaux/matrices à Λ = {cutoff:g} : {'accord' if passed else 'désaccord'}")
        return OracleReport(cutoff=cutoff, dim=rig.dim, checks=checks, passed=passed)

    # Études
    def _convergence_point(self, rig: FockRig, cutoff: float, psi: np.ndarray,
                           method: GroundStateMethod) -> Tuple[float, float, np.ndarray]:
        sequence = self.t_sequence(rig, cutoff)
        A = rig.restrict(rig.a(cutoff))
        identity = sparse.identity(rig.dim, format="csr")
        H = (sparse.diags(sequence.h0[:rig.dim]) - sequence.E_0 * identity + A + A.T).tocsr()
        energy, _, _ = self.ground_state(H, method)
        shifted = (H - sequence.E_lambda * identity + 1j * identity).tocsc()
        probe = sparse_linalg.spsolve(shifted, psi.astype(complex))
        logger.info(f"Point de convergence Λ = {cutoff:g} : E_gs = {energy:.10g}")
        return energy, sequence.E_lambda, probe

    def convergence_study(self, model: PolaronModel, grid: Grid, lambdas: Sequence[float], N_max: int,
                          seed: int = 0, method: GroundStateMethod = GroundStateMethod.LANCZOS,
                          threads: int = 1) -> ConvergenceTable:
        """Énergies fondamentales brutes et renormalisées, sondes de résolvante en Λ"""
        lambdas = [float(x) for x in lambdas]
        if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
            raise DomainError("Les cutoffs doivent être strictement croissants")
        rig = self.build_rig(grid, N_max, model)
        rng = np.random.default_rng(seed)
        psi = rng.standard_normal(rig.dim)
        psi /= np.linalg.norm(psi)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                points = list(pool.map(lambda cutoff: self._convergence_point(rig, cutoff, psi, method),
                                       lambdas))
        else:
            points = [self._convergence_point(rig, cutoff, psi, method) for cutoff in lambdas]

        rows: List[ConvergenceRow] = []
        for i, (cutoff, (energy, E_lambda, probe)) in enumerate(zip(lambdas, points)):
            row = ConvergenceRow(cutoff=cutoff, E_gs_raw=energy, E_lambda_grid=E_lambda,
                                 E_gs_renormalized=energy - E_lambda)
            if i > 0:
                previous_energy, previous_E, previous_probe = points[i - 1]
                row.resolvent_cauchy_diff = float(np.linalg.norm(probe - previous_probe))
                row.energy_cauchy_diff = abs(row.E_gs_renormalized - (previous_energy - previous_E))
                row.raw_energy_diff = abs(energy - previous_energy)
            rows.append(row)

        decay = None
        diffs = [row.resolvent_cauchy_diff for row in rows[1:]]
        if len(diffs) >= 2 and all(x and x > 0 for x in diffs):
            decay, _, _ = fit_service.power_fit(lambdas[1:], diffs)
        growth = None
        if len(rows) >= 2 and rows[-1].E_lambda_grid != rows[0].E_lambda_grid:
            growth = (rows[-1].E_gs_raw - rows[0].E_gs_raw) / (rows[-1].E_lambda_grid - rows[0].E_lambda_grid)
        return ConvergenceTable(N_max=N_max, dim=rig.dim, rows=rows, cauchy_decay_exponent=decay,
                                raw_growth_ratio=growth)

    def verify_operator_bounds(self, rig: FockRig, cutoff: float,
                               s_values: Sequence[float] = (0.8, 1.0),
                               lambdas: Optional[Sequence[float]] = None) -> OperatorBoundsReport:
        """Bornes a-ω, borne relative de T, ‖G‖ et condition d'uniformité"""
        model = rig.model
        points, weights = rig.grid.points, rig.grid.weights
        omega = model.omega(points)
        v = model.v(points, cutoff)
        A = rig.restrict(rig.a(cutoff))

        a_omega: Dict[str, CheckResult] = {}
        omega_sums = rig.omega_sums[:rig.dim]
        for s in s_values:
            scaling = np.where(omega_sums > 0, np.maximum(omega_sums, 1e-300) ** (-s), 0.0)
            lhs = self.operator_norm(A @ sparse.diags(scaling))
            rhs = float(np.sqrt(np.sum(weights * v ** 2 * omega ** (-2.0 * s))))
            a_omega[f"{s:g}"] = CheckResult(name=f"a_omega s={s:g}", residual=lhs / rhs if rhs else 0.0,
                                            tolerance=1.0, passed=lhs <= rhs * (1.0 + 1e-8))

        lambdas = list(lambdas) if lambdas is not None else [cutoff / 10.0, cutoff / math.sqrt(10.0), cutoff]
        constants: Dict[str, float] = {}
        for value in lambdas:
            sequence = self.t_sequence(rig, value)
            T = rig.restrict(sequence.total())
            constants[f"{value:g}"] = self.operator_norm(T @ sparse.diags(1.0 / sequence.h0[:rig.dim]))
        finite = [c for c in constants.values() if c > 0]
        variation = max(finite) / min(finite) - 1.0 if finite else 0.0

        E_0, history = self.escalate_E0(rig, cutoff)
        sequence, T, h0, _, K, G = self._dressing(rig, cutoff, E_0)
        norm_G = history[-1].norm_G
        s_G = 0.5 * (0.5 * (1.0 + model.ratio) + 1.0)
        G_bound = 2.0 * float(np.sqrt(np.sum(weights * v ** 2 * omega ** (-2.0 * s_G)))) * E_0 ** (s_G - 1.0)
        K_inv = sparse.csr_matrix(sparse_linalg.spsolve(K, sparse.identity(rig.dim, format="csc")))
        uniformity = self.operator_norm(K_inv) + self.operator_norm(T @ K_inv)

        witness = [EscalationStep(E_0=value, norm_G=self.g_norm(rig, cutoff, value))
                   for value in (1.0, 4.0, 16.0, 64.0)]
        passed = all(check.passed for check in a_omega.values()) and norm_G < 1.0
        return OperatorBoundsReport(a_omega=a_omega, T_relative_constants=constants,
                                    T_relative_variation=variation, E_0=E_0, norm_G=norm_G,
                                    G_bound=G_bound, G_bound_exponent=s_G, uniformity=uniformity,
                                    uniformity_holds=uniformity <= 1.0, escalation_witness=witness,
                                    passed=passed)


# Instance globale
fock_service = FockService()
