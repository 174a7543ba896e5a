"""
Schémas Pydantic pour les espaces de Fock tronqués
"""
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Dict, List, Literal, Optional

from app.models.physics import GroundStateMethod


class GridSpec(BaseModel):
    """Discrétisation de L²(ℝ^d) : coquilles radiales ou points explicites"""
    model_config = ConfigDict(extra="forbid")

    family: Literal["radial_shells", "explicit"] = "radial_shells"
    shells: int = Field(default=2, ge=1)
    r_min: float = Field(default=0.5, gt=0.0)
    r_max: float = Field(default=50.0, gt=0.0)
    directions: int = Field(default=1, ge=1)   # paires antipodales par coquille
    points: Optional[List[List[float]]] = None
    weights: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_family(self):
        if self.family == "explicit":
            if not self.points or not self.weights or len(self.points) != len(self.weights):
                raise ValueError("une grille explicite demande points et weights de même longueur")
        elif self.r_max < self.r_min:
            raise ValueError("r_max doit dépasser r_min")
        return self


class CheckResult(BaseModel):
    """Résidu d'une identité vérifiée sur l'espace tronqué"""
    name: str
    residual: float
    tolerance: float
    passed: bool


class ResolventCheckReport(BaseModel):
    """Développement de la résolvante de H_n en z = i"""
    n: int
    cutoff: float
    residuals: List[float]          # un résidu par ordre L
    max_residual: float
    recursion_residual: float       # S_ℓ par composition contre S_ℓ par récurrence
    neumann_orders: List[float]     # ordre observé du reste de la série de Neumann
    passed: bool


class EscalationStep(BaseModel):
    E_0: float
    norm_G: float


class GroundStateResult(BaseModel):
    energy: float
    residual: float
    method: GroundStateMethod
    dim: int


class ConvergenceRow(BaseModel):
    cutoff: float
    E_gs_raw: float
    E_lambda_grid: float
    E_gs_renormalized: float
    resolvent_cauchy_diff: Optional[float] = None
    energy_cauchy_diff: Optional[float] = None
    raw_energy_diff: Optional[float] = None


class ConvergenceTable(BaseModel):
    """Étude de convergence en Λ à grille fixe"""
    N_max: int
    dim: int
    rows: List[ConvergenceRow]
    cauchy_decay_exponent: Optional[float] = None
    raw_growth_ratio: Optional[float] = None
    note: str = ("Les différences de Cauchy sur l'espace tronqué sont un indice de "
                 "convergence au sens fort des résolvantes, pas une équivalence.")


class OperatorBoundsReport(BaseModel):
    """Bornes d'opérateurs vérifiées numériquement sur le rig"""
    a_omega: Dict[str, CheckResult]         # par valeur de s
    T_relative_constants: Dict[str, float]  # par cutoff
    T_relative_variation: float
    E_0: float
    norm_G: float
    G_bound: float
    G_bound_exponent: float
    uniformity: float                       # ‖(H_0+T)^{-1}‖ + ‖T (H_0+T)^{-1}‖
    uniformity_holds: bool
    escalation_witness: List[EscalationStep]
    passed: bool


class OracleReport(BaseModel):
    """Accord noyaux ↔ matrices sur un rig"""
    cutoff: float
    dim: int
    checks: List[CheckResult]
    passed: bool
