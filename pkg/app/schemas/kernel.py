"""
Schémas Pydantic pour les noyaux et la vérification des exposants
"""
from pydantic import BaseModel, ConfigDict, Field
from typing import List, Optional

from app.config import settings
from app.models.physics import QuadScheme, StarCase


class QuadSpec(BaseModel):
    """Paramètres d'intégration des contractions internes"""
    model_config = ConfigDict(extra="forbid")

    scheme: QuadScheme = QuadScheme.QMC
    rel_tol: float = Field(default=settings.QUAD_REL_TOL, gt=0.0)
    accept_tol: float = Field(default=settings.QUAD_ACCEPT_TOL, gt=0.0)
    qmc_points: int = Field(default=settings.QMC_POINTS, ge=16)
    seed: int = settings.QMC_SEED
    angular_nodes: int = Field(default=settings.ANGULAR_NODES, ge=2)


class KernelBoundReport(BaseModel):
    """Constante ajustée de la borne de la classe K_{m,λ}"""
    label: str
    arity: int
    lambda_class: float
    sigma: float
    fitted_constant: float
    samples: int


class ExponentFit(BaseModel):
    """Exposant ajusté comparé à sa prédiction"""
    name: str
    predicted: float
    fitted: float
    tolerance: float
    passed: bool
    sharp: bool = True


class IntegralLemmaReport(BaseModel):
    """Vérification de la borne élémentaire sur les intégrales radiales"""
    s: float
    t: float
    a: float
    b: float
    delta_ratio: float
    value: float
    error_estimate: float
    a_exponent: ExponentFit
    b_exponent: ExponentFit
    passed: bool


class StarExponentReport(BaseModel):
    """Décroissance en E d'un produit ⋆_ℓ comparée au gain prédit"""
    case: StarCase
    ell: int
    arity: int
    energies: List[float]
    values: List[float]
    predicted_decay: float
    fitted_decay: float
    predicted_gain: float
    fitted_gain: float
    tolerance: float
    passed: bool
    error_estimate: Optional[float] = None
