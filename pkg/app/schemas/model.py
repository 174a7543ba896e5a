"""
Schémas Pydantic pour les modèles de polaron
"""
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Optional

from app.models.physics import ProfileFamily, ScalingClass


class ProfileSpec(BaseModel):
    """Profil radial d'une dispersion ou du facteur de forme"""
    model_config = ConfigDict(extra="forbid")

    family: ProfileFamily
    mass: Optional[float] = Field(default=None, ge=0.0)  # c ; défaut c_p (Ω) ou c_b (ω)
    radii: Optional[List[float]] = None   # profils tabulés
    values: Optional[List[float]] = None
    radial: bool = True

    @model_validator(mode="after")
    def check_table(self):
        if self.family == ProfileFamily.TABLE:
            if not self.radii or not self.values or len(self.radii) != len(self.values):
                raise ValueError("un profil tabulé demande radii et values de même longueur")
            if len(self.radii) < 4:
                raise ValueError("un profil tabulé demande au moins 4 points")
            if any(r <= 0 for r in self.radii) or any(v <= 0 for v in self.values):
                raise ValueError("radii et values doivent être strictement positifs")
            if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
                raise ValueError("radii doit être strictement croissant")
        return self


class ModelSpec(BaseModel):
    """Spécification d'un modèle de polaron"""
    model_config = ConfigDict(extra="forbid")

    d: int = Field(gt=0)
    alpha: float
    gamma: int
    g: float = Field(gt=0.0)
    c_b: float = Field(default=1.0, ge=0.0)
    c_p: float = Field(default=1.0, ge=0.0)
    E_0: float = Field(default=1.0, ge=0.0)
    P: Optional[List[float]] = None
    Omega: ProfileSpec
    omega: ProfileSpec
    v: ProfileSpec = ProfileSpec(family=ProfileFamily.POWER)

    @field_validator("gamma")
    @classmethod
    def check_gamma(cls, value: int) -> int:
        if value not in (1, 2):
            raise ValueError("gamma doit valoir 1 ou 2")
        return value

    @model_validator(mode="after")
    def check_momentum(self):
        if self.P is None:
            self.P = [0.0] * self.d
        elif len(self.P) != self.d:
            raise ValueError(f"P doit avoir {self.d} composantes")
        if self.v.family in (ProfileFamily.RELATIVISTIC, ProfileFamily.QUADRATIC):
            raise ValueError("le facteur de forme v accepte power, constant ou table")
        for name in ("Omega", "omega"):
            if getattr(self, name).family in (ProfileFamily.CONSTANT, ProfileFamily.POWER):
                raise ValueError(f"{name} accepte relativistic, quadratic ou table")
        return self


class BoundFit(BaseModel):
    """Inégalité vérifiée à une constante ajustée près"""
    inequality: str
    fitted_constant: float
    min_ratio: float
    max_ratio: float
    holds: bool


class Violation(BaseModel):
    """Inégalité violée avec son point témoin"""
    inequality: str
    witness: Optional[float] = None  # rayon |k| du témoin
    lhs: float
    rhs: float
    fitted_constant: Optional[float] = None


class ValidationReport(BaseModel):
    """Résultat de la validation d'un modèle"""
    valid: bool
    delta: float
    scaling_class: ScalingClass
    fits: List[BoundFit] = []
    violations: List[Violation] = []
    flags: List[str] = []


class ScalingReport(BaseModel):
    """Analyse d'échelle ultraviolette"""
    model_config = ConfigDict(populate_by_name=True)

    delta: float
    n_star: int
    scaling_class: ScalingClass = Field(alias="class")
    predicted_exponents: List[float]
    needs_renormalisation: bool
    negative_delta_extension: bool = False
