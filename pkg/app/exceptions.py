"""
Exceptions du domaine
"""
from typing import Any, List, Optional


class RenormalisationError(RuntimeError):
    """Erreur de base de l'application"""

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class ModelValidationError(RenormalisationError):
    """Le modèle viole l'hypothèse de travail (profils, sous-criticité)"""

    def __init__(self, message: str, violations: Optional[List[Any]] = None,
                 scaling_class: Optional[str] = None):
        super().__init__(message)
        self.violations = violations or []
        self.scaling_class = scaling_class

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["violations"] = [
            v.model_dump() if hasattr(v, "model_dump") else v for v in self.violations
        ]
        data["scaling_class"] = self.scaling_class
        return data


class DomainError(RenormalisationError, ValueError):
    """Précondition d'une opération non satisfaite"""


class QuadratureError(RenormalisationError):
    """Estimation d'erreur au-delà de la tolérance d'acceptation"""

    def __init__(self, message: str, estimate: float, value: float = float("nan")):
        super().__init__(f"{message} (erreur estimée {estimate:.3e})")
        self.estimate = estimate
        self.value = value

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["estimate"] = self.estimate
        return data


class BasisTooLargeError(RenormalisationError):
    """Dimension de l'espace de Fock au-delà du plafond configuré"""

    def __init__(self, dim: int, cap: int):
        super().__init__(f"Dimension {dim} supérieure au plafond {cap}")
        self.dim = dim
        self.cap = cap

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["dim"] = self.dim
        return data


class EscalationError(RenormalisationError):
    """‖G‖ reste trop grand après l'escalade de E_0"""

    def __init__(self, norm: float, E_0: float):
        super().__init__(
            f"‖G‖ = {norm:.4f} après escalade (E_0 = {E_0:g}); augmenter E_0 dans la configuration"
        )
        self.norm = norm
        self.E_0 = E_0

    def to_dict(self) -> dict:
        data = super().to_dict()
        data.update({"norm": self.norm, "E_0": self.E_0})
        return data


class SolverError(RenormalisationError):
    """Échec d'un solveur propre ou linéaire"""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class ConfigError(RenormalisationError):
    """Configuration d'étude invalide"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["key"] = self.key
        return data
