"""
Énumérations du domaine physique
"""
import enum


class ScalingClass(str, enum.Enum):
    """Classe d'échelle ultraviolette"""
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


class ProfileFamily(str, enum.Enum):
    """Familles de profils radiaux (dispersions et facteur de forme)"""
    RELATIVISTIC = "relativistic"  # √(c + k²)
    QUADRATIC = "quadratic"        # c + k²
    TABLE = "table"                # interpolation d'une table radiale
    CONSTANT = "constant"          # facteur de forme uniquement
    POWER = "power"                # (1 + k²)^(-α/2), facteur de forme uniquement


class QuadScheme(str, enum.Enum):
    """Schémas d'intégration des contractions internes"""
    GRID = "grid"
    QMC = "qmc"
    RADIAL = "radial"


class StarCase(str, enum.Enum):
    """Cas des lemmes de produit ⋆"""
    ELL_ZERO = "ell_zero"
    ELL_MID = "ell_mid"
    ELL_FULL = "ell_full"


class FitModel(str, enum.Enum):
    """Modèles d'ajustement de divergence"""
    POWER = "power"
    LOG = "log"
    CONSTANT_LIMIT = "constant_limit"


class GroundStateMethod(str, enum.Enum):
    """Méthodes de calcul de l'état fondamental"""
    DENSE = "dense"
    LANCZOS = "lanczos"
