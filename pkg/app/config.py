"""
Configuration de l'application
"""
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Paramètres de configuration"""

    # Application
    APP_NAME: str = "Renormalisation Polaron"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Registre des exécutions
    DATABASE_URL: str = "sqlite+aiosqlite:///./runs.db"
    OUTPUT_DIR: str = "results"

    # Espace de Fock tronqué
    MAX_BASIS_DIM: int = 200_000
    DENSE_DIM_CAP: int = 2000
    KERNEL_ASSEMBLY_CAP: int = 2_000_000  # nombre max de triplets (état, Q, R)

    # Quadrature
    QUAD_REL_TOL: float = 1e-6
    QUAD_ACCEPT_TOL: float = 1e-4
    QUAD_LIMIT: int = 200
    QMC_POINTS: int = 2 ** 14
    QMC_SEED: int = 12345
    ANGULAR_NODES: int = 48
    MEMO_RESOLUTION: float = 1e-6
    MEMO_MAX_ENTRIES: int = 4096

    # Validation des modèles
    VALIDATION_SAMPLES: int = 64
    VALIDATION_R_MIN: float = 1e-3
    VALIDATION_R_MAX: float = 1e6
    FD_STEP: float = 1e-5
    BOUND_SPREAD: float = 1e3  # écart max toléré autour de la constante ajustée

    # Habillage G et escalade de E_0
    E0_ESCALATION_FACTOR: float = 4.0
    E0_MAX_ESCALATIONS: int = 6
    G_NORM_TARGET: float = 0.9
    POWER_ITERATIONS: int = 500
    POWER_TOL: float = 1e-10

    # Spectre
    LANCZOS_MAXITER: int = 10_000
    LANCZOS_TOL: float = 1e-12

    # Ajustements
    LOG_FIT_THRESHOLD: float = 0.05

    class Config:
        env_file = ".env"
        case_sensitive = True


settings = Settings()
