"""
Schémas Pydantic pour les fichiers de configuration d'étude et les manifestes
"""
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Dict, List, Optional, Tuple

from app.config import settings
from app.models.physics import GroundStateMethod, StarCase
from app.models.run_record import StudyKind
from app.schemas.fock import GridSpec
from app.schemas.kernel import QuadSpec
from app.schemas.model import ModelSpec

DEFAULT_LEMMA_PAIRS: List[Tuple[float, float]] = [
    (0.0, 2.0), (1.0, 1.0), (2.0, 0.0), (2.0, 1.0), (0.5, 1.5), (1.0, 2.0), (3.0, 1.0)
]


class RunConfig(BaseModel):
    """Une étude = un fichier de configuration"""
    model_config = ConfigDict(extra="forbid")

    study: StudyKind
    model: Optional[ModelSpec] = None
    quadrature: QuadSpec = QuadSpec()
    grid: GridSpec = GridSpec()
    lambdas: List[float] = []
    seed: int = settings.QMC_SEED
    output_path: str = settings.OUTPUT_DIR
    threads: int = Field(default=1, ge=1)

    # schemes
    n: int = Field(default=2, ge=2)      # n+1 du niveau θ_{n+1,m}
    m: Optional[int] = Field(default=None, ge=0)

    # converge, oracle, bounds
    N_max: int = Field(default=2, ge=0)
    cutoff: Optional[float] = Field(default=None, gt=0.0)
    method: GroundStateMethod = GroundStateMethod.LANCZOS
    s_values: List[float] = [0.8, 1.0]
    L_order: int = Field(default=2, ge=0)
    domain_samples: int = Field(default=20, ge=1)

    # exponents
    lemma_pairs: List[Tuple[float, float]] = DEFAULT_LEMMA_PAIRS
    lemma_a: float = Field(default=0.0, ge=0.0)
    lemma_b: float = Field(default=10.0, gt=0.0)
    star_cases: List[StarCase] = list(StarCase)

    @model_validator(mode="after")
    def check_study(self):
        if self.study != StudyKind.SCHEMES and self.model is None:
            raise ValueError(f"l'étude {self.study.value} demande une table model")
        if self.study == StudyKind.COUNTERTERMS and len(self.lambdas) < 4:
            raise ValueError("l'étude counterterms demande au moins 4 lambdas")
        if self.study == StudyKind.CONVERGE and len(self.lambdas) < 2:
            raise ValueError("l'étude converge demande au moins 2 lambdas")
        if any(b <= a for a, b in zip(self.lambdas, self.lambdas[1:])):
            raise ValueError("lambdas doit être strictement croissant")
        # La graine de l'étude pilote la QMC sauf si quadrature.seed est donné
        if "seed" not in self.quadrature.model_fields_set:
            self.quadrature = self.quadrature.model_copy(update={"seed": self.seed})
        return self

    def working_cutoff(self) -> float:
        """Cutoff des études sur grille : cutoff, sinon le plus grand Λ, sinon r_max"""
        if self.cutoff is not None:
            return self.cutoff
        if self.lambdas:
            return self.lambdas[-1]
        return self.grid.r_max


class RunManifest(BaseModel):
    """Manifeste écrit à côté des artefacts d'une exécution"""
    study: StudyKind
    config_hash: str
    seed: int
    wall_time: float
    versions: Dict[str, str]
    artifacts: List[str]
    created_at: str
