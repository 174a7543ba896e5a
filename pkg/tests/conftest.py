"""
Fixtures communes : modèles de référence, petite grille et petit rig
"""
import os
import tempfile

# Le registre des tests ne touche pas ./runs.db
os.environ.setdefault(
    "DATABASE_URL",
    "sqlite+aiosqlite:///" + os.path.join(tempfile.gettempdir(), "renormalisation-tests.db"),
)

import pytest

from app.models.physics import ProfileFamily
from app.schemas.kernel import QuadSpec
from app.schemas.model import ModelSpec, ProfileSpec
from app.services.fock_service import Grid, fock_service
from app.services.model_service import model_service


def quadratic_spec(**overrides) -> ModelSpec:
    """d=3, α=0, γ=2, Ω et ω quadratiques, v constant : δ = 1, n_* = 2"""
    data = dict(d=3, alpha=0.0, gamma=2, g=1.0, E_0=1.0,
                Omega=ProfileSpec(family=ProfileFamily.QUADRATIC),
                omega=ProfileSpec(family=ProfileFamily.QUADRATIC),
                v=ProfileSpec(family=ProfileFamily.CONSTANT))
    data.update(overrides)
    return ModelSpec(**data)


def relativistic_spec(**overrides) -> ModelSpec:
    """d=1, α=0, γ=1, dispersions relativistes : δ = 0, n_* = 1"""
    data = dict(d=1, alpha=0.0, gamma=1, g=1.0, E_0=0.0,
                Omega=ProfileSpec(family=ProfileFamily.RELATIVISTIC),
                omega=ProfileSpec(family=ProfileFamily.RELATIVISTIC),
                v=ProfileSpec(family=ProfileFamily.POWER))
    data.update(overrides)
    return ModelSpec(**data)


@pytest.fixture
def spec_factory():
    return {"quadratic": quadratic_spec, "relativistic": relativistic_spec}


@pytest.fixture
def quadratic_model():
    return model_service.validate_model(quadratic_spec())


@pytest.fixture
def relativistic_model():
    return model_service.validate_model(relativistic_spec())


@pytest.fixture
def small_grid():
    # 2 coquilles × 1 paire antipodale : 4 points, rayon max ≈ 2.38
    return Grid.radial_shells(3, 2, 0.5, 4.0)


@pytest.fixture
def small_rig(small_grid):
    model = model_service.validate_model(quadratic_spec(g=0.5))
    return fock_service.build_rig(small_grid, 2, model)


@pytest.fixture
def quad():
    return QuadSpec(qmc_points=2 ** 11, seed=7)
