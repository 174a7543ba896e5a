# Modèles de données
# Importer tous les modèles pour que SQLAlchemy crée les tables

from app.models.run_record import RunRecord, RunStatus, StudyKind
from app.models.physics import (
    FitModel, GroundStateMethod, ProfileFamily, QuadScheme, ScalingClass, StarCase
)

__all__ = [
    "RunRecord",
    "RunStatus",
    "StudyKind",
    "FitModel",
    "GroundStateMethod",
    "ProfileFamily",
    "QuadScheme",
    "ScalingClass",
    "StarCase",
]
