"""
Modèle pour le registre des exécutions
"""
from sqlalchemy import Column, Integer, String, Text, DateTime, Enum, Float
from datetime import datetime
import enum

from app.database import Base


class StudyKind(str, enum.Enum):
    """Types d'études"""
    CLASSIFY = "classify"
    SCHEMES = "schemes"
    COUNTERTERMS = "counterterms"
    CONVERGE = "converge"
    ORACLE = "oracle"
    BOUNDS = "bounds"
    EXPONENTS = "exponents"


class RunStatus(str, enum.Enum):
    """Statuts d'une exécution"""
    SUCCEEDED = "succeeded"
    FAILED = "failed"


class RunRecord(Base):
    """Exécution d'une étude"""
    __tablename__ = "run_records"

    id = Column(Integer, primary_key=True, index=True)
    study = Column(Enum(StudyKind), nullable=False)
    config_hash = Column(String(64), nullable=False, index=True)
    seed = Column(Integer, nullable=False)
    status = Column(Enum(RunStatus), nullable=False)

    wall_time = Column(Float, nullable=True)  # secondes
    output_dir = Column(String(512), nullable=True)
    message = Column(Text, nullable=True)

    created_at = Column(DateTime, default=datetime.utcnow)

    def __repr__(self):
        return f"<RunRecord {self.study.value} {self.config_hash[:8]}>"
