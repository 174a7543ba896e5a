"""
Routes des études légères : classification, schémas, premier contre-terme
et registre des exécutions
"""
from fastapi import APIRouter, Depends, HTTPException, Query, status
from sqlalchemy.ext.asyncio import AsyncSession
from pydantic import BaseModel, Field
from typing import List, Optional
from datetime import datetime
import logging

from app.database import get_db, latest_runs
from app.exceptions import ConfigError, DomainError, ModelValidationError, RenormalisationError
from app.models.run_record import RunStatus, StudyKind
from app.schemas.model import ModelSpec, ScalingReport
from app.schemas.scheme import Census, ContractionScheme
from app.services.counterterm_service import counterterm_service
from app.services.model_service import model_service
from app.services.scheme_service import scheme_service

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/studies", tags=["Études"])


class FirstCounterTermRequest(BaseModel):
    model: ModelSpec
    lambdas: List[float] = Field(min_length=1)


class FirstCounterTermPoint(BaseModel):
    cutoff: float
    E_1: float
    abs_error_estimate: float


class RunRecordResponse(BaseModel):
    id: int
    study: StudyKind
    config_hash: str
    seed: int
    status: RunStatus
    wall_time: Optional[float] = None
    output_dir: Optional[str] = None
    message: Optional[str] = None
    created_at: datetime

    class Config:
        from_attributes = True


def http_error(exc: RenormalisationError) -> HTTPException:
    """Convertir une erreur du domaine en réponse HTTP"""
    logger.error(f"Requête rejetée : {exc}")
    if isinstance(exc, ConfigError):
        code = status.HTTP_422_UNPROCESSABLE_ENTITY
    elif isinstance(exc, (DomainError, ModelValidationError)):
        code = status.HTTP_400_BAD_REQUEST
    else:
        code = status.HTTP_500_INTERNAL_SERVER_ERROR
    return HTTPException(status_code=code, detail=exc.to_dict())


@router.post("/classify", response_model=ScalingReport)
async def classify(spec: ModelSpec):
    """Analyse d'échelle d'un modèle"""
    return model_service.scaling_report(spec)


@router.get("/schemes", response_model=List[ContractionScheme])
async def schemes(n: int = Query(..., ge=2), m: int = Query(..., ge=0)):
    """Schémas de contraction de θ_{n,m}"""
    try:
        return scheme_service.enumerate_schemes(n, m)
    except RenormalisationError as exc:
        raise http_error(exc)


@router.get("/census/{n}", response_model=Census)
async def census(n: int):
    """Nombre de schémas par m"""
    try:
        return scheme_service.census(n)
    except RenormalisationError as exc:
        raise http_error(exc)


@router.post("/counterterms/first", response_model=List[FirstCounterTermPoint])
def first_counterterm(request: FirstCounterTermRequest):
    """E_{Λ,1} sur une liste de cutoffs"""
    try:
        model = model_service.validate_model(request.model)
        points = []
        for cutoff in request.lambdas:
            value, error = counterterm_service.E_1_with_error(model, cutoff)
            points.append(FirstCounterTermPoint(cutoff=cutoff, E_1=value, abs_error_estimate=error))
        return points
    except RenormalisationError as exc:
        raise http_error(exc)


@router.get("/runs", response_model=List[RunRecordResponse])
async def list_runs(
    limit: int = Query(20, ge=1, le=500),
    db: AsyncSession = Depends(get_db)
):
    """Dernières exécutions du registre"""
    return await latest_runs(db, limit)
