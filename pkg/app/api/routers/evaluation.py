# app/api/routers/evaluation.py
from typing import List, Optional

from fastapi import APIRouter, Depends, Query
from sqlalchemy.orm import Session

from app.core.config import get_db
from app.crud.experiment_result import crud_experiment_result
from app.schemas.harness import ExperimentResultOut, Method

router = APIRouter(prefix="/evaluation", tags=["Evaluation"])


@router.get(
    "/results",
    response_model=List[ExperimentResultOut],
    summary="Stored experiment cells"
)
def results(
    method: Optional[Method] = None,
    density: Optional[float] = None,
    skip: int = Query(0, ge=0),
    limit: int = Query(100, ge=1, le=1000),
    db: Session = Depends(get_db)
):
    return crud_experiment_result.get_multi(
        db,
        method=method.value if method is not None else None,
        density=density,
        skip=skip,
        limit=limit,
    )
