# app/api/routers/links.py
from typing import List, Optional

from fastapi import APIRouter, Depends, Query
from sqlalchemy.orm import Session

from app.core.config import get_db
from app.crud.link_record import crud_link_record
from app.data.vehicle_catalog import DensityLevel
from app.schemas.channel import LinkRecordOut, LinkType

router = APIRouter(prefix="/links", tags=["Link Records"])


@router.get(
    "",
    response_model=List[LinkRecordOut],
    summary="List stored link records"
)
def list_links(
    link_type: Optional[LinkType] = None,
    density_level: Optional[DensityLevel] = None,
    skip: int = Query(0, ge=0),
    limit: int = Query(100, ge=1, le=1000),
    db: Session = Depends(get_db)
):
    return crud_link_record.get_multi(
        db, link_type=link_type, density_level=density_level, skip=skip, limit=limit
    )


@router.get(
    "/count",
    summary="Count stored link records"
)
def count_links(
    link_type: Optional[LinkType] = None,
    db: Session = Depends(get_db)
):
    return {"count": crud_link_record.count(db, link_type=link_type)}
