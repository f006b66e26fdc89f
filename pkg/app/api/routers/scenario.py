# app/api/routers/scenario.py
from fastapi import APIRouter

from app.core.config import settings
from app.schemas.scenario import AssociateRequest, AssociateResponse, MapRequest, WorldMap
from app.services.scenario import associate_bs, generate_map

router = APIRouter(prefix="/scenario", tags=["Scenario"])


@router.post(
    "/map",
    response_model=WorldMap,
    summary="Generate a grid city"
)
def create_map(request: MapRequest):
    """
    Build a Manhattan-style map with evenly spread base stations.

    BS height and transmit power come from the service settings.
    """
    return generate_map(
        request.blocks_x,
        request.blocks_y,
        request.block_size,
        request.road_width,
        request.bs_count,
        request.seed,
        bs_height=settings.BS_HEIGHT,
        bs_tx_power=settings.BS_TX_POWER,
    )


@router.post(
    "/associate",
    response_model=AssociateResponse,
    summary="Strongest base station in coverage"
)
def associate(request: AssociateRequest):
    index = associate_bs(request.vehicle, request.world_map, request.rss_per_bs, request.d_I)
    return AssociateResponse(bs_index=index)
