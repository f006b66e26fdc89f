# app/api/routers/metrics.py
from fastapi import APIRouter

from app.schemas.metrics import UNBOUNDED, LinkDurationRequest, LinkDurationResponse
from app.services.metrics import link_connectivity, link_duration, relative_kinematics

router = APIRouter(prefix="/metrics", tags=["Metrics"])


@router.post(
    "/link-duration",
    response_model=LinkDurationResponse,
    summary="Remaining link time and connectivity"
)
def duration(request: LinkDurationRequest):
    """
    Time until two nodes leave range d, and its connectivity over tau.

    A relatively static pair reports ``unbounded`` with no duration.
    """
    kin = relative_kinematics(request.pos_a, request.vel_a, request.pos_b, request.vel_b, request.d)
    value = link_duration(kin)
    connectivity = link_connectivity(value, request.tau)
    if value is UNBOUNDED:
        return LinkDurationResponse(unbounded=True, connectivity=connectivity)
    return LinkDurationResponse(duration=value, connectivity=connectivity)
