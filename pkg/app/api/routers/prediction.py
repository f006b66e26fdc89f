# app/api/routers/prediction.py
from fastapi import APIRouter

from app.schemas.predictor import MobilityRequest
from app.schemas.scenario import VehicleState
from app.schemas.warning import WarningDecision, WarningRequest
from app.services.predictor import predict_mobility
from app.services.warning import check_warning

router = APIRouter(prefix="/prediction", tags=["Prediction"])


@router.post(
    "/mobility",
    response_model=VehicleState,
    summary="Extrapolate one vehicle"
)
def mobility(request: MobilityRequest):
    """Constant-acceleration prediction from the last two of the T + 1 most recent states."""
    return predict_mobility(request.history, request.horizon, request.tau)


@router.post(
    "/warning",
    response_model=WarningDecision,
    summary="Evaluate the early-warning rule"
)
def warning(request: WarningRequest):
    return check_warning(
        request.distribution,
        request.predicted_position,
        request.bs_position,
        request.gamma_th,
        request.d_I,
        request.vue_id,
    )
