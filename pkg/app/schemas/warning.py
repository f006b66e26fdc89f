# schemas/warning.py
from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.predictor import StrengthDistribution


class WarningCause(str, Enum):
    LOW_STRENGTH = "low_strength"
    OUT_OF_COVERAGE = "out_of_coverage"
    NONE = "none"


class WarningDecision(BaseModel):
    """Early-warning outcome for one VUE."""
    model_config = ConfigDict(frozen=True)

    vue_id: int
    triggered: bool
    cause: WarningCause
    mu: float
    sigma: float = Field(..., ge=0)

    @model_validator(mode="after")
    def _consistent(self):
        if self.triggered != (self.cause != WarningCause.NONE):
            raise ValueError("triggered must agree with cause")
        return self


class WarningRequest(BaseModel):
    vue_id: int = 0
    distribution: StrengthDistribution
    predicted_position: Tuple[float, float]
    bs_position: Optional[Tuple[float, float]] = None
    gamma_th: float = -80.0
    d_I: float = Field(400.0, gt=0)


class V2IInference(BaseModel):
    """Inferred V2I strength of one VUE toward its serving BS at t + tau."""
    model_config = ConfigDict(frozen=True)

    vue_id: int
    distribution: StrengthDistribution
    bs_position: Optional[Tuple[float, float]] = None
