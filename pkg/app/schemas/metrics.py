# schemas/metrics.py
import math
from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Duration(str, Enum):
    """Marker for a link that never leaves range (zero relative speed)."""
    UNBOUNDED = "unbounded"


UNBOUNDED = Duration.UNBOUNDED


class EdgeMetrics(BaseModel):
    """QoS annotation of one virtual link."""
    model_config = ConfigDict(frozen=True)

    l_S: float = Field(..., gt=0, le=1)
    l_C: float = Field(..., gt=0, le=1)
    l_H: int = 1

    @model_validator(mode="after")
    def _unit_hop(self):
        if self.l_H != 1:
            raise ValueError("link hop count is always 1")
        return self


class RelativeKinematics(BaseModel):
    """Scalar relative geometry of a node pair."""
    model_config = ConfigDict(frozen=True)

    delta_d: float = Field(..., ge=0)
    delta_v: float = Field(..., ge=0)
    alpha: float = Field(..., ge=0, le=math.pi)
    d: float = Field(..., gt=0)


class PathMetrics(BaseModel):
    """Path strength, connectivity and hop count."""
    model_config = ConfigDict(frozen=True)

    p_S: float = Field(..., ge=0, le=1)
    p_C: float = Field(..., ge=0, le=1)
    p_H: int = Field(..., ge=1)


class LinkDurationRequest(BaseModel):
    pos_a: Tuple[float, float]
    vel_a: Tuple[float, float] = (0.0, 0.0)
    pos_b: Tuple[float, float]
    vel_b: Tuple[float, float] = (0.0, 0.0)
    d: float = Field(..., gt=0)
    tau: float = Field(1.0, gt=0)


class LinkDurationResponse(BaseModel):
    duration: Optional[float] = None
    unbounded: bool = False
    connectivity: float
