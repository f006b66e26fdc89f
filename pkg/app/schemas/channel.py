# schemas/channel.py
import math
from enum import Enum
from typing import Dict, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.data.vehicle_catalog import DensityLevel
from app.schemas.scenario import VehicleState


class LinkClass(str, Enum):
    """Propagation class of one link instance."""
    LOS = "LOS"
    NLOSB = "NLOSb"
    NLOSV = "NLOSv"


class LinkType(str, Enum):
    V2I = "V2I"
    V2V = "V2V"


class BSDescriptor(BaseModel):
    """Receiver side of a V2I record."""
    model_config = ConfigDict(frozen=True)

    index: int = Field(..., ge=0)
    x: float
    y: float
    height: float

    @property
    def position(self):
        return (self.x, self.y)


class LinkRecord(BaseModel):
    """One item of the historical link database."""
    model_config = ConfigDict(frozen=True)

    link_type: LinkType
    tx: VehicleState
    rx: Union[VehicleState, BSDescriptor]
    rss: float
    density_level: DensityLevel

    @field_validator("rss")
    @classmethod
    def _finite_rss(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("rss must be finite")
        return value


class ChannelParams(BaseModel):
    """Parametric geometry-based channel configuration."""
    model_config = ConfigDict(frozen=True)

    carrier_frequency_hz: float = 4.0e9
    pathloss_exponent: Dict[LinkClass, float] = {
        LinkClass.LOS: 2.0,
        LinkClass.NLOSV: 2.4,
        LinkClass.NLOSB: 2.8,
    }
    shadowing_sigma: Dict[LinkClass, float] = {
        LinkClass.LOS: 2.0,
        LinkClass.NLOSV: 3.0,
        LinkClass.NLOSB: 5.0,
    }
    wall_loss_db: float = 15.0
    blocker_loss_db: float = 4.0
    max_blockers: int = 3
    fresnel_margin: float = 0.3
    gamma_m: float = -10.0

    @classmethod
    def from_settings(cls, settings) -> "ChannelParams":
        return cls(
            carrier_frequency_hz=settings.CARRIER_FREQUENCY_HZ,
            pathloss_exponent={
                LinkClass.LOS: settings.PATHLOSS_EXP_LOS,
                LinkClass.NLOSV: settings.PATHLOSS_EXP_NLOSV,
                LinkClass.NLOSB: settings.PATHLOSS_EXP_NLOSB,
            },
            shadowing_sigma={
                LinkClass.LOS: settings.SHADOWING_SIGMA_LOS,
                LinkClass.NLOSV: settings.SHADOWING_SIGMA_NLOSV,
                LinkClass.NLOSB: settings.SHADOWING_SIGMA_NLOSB,
            },
            wall_loss_db=settings.WALL_LOSS_DB,
            blocker_loss_db=settings.BLOCKER_LOSS_DB,
            max_blockers=settings.MAX_BLOCKERS,
            fresnel_margin=settings.FRESNEL_MARGIN,
            gamma_m=settings.GAMMA_M,
        )


class LinkRecordOut(BaseModel):
    """Stored link record as served by the HTTP surface."""
    model_config = ConfigDict(from_attributes=True)

    id: int
    link_type: LinkType
    density_level: DensityLevel
    tx_id: int
    tx_x: float
    tx_y: float
    tx_h: float
    tx_speed: float
    rx_id: int
    rx_x: float
    rx_y: float
    rx_h: float
    rx_speed: float
    rss: float
