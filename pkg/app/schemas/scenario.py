# schemas/scenario.py
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.data.vehicle_catalog import DensityLevel, VEHICLE_CATALOG, VehicleClass


# =====================================================================
# A. WORLD GEOMETRY
# =====================================================================

class Road(BaseModel):
    """Axis-aligned road strip described by its centerline."""
    model_config = ConfigDict(frozen=True)

    x0: float
    y0: float
    x1: float
    y1: float
    lanes: int = Field(2, ge=1)
    width: float = Field(..., gt=0)

    @property
    def vertical(self) -> bool:
        return self.x0 == self.x1

    @property
    def length(self) -> float:
        return abs(self.x1 - self.x0) + abs(self.y1 - self.y0)

    def bounds(self) -> Tuple[float, float, float, float]:
        """Strip rectangle as (x_min, y_min, x_max, y_max)."""
        half = self.width / 2.0
        if self.vertical:
            return (self.x0 - half, min(self.y0, self.y1), self.x0 + half, max(self.y0, self.y1))
        return (min(self.x0, self.x1), self.y0 - half, max(self.x0, self.x1), self.y0 + half)


class Building(BaseModel):
    """Rectangular building footprint."""
    model_config = ConfigDict(frozen=True)

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @model_validator(mode="after")
    def _check_extent(self):
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("building rectangle must have positive area")
        return self


class BSSite(BaseModel):
    """Base station location and radio parameters."""
    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    height: float = 5.0
    tx_power: float = 24.0

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)


class WorldMap(BaseModel):
    """Synthetic grid city."""
    model_config = ConfigDict(frozen=True)

    width: float = Field(..., gt=0)
    height: float = Field(..., gt=0)
    roads: List[Road]
    buildings: List[Building]
    bs_sites: List[BSSite]

    @model_validator(mode="after")
    def _check_layout(self):
        for bs in self.bs_sites:
            if not (0.0 <= bs.x <= self.width and 0.0 <= bs.y <= self.height):
                raise ValueError(f"base station at ({bs.x}, {bs.y}) lies outside the extent")
        for building in self.buildings:
            for road in self.roads:
                rx0, ry0, rx1, ry1 = road.bounds()
                if (building.x_min < rx1 and rx0 < building.x_max
                        and building.y_min < ry1 and ry0 < building.y_max):
                    raise ValueError("building overlaps a road strip")
        return self

    @property
    def road_length(self) -> float:
        return sum(road.length for road in self.roads)


# =====================================================================
# B. VEHICLES AND TRACES
# =====================================================================

class VehicleState(BaseModel):
    """One VUE at one instant; position is the outline center."""
    model_config = ConfigDict(frozen=True)

    id: int = Field(..., ge=0)
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0
    antenna_height: float
    vclass: VehicleClass

    @model_validator(mode="after")
    def _check_antenna(self):
        expected = VEHICLE_CATALOG[self.vclass]["antenna_height"]
        if self.antenna_height != expected:
            raise ValueError(f"antenna height for {self.vclass.value} must be {expected}")
        return self

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)

    @property
    def velocity(self) -> Tuple[float, float]:
        return (self.vx, self.vy)

    @property
    def speed(self) -> float:
        return (self.vx * self.vx + self.vy * self.vy) ** 0.5


class Tick(BaseModel):
    """All vehicles present at one collection instant."""
    model_config = ConfigDict(frozen=True)

    time: float
    vehicles: List[VehicleState]


class TraceLog(BaseModel):
    """Vehicle states sampled every tau seconds."""
    model_config = ConfigDict(frozen=True)

    tau: float = Field(1.0, gt=0)
    density_level: DensityLevel = DensityLevel.LOW
    ticks: List[Tick] = Field(default_factory=list)

    def by_id(self, index: int) -> dict:
        """Vehicles of one tick keyed by id."""
        return {vehicle.id: vehicle for vehicle in self.ticks[index].vehicles}


# =====================================================================
# C. REQUEST / RESPONSE SHAPES
# =====================================================================

class MapRequest(BaseModel):
    blocks_x: int = Field(4, ge=1, le=32)
    blocks_y: int = Field(4, ge=1, le=32)
    block_size: float = Field(160.0, gt=0)
    road_width: float = Field(14.0, gt=0)
    bs_count: int = Field(4, ge=1)
    seed: int = 0


class AssociateRequest(BaseModel):
    vehicle: VehicleState
    world_map: WorldMap
    rss_per_bs: List[float]
    d_I: float = Field(400.0, gt=0)


class AssociateResponse(BaseModel):
    bs_index: Optional[int] = None
