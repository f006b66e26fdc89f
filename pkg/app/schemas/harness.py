# schemas/harness.py
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.data.vehicle_catalog import DensityLevel
from app.schemas.routing import RoutingParams


class Method(str, Enum):
    ROPE = "ROPE"
    ROPE_MINUS = "ROPE-"
    CAR = "CAR"
    D_V2I = "D-V2I"


ALL_METHODS = [Method.ROPE, Method.ROPE_MINUS, Method.CAR, Method.D_V2I]


class CycleConfig(BaseModel):
    """Timing and QoS configuration of the predictive cycle."""
    model_config = ConfigDict(frozen=True)

    tau: float = Field(1.0, gt=0)
    history_ticks: int = Field(3, ge=1)
    deltas: List[float] = [0.1, 0.07, 0.04]
    routing: RoutingParams = RoutingParams()
    d_I: float = Field(400.0, gt=0)
    d_V: float = Field(300.0, gt=0)
    density_level: DensityLevel = DensityLevel.LOW
    noise_floor: float = -114.0
    seed: int = 0
    methods: List[Method] = ALL_METHODS

    @model_validator(mode="after")
    def _deltas(self):
        if not self.deltas:
            raise ValueError("delta schedule must not be empty")
        for delta in self.deltas:
            if not 0.0 < delta < self.tau / 2.0:
                raise ValueError("every check offset must lie in (0, tau/2)")
        if any(a <= b for a, b in zip(self.deltas, self.deltas[1:])):
            raise ValueError("check offsets must be strictly decreasing")
        return self

    @property
    def warmup_ticks(self) -> int:
        return self.history_ticks + 2

    @classmethod
    def from_settings(cls, settings, density_level: DensityLevel = DensityLevel.LOW,
                      gamma_th: Optional[float] = None, seed: Optional[int] = None) -> "CycleConfig":
        return cls(
            tau=settings.TAU,
            history_ticks=settings.HISTORY_TICKS,
            deltas=settings.DELTA_SCHEDULE,
            routing=RoutingParams.from_settings(settings, gamma_th=gamma_th),
            d_I=settings.D_I,
            d_V=settings.D_V,
            density_level=density_level,
            noise_floor=settings.NOISE_FLOOR_DBM,
            seed=settings.SEED if seed is None else seed,
        )


class CycleRow(BaseModel):
    """One served VUE resolved by one method in one tick."""
    model_config = ConfigDict(frozen=True)

    tick: int
    time: float
    vue: int
    method: Method
    warned: bool = True
    outcome: str
    path: Optional[List[int]] = None
    path_rank: Optional[str] = None
    P_S: Optional[float] = None
    P_C: Optional[float] = None
    P_H: Optional[int] = None
    qualified: Optional[bool] = None


class WarningRow(BaseModel):
    """Warning outcome against the true V2I strength at t + tau."""
    model_config = ConfigDict(frozen=True)

    tick: int
    vue: int
    mu: float
    sigma: float
    warned: bool
    true_rss: float
    deteriorated: bool


class CycleLog(BaseModel):
    """Everything one run of the cycle produced."""
    model_config = ConfigDict(frozen=True)

    rows: List[CycleRow] = Field(default_factory=list)
    warnings: List[WarningRow] = Field(default_factory=list)
    skipped_ticks: List[int] = Field(default_factory=list)
    verification_rows: List[dict] = Field(default_factory=list)


class MethodSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: Method
    P_S: Optional[float] = None
    P_C: Optional[float] = None
    P_H: Optional[float] = None
    P_Q: Optional[float] = Field(None, ge=0, le=100)
    warn_ratio: Optional[float] = None
    gaps: int = 0
    activated: int = 0


class EvalReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    summaries: Dict[Method, MethodSummary]
    rows: List[CycleRow]


class ExperimentResultOut(BaseModel):
    """Stored experiment cell."""
    model_config = ConfigDict(from_attributes=True)

    method: str
    density: float
    gamma_th: float
    rep: int
    P_S: Optional[float] = None
    P_C: Optional[float] = None
    P_H: Optional[float] = None
    P_Q: Optional[float] = None
    warn_ratio: Optional[float] = None
    gaps: int = 0
