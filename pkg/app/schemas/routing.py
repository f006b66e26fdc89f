# schemas/routing.py
from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.metrics import PathMetrics


# Destination node standing for every base station.
BS_NODE = -1


class PathRank(str, Enum):
    J1 = "J1"
    J2 = "J2"
    J3 = "J3"
    MENDED = "mended"
    DIRECT = "direct"


TOP_RANKS = [PathRank.J1, PathRank.J2, PathRank.J3]


class RoutingParams(BaseModel):
    """QoS constraints and RSS thresholds used by the routers."""
    model_config = ConfigDict(frozen=True)

    C_th: float = Field(0.999, gt=0, lt=1)
    H_th: int = Field(6, ge=2)
    gamma_th: float = -80.0
    gamma_M: float = -10.0

    @model_validator(mode="after")
    def _thresholds(self):
        if self.gamma_th >= self.gamma_M:
            raise ValueError("gamma_th must be below gamma_M")
        return self

    @classmethod
    def from_settings(cls, settings, gamma_th: Optional[float] = None) -> "RoutingParams":
        return cls(
            C_th=settings.C_TH,
            H_th=settings.H_TH,
            gamma_th=settings.GAMMA_TH if gamma_th is None else gamma_th,
            gamma_M=settings.GAMMA_M,
        )


class RankedPath(BaseModel):
    """Simple node sequence from a VUE to the BS node with its metrics."""
    model_config = ConfigDict(frozen=True)

    nodes: Tuple[int, ...]
    metrics: PathMetrics
    rank: PathRank

    @model_validator(mode="after")
    def _simple(self):
        if len(self.nodes) < 2:
            raise ValueError("a path needs at least two nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("path repeats a node")
        if self.metrics.p_H != len(self.nodes) - 1:
            raise ValueError("hop count does not match the node sequence")
        return self

    @property
    def links(self) -> List[Tuple[int, int]]:
        return list(zip(self.nodes[:-1], self.nodes[1:]))

    def with_rank(self, rank: PathRank) -> "RankedPath":
        return self.model_copy(update={"rank": rank})


# =====================================================================
# REQUEST / RESPONSE SHAPES
# =====================================================================

class TopologyEdgeIn(BaseModel):
    u: int
    v: int
    l_S: float = Field(..., gt=0, le=1)
    l_C: float = Field(..., gt=0, le=1)


class TopologyIn(BaseModel):
    """Edge-list topology posted to the routing endpoints."""
    nodes: List[int] = Field(default_factory=list)
    edges: List[TopologyEdgeIn]


class Top3Request(BaseModel):
    topology: TopologyIn
    source: int
    params: RoutingParams = RoutingParams()


class OracleRequest(BaseModel):
    topology: TopologyIn
    source: int
    target: int = BS_NODE
    H_th: int = Field(6, ge=1, le=64)


class OracleResponse(BaseModel):
    width: Optional[float] = None
    nodes: Optional[List[int]] = None
