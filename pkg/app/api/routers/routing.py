# app/api/routers/routing.py
from typing import List, Optional

from fastapi import APIRouter

from app.schemas.routing import OracleRequest, OracleResponse, RankedPath, Top3Request
from app.schemas.topology import VirtualTopology
from app.services.routing import baseline_car, oracle_widest_hop_bounded, tora_top3

router = APIRouter(prefix="/routing", tags=["Routing"])


# =====================================================================
# TORA
# =====================================================================

@router.post(
    "/top3",
    response_model=List[RankedPath],
    summary="Top-3 feasible paths to the BS node"
)
def top3(request: Top3Request):
    """
    Run pruning, widest-feasible-path search and deviation ranking on a posted topology.

    An empty list means no feasible path exists.
    """
    topology = VirtualTopology.from_request(request.topology)
    return tora_top3(topology, request.source, request.params)


# =====================================================================
# ORACLE AND BASELINES
# =====================================================================

@router.post(
    "/oracle",
    response_model=OracleResponse,
    summary="Exact hop-bounded widest path"
)
def oracle(request: OracleRequest):
    topology = VirtualTopology.from_request(request.topology)
    found = oracle_widest_hop_bounded(topology.graph, request.source, request.target, request.H_th)
    if found is None:
        return OracleResponse()
    width, nodes = found
    return OracleResponse(width=width, nodes=nodes)


@router.post(
    "/car",
    response_model=Optional[RankedPath],
    summary="Connectivity-aware baseline path"
)
def car(request: Top3Request):
    topology = VirtualTopology.from_request(request.topology)
    return baseline_car(topology, request.source, request.params)
