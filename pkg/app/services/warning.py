# services/warning.py
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import networkx as nx
import numpy as np

from app.core.exceptions import TraceParseError
from app.core.tables import read_table, write_table
from app.data.vehicle_catalog import DensityLevel
from app.schemas.predictor import StrengthDistribution
from app.schemas.routing import BS_NODE
from app.schemas.scenario import VehicleState
from app.schemas.topology import VirtualTopology
from app.schemas.warning import V2IInference, WarningCause, WarningDecision
from app.services.metrics import (
    link_connectivity,
    link_duration,
    normalized_strength,
    relative_kinematics,
)
from app.services.predictor import PredictorModel, encode_v2v, infer_batch

logger = logging.getLogger(__name__)

TOPOLOGY_HEADER = ["u", "v", "l_S", "l_C", "l_H"]

PathLike = Union[str, Path]


# =====================================================================
# EARLY WARNING
# =====================================================================

def check_warning(
    dist: StrengthDistribution,
    predicted_pos: Tuple[float, float],
    bs_pos: Optional[Tuple[float, float]],
    gamma_th: float,
    d_I: float,
    vue_id: int = 0,
) -> WarningDecision:
    """
    Early-warning rule for one VUE.

    Leaving coverage takes precedence over low strength. A VUE without a
    serving BS counts as out of coverage.
    """
    sigma = dist.sigma
    if bs_pos is None or math.dist(predicted_pos, bs_pos) > d_I:
        cause = WarningCause.OUT_OF_COVERAGE
    elif dist.mu - sigma <= gamma_th:
        cause = WarningCause.LOW_STRENGTH
    else:
        cause = WarningCause.NONE
    return WarningDecision(
        vue_id=vue_id,
        triggered=cause != WarningCause.NONE,
        cause=cause,
        mu=dist.mu,
        sigma=sigma,
    )


# =====================================================================
# VIRTUAL TOPOLOGY
# =====================================================================

def _edge_attrs(mu: float, duration, gamma_th: float, gamma_M: float, tau: float) -> dict:
    return {
        "l_S": normalized_strength(min(mu, gamma_M), gamma_th, gamma_M),
        "l_C": link_connectivity(duration, tau),
        "l_H": 1,
        "mu": mu,
    }


def build_virtual_topology(
    predicted: Dict[int, VehicleState],
    v2i: Iterable[V2IInference],
    v2v_model: Optional[PredictorModel],
    gamma_th: float,
    gamma_M: float,
    d_I: float,
    d_V: float,
    tau: float,
    density_level: DensityLevel,
    snapshot_time: float = 0.0,
) -> VirtualTopology:
    """
    Predicted V2X graph at t + tau.

    A V2I edge joins a VUE to BS_NODE when the VUE is predicted within d_I of
    its serving BS and the inferred mean exceeds gamma_th. A V2V edge joins two
    VUEs predicted closer than d_V whose inferred mean exceeds gamma_th; the
    V2V model is only consulted for those pairs. Means above gamma_M are
    clamped before normalization. A link already at the edge of range and
    leaving it has no connectivity and is left out.
    """
    graph = nx.Graph()
    graph.add_node(BS_NODE)
    graph.add_nodes_from(sorted(predicted))

    for inference in v2i:
        state = predicted.get(inference.vue_id)
        if state is None or inference.bs_position is None:
            continue
        mu = inference.distribution.mu
        if mu <= gamma_th or math.dist(state.position, inference.bs_position) > d_I:
            continue
        kin = relative_kinematics(state.position, state.velocity, inference.bs_position, (0.0, 0.0), d_I)
        attrs = _edge_attrs(mu, link_duration(kin), gamma_th, gamma_M, tau)
        if attrs["l_C"] > 0:
            graph.add_edge(state.id, BS_NODE, **attrs)

    ids = sorted(predicted)
    pairs = [
        (a, b)
        for i, a in enumerate(ids)
        for b in ids[i + 1:]
        if math.dist(predicted[a].position, predicted[b].position) < d_V
    ]
    if pairs and v2v_model is not None:
        feats = [encode_v2v(predicted[a], predicted[b], density_level) for a, b in pairs]
        mus, _ = infer_batch(
            v2v_model,
            np.array([f.explicit for f in feats]),
            np.array([f.context for f in feats]),
        )
        for (a, b), mu in zip(pairs, mus):
            mu = float(mu)
            if mu <= gamma_th:
                continue
            sa, sb = predicted[a], predicted[b]
            kin = relative_kinematics(sa.position, sa.velocity, sb.position, sb.velocity, d_V)
            attrs = _edge_attrs(mu, link_duration(kin), gamma_th, gamma_M, tau)
            if attrs["l_C"] > 0:
                graph.add_edge(a, b, **attrs)

    logger.debug(
        f"Virtual topology at t={snapshot_time:g}: {graph.number_of_nodes()} nodes, "
        f"{graph.number_of_edges()} edges"
    )
    return VirtualTopology(graph=graph, snapshot_time=snapshot_time,
                           topology_id=f"t={snapshot_time:g}")


# =====================================================================
# EDGE-LIST DUMP
# =====================================================================

def dump_topology(topology: VirtualTopology, path: PathLike) -> None:
    """Write ``u,v,l_S,l_C,l_H`` rows; a leading comment lists every node."""
    graph = topology.graph
    nodes = ",".join(str(n) for n in sorted(graph.nodes))
    rows = []
    for u, v in sorted(tuple(sorted(edge)) for edge in graph.edges):
        data = graph.edges[u, v]
        rows.append([u, v, repr(data["l_S"]), repr(data["l_C"]), data.get("l_H", 1)])
    write_table(path, TOPOLOGY_HEADER, rows,
                comment=f"snapshot_time={topology.snapshot_time!r} nodes={nodes}")


def load_topology(path: PathLike) -> VirtualTopology:
    """
    Read a topology written by dump_topology.

    Raises:
        TraceParseError: On a malformed row, with its line number
    """
    nodes: List[int] = []
    snapshot_time = 0.0
    comments, frame = read_table(path, TOPOLOGY_HEADER)
    for line_number, text in comments:
        for token in text.lstrip("#").split():
            key, _, value = token.partition("=")
            try:
                if key == "nodes" and value:
                    nodes = [int(n) for n in value.split(",")]
                elif key == "snapshot_time":
                    snapshot_time = float(value)
            except ValueError as exc:
                raise TraceParseError(f"bad {key} metadata", line_number) from exc

    edges: List[Tuple[int, int, float, float]] = []
    for line_number, u, v, l_S, l_C, l_H in frame.itertuples(index=False, name=None):
        try:
            if int(l_H) != 1:
                raise ValueError("link hop count must be 1")
            edges.append((int(u), int(v), float(l_S), float(l_C)))
        except ValueError as exc:
            raise TraceParseError(str(exc), line_number) from exc
    return VirtualTopology.from_edges(edges, nodes=nodes, snapshot_time=snapshot_time,
                                      topology_id=str(path))
