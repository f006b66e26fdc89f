# schemas/topology.py
from typing import Iterable, List, Tuple

import networkx as nx
from pydantic import BaseModel, ConfigDict

from app.schemas.metrics import EdgeMetrics
from app.schemas.routing import BS_NODE, TopologyIn


class VirtualTopology(BaseModel):
    """
    Predicted V2X graph at t + tau.

    Nodes are VUE ids plus BS_NODE; every edge carries the float attributes
    ``l_S``, ``l_C``, ``l_H`` and the inferred mean strength ``mu``.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    graph: nx.Graph
    snapshot_time: float = 0.0
    topology_id: str = ""

    @property
    def vue_nodes(self) -> List[int]:
        return sorted(node for node in self.graph.nodes if node != BS_NODE)

    def metrics(self, u: int, v: int) -> EdgeMetrics:
        data = self.graph.edges[u, v]
        return EdgeMetrics(l_S=data["l_S"], l_C=data["l_C"], l_H=data["l_H"])

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[Tuple[int, int, float, float]],
        nodes: Iterable[int] = (),
        snapshot_time: float = 0.0,
        topology_id: str = "",
    ) -> "VirtualTopology":
        """Build from (u, v, l_S, l_C) tuples; the BS node is always present."""
        graph = nx.Graph()
        graph.add_node(BS_NODE)
        graph.add_nodes_from(nodes)
        for u, v, l_s, l_c in edges:
            if u == v:
                continue
            graph.add_edge(u, v, l_S=l_s, l_C=l_c, l_H=1, mu=None)
        return cls(graph=graph, snapshot_time=snapshot_time, topology_id=topology_id)

    @classmethod
    def from_request(cls, topology: TopologyIn) -> "VirtualTopology":
        return cls.from_edges(
            ((edge.u, edge.v, edge.l_S, edge.l_C) for edge in topology.edges),
            nodes=topology.nodes,
            topology_id="request",
        )
