# services/routing.py
"""
Top-3 widest feasible path routing over the predicted topology.

Graphs handled here are ``networkx.Graph`` objects whose edges carry ``l_S``,
``l_C`` and ``l_H``. The destination is normally ``BS_NODE``.
"""
import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import networkx as nx

from app.core.exceptions import InvalidArgumentError
from app.schemas.metrics import EdgeMetrics, PathMetrics
from app.schemas.routing import BS_NODE, PathRank, RankedPath, RoutingParams, TOP_RANKS
from app.schemas.topology import VirtualTopology
from app.services.metrics import path_metrics

logger = logging.getLogger(__name__)

GraphLike = Union[VirtualTopology, nx.Graph]

ORACLE_MAX_HOPS = 64


def _as_graph(topology: GraphLike) -> nx.Graph:
    return topology.graph if isinstance(topology, VirtualTopology) else topology


def metrics_of(g: nx.Graph, nodes: Sequence[int]) -> PathMetrics:
    """Path metrics of a node sequence from the edge attributes of g."""
    edges = []
    for u, v in zip(nodes[:-1], nodes[1:]):
        data = g.edges[u, v]
        edges.append(EdgeMetrics(l_S=data["l_S"], l_C=data["l_C"], l_H=data.get("l_H", 1)))
    return path_metrics(edges)


def make_path(g: nx.Graph, nodes: Sequence[int], rank: PathRank = PathRank.J1) -> RankedPath:
    return RankedPath(nodes=tuple(nodes), metrics=metrics_of(g, nodes), rank=rank)


def _rank_key(path: RankedPath):
    return (-path.metrics.p_S, path.metrics.p_H, path.nodes)


# =====================================================================
# PRUNING AND BACKWARD SEARCH
# =====================================================================

def prune(topology: GraphLike, C_th: float, terminals: Iterable[int] = ()) -> nx.Graph:
    """
    Keep only links with l_C strictly above C_th, then drop isolated nodes.

    Nodes listed in ``terminals`` (the source and destination) survive even
    when isolated.
    """
    source = _as_graph(topology)
    g = nx.Graph(source_id=getattr(topology, "topology_id", source.graph.get("source_id", "")))
    g.add_nodes_from(source.nodes)
    g.add_edges_from(
        (u, v, data) for u, v, data in source.edges(data=True) if data["l_C"] > C_th
    )
    keep = set(terminals)
    g.remove_nodes_from([n for n in list(g.nodes) if g.degree(n) == 0 and n not in keep])
    return g


def backward_dijkstra(g: nx.Graph, d: int) -> Dict[int, float]:
    """Least hop count from every node of g to d; math.inf where unreachable."""
    if d not in g:
        raise InvalidArgumentError(f"destination {d} not in graph")
    # unit link length, so breadth-first distances are the Dijkstra result
    reached = nx.single_source_shortest_path_length(g, d)
    return {node: float(reached.get(node, math.inf)) for node in g.nodes}


# =====================================================================
# FORWARD SEARCH
# =====================================================================

class _SourceWidth:
    """Width of the empty path at the source; wider than any link."""

    def __repr__(self) -> str:
        return "MAX_WIDTH"


MAX_WIDTH = _SourceWidth()


@dataclass
class SearchLabels:
    w: Dict[int, object] = field(default_factory=dict)
    f: Dict[int, float] = field(default_factory=dict)
    b: Dict[int, float] = field(default_factory=dict)
    pred: Dict[int, Optional[int]] = field(default_factory=dict)

    def path_to(self, node: int) -> List[int]:
        nodes = [node]
        while self.pred.get(nodes[-1]) is not None:
            nodes.append(self.pred[nodes[-1]])
        return nodes[::-1]


def _prefers_candidate(w_x: float, f_x: float, b_x: float,
                       w_y: float, f_y: float, b_y: float, H_th: float) -> Optional[bool]:
    """
    Preference between candidate labels x and current labels y.

    Returns True for x, False for y, and None when the rule cannot separate them.
    """
    if w_x > w_y and f_x + b_x < H_th:
        return True
    if w_x < w_y and f_y + b_y < H_th:
        return False
    if f_x + b_x < f_y + b_y:
        return True
    if w_x == w_y and f_x + b_x == f_y + b_y:
        return None
    return False


def forward_dijkstra(g: nx.Graph, s: int, d: int, H_th: float,
                     b: Dict[int, float]) -> SearchLabels:
    """
    Widest-path Dijkstra from s steered by the backward hop labels b.

    Nodes are extracted by largest width (lowest id on ties). A neighbour takes
    the extracted node as predecessor when the preference rule picks the
    relaxed labels; exact ties go to the lower predecessor id. The destination
    is never expanded.
    """
    labels = SearchLabels(b=b)
    for node in g.nodes:
        labels.w[node] = 0.0
        labels.f[node] = 0.0
        labels.pred[node] = None
    labels.w[s] = MAX_WIDTH

    visited: Set[int] = set()
    heap: List[Tuple[float, int]] = []

    def relax(u: int) -> None:
        for v in sorted(g.neighbors(u)):
            if v in visited:
                continue
            data = g.edges[u, v]
            w_u = labels.w[u]
            w_tmp = data["l_S"] if w_u is MAX_WIDTH else min(w_u, data["l_S"])
            f_tmp = labels.f[u] + data.get("l_H", 1)
            b_v = b.get(v, math.inf)
            choice = _prefers_candidate(w_tmp, f_tmp, b_v, labels.w[v], labels.f[v], b_v, H_th)
            if choice is None:
                current = labels.pred[v]
                choice = current is not None and u < current
            if choice:
                labels.w[v] = w_tmp
                labels.f[v] = f_tmp
                labels.pred[v] = u
                heapq.heappush(heap, (-w_tmp, v))

    visited.add(s)
    relax(s)
    while heap:
        neg_w, u = heapq.heappop(heap)
        if u in visited or -neg_w != labels.w[u]:
            continue
        visited.add(u)
        if u == d:
            continue
        relax(u)
    return labels


@dataclass
class SearchRecord:
    """One internal forward search, kept for exactness audits."""
    source: int
    budget: float
    graph: nx.Graph
    width: Optional[float]


class SearchTrace:
    """Collects every forward search TORA runs for one source."""

    def __init__(self):
        self.records: List[SearchRecord] = []

    def add(self, source: int, budget: float, graph: nx.Graph, width: Optional[float]) -> None:
        self.records.append(SearchRecord(source, budget, graph, width))

    def __len__(self) -> int:
        return len(self.records)


def _search(g: nx.Graph, s: int, d: int, H_th: float,
            trace: Optional[SearchTrace] = None) -> Optional[List[int]]:
    if s not in g or d not in g:
        return None
    b = backward_dijkstra(g, d)
    if b[s] >= H_th:
        if trace is not None:
            trace.add(s, H_th, g, None)
        return None
    labels = forward_dijkstra(g, s, d, H_th, b)
    found = labels.pred[d] is not None and labels.f[d] < H_th
    if trace is not None:
        trace.add(s, H_th, g, labels.w[d] if found else None)
    return labels.path_to(d) if found else None


def wfpf(g: nx.Graph, s: int, d: int, H_th: float,
         trace: Optional[SearchTrace] = None) -> Optional[RankedPath]:
    """
    Widest feasible path finding.

    Args:
        g: Pruned graph
        s: Source node
        d: Destination node
        H_th: Hop constraint, the path must have strictly fewer hops

    Returns:
        The J1 path, or None on failure

    Raises:
        InvalidArgumentError: If s equals d
    """
    if s == d:
        raise InvalidArgumentError("source and destination must differ")
    nodes = _search(g, s, d, H_th, trace)
    if nodes is None:
        logger.debug(f"wfpf: no feasible path {s} -> {d} under H_th={H_th}")
        return None
    return make_path(g, nodes, PathRank.J1)


# =====================================================================
# DEVIATION PATH RANKING
# =====================================================================

class CandidatePool:
    """Complete paths awaiting ranking, deduplicated by node sequence."""

    def __init__(self):
        self._paths: Dict[Tuple[int, ...], RankedPath] = {}

    def add(self, path: RankedPath) -> None:
        self._paths.setdefault(path.nodes, path)

    def discard(self, nodes: Tuple[int, ...]) -> None:
        self._paths.pop(nodes, None)

    def pop_best(self) -> Optional[RankedPath]:
        if not self._paths:
            return None
        best = min(self._paths.values(), key=_rank_key)
        del self._paths[best.nodes]
        return best

    def __len__(self) -> int:
        return len(self._paths)

    def __contains__(self, nodes) -> bool:
        return tuple(nodes) in self._paths


def dpr_next(
    g: nx.Graph,
    s: int,
    d: int,
    H_th: float,
    established: Sequence[RankedPath],
    pool: CandidatePool,
    mask_all_sharing_paths: bool = False,
    trace: Optional[SearchTrace] = None,
) -> Optional[RankedPath]:
    """
    Next best feasible path by deviating from the newest established path.

    Each branch node u of the newest path keeps its root path s..u; the rest of
    the root path and u's outgoing link are masked, and so is u's outgoing link
    on J1 when the root path is a prefix of J1. With ``mask_all_sharing_paths``
    the outgoing link of every established path sharing the root is masked.

    Raises:
        InvalidArgumentError: If no path has been established yet
    """
    if not established:
        raise InvalidArgumentError("deviation ranking needs an established path")
    newest = established[-1].nodes
    sharing = list(established[:-1]) if mask_all_sharing_paths else list(established[:1])

    for i, u in enumerate(newest[:-1]):
        root = newest[: i + 1]
        masked = g.copy()
        masked.remove_nodes_from(root[:-1])
        masked_links = {(u, newest[i + 1])}
        for other in sharing:
            if other.nodes[: i + 1] == root and len(other.nodes) > i + 1:
                masked_links.add((u, other.nodes[i + 1]))
        for a, c in masked_links:
            if masked.has_edge(a, c):
                masked.remove_edge(a, c)
        deviation = _search(masked, u, d, H_th - i, trace)
        if deviation is None:
            continue
        candidate = make_path(g, list(root[:-1]) + deviation, PathRank.J2)
        pool.add(candidate)

    for path in established:
        pool.discard(path.nodes)
    best = pool.pop_best()
    if best is None:
        logger.debug(f"dpr: candidate pool empty after {len(established)} established paths")
    return best


def tora_top3(
    topology: GraphLike,
    s: int,
    params: RoutingParams,
    d: int = BS_NODE,
    mask_all_sharing_paths: bool = False,
    trace: Optional[SearchTrace] = None,
) -> List[RankedPath]:
    """
    Up to three feasible paths from s to the BS node, strongest first.

    Returns:
        0 to 3 distinct paths ranked J1, J2, J3 by (p_S desc, p_H asc)
    """
    g = prune(topology, params.C_th, terminals=(s, d))
    if s not in g or s == d:
        return []
    first = wfpf(g, s, d, params.H_th, trace)
    if first is None:
        return []
    established = [first]
    pool = CandidatePool()
    while len(established) < len(TOP_RANKS):
        nxt = dpr_next(g, s, d, params.H_th, established, pool,
                       mask_all_sharing_paths=mask_all_sharing_paths, trace=trace)
        if nxt is None:
            break
        established.append(nxt)
    ranked = sorted(established, key=_rank_key)
    return [path.with_rank(rank) for path, rank in zip(ranked, TOP_RANKS)]


# =====================================================================
# EXACT ORACLES
# =====================================================================

def _remove_cycles(walk: Sequence[int]) -> List[int]:
    path: List[int] = []
    position: Dict[int, int] = {}
    for node in walk:
        if node in position:
            cut = position[node]
            for dropped in path[cut + 1:]:
                del position[dropped]
            path = path[: cut + 1]
        else:
            position[node] = len(path)
            path.append(node)
    return path


def _bounded_bottleneck(g: nx.Graph, s: int, d: int, max_hops: int,
                        weight: str) -> List[Tuple[float, List[int]]]:
    """
    Best bottleneck walk s -> d using exactly h hops, for h = 1..max_hops.

    Returns (width, simple path) per reachable hop count, in increasing h.
    """
    results: List[Tuple[float, List[int]]] = []
    layers: List[Dict[int, Tuple[float, Optional[int]]]] = [{s: (math.inf, None)}]
    for _ in range(max_hops):
        prev = layers[-1]
        layer: Dict[int, Tuple[float, Optional[int]]] = {}
        for u in sorted(prev):
            if u == d:
                continue
            width_u = prev[u][0]
            for v in g.neighbors(u):
                cand = min(width_u, g.edges[u, v][weight])
                best = layer.get(v)
                if best is None or cand > best[0] or (cand == best[0] and u < best[1]):
                    layer[v] = (cand, u)
        layers.append(layer)
        if d in layer:
            walk = [d]
            for depth in range(len(layers) - 1, 0, -1):
                walk.append(layers[depth][walk[-1]][1])
            results.append((layer[d][0], _remove_cycles(walk[::-1])))
        if not layer:
            break
    return results


def oracle_widest_hop_bounded(
    g: nx.Graph, s: int, d: int, H_th: int
) -> Optional[Tuple[float, List[int]]]:
    """
    Exact widest path with fewer than H_th hops, by dynamic programming.

    Returns:
        (width, nodes) or None when no such path exists

    Raises:
        InvalidArgumentError: If H_th exceeds the supported bound or s equals d
    """
    if H_th > ORACLE_MAX_HOPS:
        raise InvalidArgumentError(f"H_th must be at most {ORACLE_MAX_HOPS}")
    if s == d:
        raise InvalidArgumentError("source and destination must differ")
    if s not in g or d not in g:
        return None
    per_hops = _bounded_bottleneck(g, s, d, H_th - 1, "l_S")
    if not per_hops:
        return None
    width, nodes = max(per_hops, key=lambda item: item[0])
    return width, nodes


def enumerate_feasible_paths(
    g: nx.Graph, s: int, d: int, H_th: int
) -> List[Tuple[Tuple[int, ...], PathMetrics]]:
    """Every simple s -> d path with fewer than H_th hops, strongest first."""
    if s not in g or d not in g or s == d:
        return []
    found = []
    for nodes in nx.all_simple_paths(g, s, d, cutoff=H_th - 1):
        found.append((tuple(nodes), metrics_of(g, nodes)))
    found.sort(key=lambda item: (-item[1].p_S, item[1].p_H, item[0]))
    return found


def widest_path(g: nx.Graph, s: int, d: int) -> Optional[Tuple[float, List[int]]]:
    """Classic unconstrained widest path (max bottleneck l_S)."""
    if s not in g or d not in g or s == d:
        return None
    width: Dict[int, float] = {s: math.inf}
    pred: Dict[int, Optional[int]] = {s: None}
    done: Set[int] = set()
    heap = [(-math.inf, s)]
    while heap:
        neg_w, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == d:
            break
        for v in g.neighbors(u):
            if v in done:
                continue
            cand = min(-neg_w, g.edges[u, v]["l_S"])
            if cand > width.get(v, -math.inf):
                width[v] = cand
                pred[v] = u
                heapq.heappush(heap, (-cand, v))
    if d not in width:
        return None
    nodes = [d]
    while pred[nodes[-1]] is not None:
        nodes.append(pred[nodes[-1]])
    return width[d], nodes[::-1]


# =====================================================================
# BASELINES
# =====================================================================

def baseline_car(topology: GraphLike, s: int, params: RoutingParams,
                 d: int = BS_NODE) -> Optional[RankedPath]:
    """
    Connectivity-aware routing: max-min l_C path, fewer hops on ties.

    The path must respect H_th and its connectivity must exceed C_th.
    """
    g = _as_graph(topology)
    if s not in g or d not in g or s == d:
        return None
    per_hops = _bounded_bottleneck(g, s, d, min(params.H_th - 1, ORACLE_MAX_HOPS), "l_C")
    if not per_hops:
        return None
    best_width = max(width for width, _ in per_hops)
    if best_width <= params.C_th:
        return None
    nodes = next(nodes for width, nodes in per_hops if width == best_width)
    return make_path(g, nodes, PathRank.J1)


def baseline_direct(topology: GraphLike, s: int, d: int = BS_NODE) -> Optional[RankedPath]:
    """The direct V2I edge if it exists in the predicted topology."""
    g = _as_graph(topology)
    if not g.has_edge(s, d):
        return None
    return make_path(g, [s, d], PathRank.DIRECT)
