import math

import networkx as nx
import numpy as np
import pytest

from app.core.exceptions import InvalidArgumentError
from app.schemas.routing import BS_NODE, PathRank, RoutingParams
from app.services.routing import (
    CandidatePool,
    SearchTrace,
    backward_dijkstra,
    baseline_car,
    baseline_direct,
    dpr_next,
    enumerate_feasible_paths,
    forward_dijkstra,
    make_path,
    oracle_widest_hop_bounded,
    prune,
    tora_top3,
    wfpf,
    widest_path,
)
from tests.conftest import make_graph


def random_topology(seed: int, n: int = 9, p: float = 0.35) -> nx.Graph:
    rng = np.random.default_rng(seed)
    nodes = list(range(1, n)) + [BS_NODE]
    edges = []
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            if rng.random() < p:
                edges.append((a, b, round(float(rng.uniform(0.05, 1.0)), 3), 1.0))
    return make_graph(edges, nodes=nodes)


# =====================================================================
# PRUNING AND BACKWARD SEARCH
# =====================================================================

def test_prune_drops_links_at_or_below_c_th():
    g = make_graph([(1, 2, 0.5, 1.0), (2, BS_NODE, 0.5, 0.999), (3, 4, 0.5, 0.5)])
    pruned = prune(g, 0.999, terminals=(1, BS_NODE))
    assert set(pruned.edges) == {(1, 2)}
    assert BS_NODE in pruned
    assert 3 not in pruned and 4 not in pruned


def test_backward_hop_labels(long_chain):
    b = backward_dijkstra(long_chain, BS_NODE)
    assert b[BS_NODE] == 0 and b[1] == 1 and b[4] == 3
    g = make_graph([(1, 2, 0.5, 1.0)], nodes=[BS_NODE])
    assert backward_dijkstra(g, BS_NODE)[1] == math.inf


def test_backward_search_needs_destination(diamond):
    with pytest.raises(InvalidArgumentError):
        backward_dijkstra(diamond, 42)


# =====================================================================
# WIDEST FEASIBLE PATH
# =====================================================================

def test_wfpf_picks_widest_relay(diamond):
    path = wfpf(diamond, 1, BS_NODE, 6)
    assert path.nodes == (1, 2, BS_NODE)
    assert path.metrics.p_S == 0.8
    assert path.rank == PathRank.J1


def test_wfpf_honours_hop_constraint(long_chain):
    assert wfpf(long_chain, 1, BS_NODE, 6).nodes == (1, BS_NODE)
    wide = wfpf(long_chain, 1, BS_NODE, 7)
    assert wide.nodes == (1, 2, 3, 4, 5, 6, BS_NODE)
    assert wide.metrics.p_S == 0.9


def test_wfpf_fails_without_feasible_path(long_chain):
    long_chain.remove_edge(1, BS_NODE)
    assert wfpf(long_chain, 1, BS_NODE, 6) is None


def test_wfpf_rejects_equal_endpoints(diamond):
    with pytest.raises(InvalidArgumentError):
        wfpf(diamond, 1, 1, 6)


def test_wfpf_keeps_direct_link_when_relay_path_is_too_long():
    g = make_graph([(1, BS_NODE, 0.2, 1.0), (1, 2, 0.9, 1.0), (2, 3, 0.9, 1.0), (3, BS_NODE, 0.9, 1.0)])
    assert wfpf(g, 1, BS_NODE, 3).nodes == (1, BS_NODE)
    assert wfpf(g, 1, BS_NODE, 4).nodes == (1, 2, 3, BS_NODE)


# =====================================================================
# TOP-3 RANKING
# =====================================================================

def test_top3_on_diamond(diamond):
    paths = tora_top3(diamond, 1, RoutingParams())
    assert [p.nodes for p in paths] == [(1, 2, BS_NODE), (1, 3, BS_NODE), (1, BS_NODE)]
    assert [p.rank for p in paths] == [PathRank.J1, PathRank.J2, PathRank.J3]
    assert [p.metrics.p_S for p in paths] == [0.8, 0.7, 0.3]


def test_masking_every_sharing_path_agrees_on_diamond(diamond):
    default = tora_top3(diamond, 1, RoutingParams())
    masked = tora_top3(diamond, 1, RoutingParams(), mask_all_sharing_paths=True)
    assert [p.nodes for p in default] == [p.nodes for p in masked]


def test_top3_is_empty_when_source_is_cut_off(diamond):
    assert tora_top3(diamond, 99, RoutingParams()) == []
    weak = make_graph([(1, BS_NODE, 0.9, 0.5)])
    assert tora_top3(weak, 1, RoutingParams()) == []


@pytest.mark.parametrize("seed", range(12))
def test_top3_paths_are_feasible_and_distinct(seed):
    g = random_topology(seed)
    params = RoutingParams(H_th=4)
    paths = tora_top3(g, 1, params)
    assert len({p.nodes for p in paths}) == len(paths)
    feasible = {nodes for nodes, _ in enumerate_feasible_paths(g, 1, BS_NODE, params.H_th)}
    for path in paths:
        assert path.nodes in feasible
        assert path.metrics.p_H < params.H_th
    keys = [(-p.metrics.p_S, p.metrics.p_H) for p in paths]
    assert keys == sorted(keys)
    if paths:
        oracle = oracle_widest_hop_bounded(g, 1, BS_NODE, params.H_th)
        assert paths[0].metrics.p_S <= oracle[0]


def test_search_trace_records_each_forward_search(diamond):
    trace = SearchTrace()
    tora_top3(diamond, 1, RoutingParams(), trace=trace)
    assert len(trace) >= 3
    assert trace.records[0].width == 0.8


def test_deviation_needs_an_established_path(diamond):
    with pytest.raises(InvalidArgumentError):
        dpr_next(diamond, 1, BS_NODE, 6, [], CandidatePool())


def test_deviation_on_triangle_finds_the_other_path_then_fails():
    g = make_graph([(1, 2, 0.9, 1.0), (2, BS_NODE, 0.8, 1.0), (1, BS_NODE, 0.5, 1.0)])
    first = wfpf(g, 1, BS_NODE, 6)
    assert first.nodes == (1, 2, BS_NODE)
    pool = CandidatePool()
    second = dpr_next(g, 1, BS_NODE, 6, [first], pool)
    assert second.nodes == (1, BS_NODE)
    assert dpr_next(g, 1, BS_NODE, 6, [first, second], pool) is None


def test_candidate_pool_deduplicates(diamond):
    pool = CandidatePool()
    path = make_path(diamond, [1, 3, BS_NODE], PathRank.J2)
    pool.add(path)
    pool.add(path)
    assert len(pool) == 1 and (1, 3, BS_NODE) in pool
    assert pool.pop_best() == path
    assert pool.pop_best() is None


# =====================================================================
# ORACLES
# =====================================================================

@pytest.mark.parametrize("seed", range(12))
def test_dp_oracle_matches_enumeration(seed):
    g = random_topology(seed)
    for h_th in (2, 3, 5):
        oracle = oracle_widest_hop_bounded(g, 1, BS_NODE, h_th)
        found = enumerate_feasible_paths(g, 1, BS_NODE, h_th)
        if not found:
            assert oracle is None
            continue
        assert oracle[0] == found[0][1].p_S
        assert len(oracle[1]) - 1 < h_th


@pytest.mark.parametrize("seed", range(6))
def test_loose_hop_bound_gives_classic_widest_path(seed):
    g = random_topology(seed)
    classic = widest_path(g, 1, BS_NODE)
    oracle = oracle_widest_hop_bounded(g, 1, BS_NODE, 12)
    assert (classic is None) == (oracle is None)
    if classic is not None:
        assert classic[0] == oracle[0]


def test_oracle_rejects_huge_hop_bound(diamond):
    with pytest.raises(InvalidArgumentError):
        oracle_widest_hop_bounded(diamond, 1, BS_NODE, 65)


# =====================================================================
# BASELINES
# =====================================================================

def test_car_prefers_most_durable_path():
    g = make_graph([(1, 2, 0.2, 1.0), (2, BS_NODE, 0.2, 1.0), (1, BS_NODE, 0.9, 0.5)])
    path = baseline_car(g, 1, RoutingParams(C_th=0.4))
    assert path.nodes == (1, 2, BS_NODE)
    assert baseline_car(g, 1, RoutingParams(C_th=0.4, H_th=2)).nodes == (1, BS_NODE)


def test_car_fails_when_every_path_is_too_short_lived():
    g = make_graph([(1, BS_NODE, 0.9, 0.5)])
    assert baseline_car(g, 1, RoutingParams(C_th=0.6)) is None


def test_direct_baseline(diamond):
    path = baseline_direct(diamond, 1)
    assert path.nodes == (1, BS_NODE)
    assert path.rank == PathRank.DIRECT
    assert path.metrics.p_S == 0.3
    assert baseline_direct(diamond, 99) is None
    diamond.remove_edge(1, BS_NODE)
    assert baseline_direct(diamond, 1) is None


# =====================================================================
# EXACTNESS CHECKS
# =====================================================================

@pytest.mark.parametrize("seed", range(20))
def test_forward_search_without_steering_is_classic_widest_path(seed):
    g = random_topology(seed, n=12)
    labels = forward_dijkstra(g, 1, BS_NODE, math.inf, {node: 0.0 for node in g})
    classic = widest_path(g, 1, BS_NODE)
    if classic is None:
        assert labels.pred[BS_NODE] is None
    else:
        assert labels.w[BS_NODE] == classic[0]


@pytest.mark.parametrize("seed", range(40))
def test_top3_is_exact_when_every_search_is_exact(seed):
    g = random_topology(seed, n=8, p=0.45)
    params = RoutingParams(H_th=4)
    trace = SearchTrace()
    paths = tora_top3(g, 1, params, trace=trace)
    for record in trace.records:
        found = oracle_widest_hop_bounded(record.graph, record.source, BS_NODE, int(record.budget))
        if (found[0] if found else None) != record.width:
            pytest.skip("an internal search missed the optimum")
    brute = [metrics.p_S for _, metrics in enumerate_feasible_paths(g, 1, BS_NODE, params.H_th)][:3]
    assert [p.metrics.p_S for p in paths] == brute


# =====================================================================
# LARGE RANDOM SAMPLES
# =====================================================================

def random_instance(seed: int, max_nodes: int = 30):
    """Random graph of at most max_nodes nodes and a hop bound in 3..6."""
    rng = np.random.default_rng(10_000 + seed)
    n = int(rng.integers(4, max_nodes + 1))
    g = random_topology(seed, n=n, p=float(rng.uniform(0.1, 0.4)))
    return g, int(rng.integers(3, 7))


def assert_feasible(g: nx.Graph, path, params: RoutingParams):
    nodes = path.nodes
    links = list(zip(nodes[:-1], nodes[1:]))
    assert nodes[0] == 1 and nodes[-1] == BS_NODE
    assert len(set(nodes)) == len(nodes)
    assert all(g.has_edge(u, v) for u, v in links)
    assert path.metrics.p_H == len(links) < params.H_th
    assert path.metrics.p_C > params.C_th
    assert path.metrics.p_S == min(g.edges[u, v]["l_S"] for u, v in links)


@pytest.mark.slow
def test_top3_paths_are_feasible_on_many_graphs():
    for seed in range(1000):
        g, h_th = random_instance(seed)
        params = RoutingParams(H_th=h_th)
        paths = tora_top3(g, 1, params)
        assert len({p.nodes for p in paths}) == len(paths) <= 3
        for path in paths:
            assert_feasible(g, path, params)
        strengths = [p.metrics.p_S for p in paths]
        assert strengths == sorted(strengths, reverse=True)


@pytest.mark.slow
def test_wfpf_never_beats_the_oracle(record_property):
    equal = solved = 0
    for seed in range(1000):
        g, h_th = random_instance(seed)
        path = wfpf(g, 1, BS_NODE, h_th)
        oracle = oracle_widest_hop_bounded(g, 1, BS_NODE, h_th)
        if oracle is None:
            assert path is None
            continue
        solved += 1
        if path is not None:
            assert_feasible(g, path, RoutingParams(H_th=h_th))
            assert path.metrics.p_S <= oracle[0]
            equal += path.metrics.p_S == oracle[0]
    assert solved
    record_property("wfpf_optimal_rate", equal / solved)


@pytest.mark.slow
def test_dp_oracle_matches_enumeration_on_many_small_graphs():
    for seed in range(500):
        g, h_th = random_instance(seed, max_nodes=8)
        oracle = oracle_widest_hop_bounded(g, 1, BS_NODE, h_th)
        found = enumerate_feasible_paths(g, 1, BS_NODE, h_th)
        if not found:
            assert oracle is None
            continue
        assert oracle[0] == found[0][1].p_S
        assert len(oracle[1]) - 1 < h_th


@pytest.mark.slow
def test_unsteered_forward_search_is_classic_widest_path_on_many_graphs():
    for seed in range(200):
        g, _ = random_instance(seed)
        labels = forward_dijkstra(g, 1, BS_NODE, math.inf, {node: 0.0 for node in g})
        classic = widest_path(g, 1, BS_NODE)
        if classic is None:
            assert labels.pred[BS_NODE] is None
        else:
            assert labels.w[BS_NODE] == classic[0]
