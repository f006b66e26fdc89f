import csv

import pytest

from app.core.exceptions import InvalidArgumentError
from app.schemas.routing import BS_NODE, PathRank, RoutingParams
from app.schemas.verification import ActivationKind, CheckCause, PathCheckResult
from app.services.routing import make_path
from app.services.verification import (
    VERIFICATION_LOG_HEADER,
    LinkMeasurement,
    link_check,
    mend_flags,
    mend_paths,
    path_check,
    select_final,
    verification_rows,
    write_verification_log,
)
from tests.conftest import StubWorld, good, make_graph, weak

PARAMS = RoutingParams()
DELTAS = [0.4, 0.3, 0.2]


@pytest.fixture
def relay_graph():
    """Two four-hop relay paths crossing at node 3, plus a direct link."""
    return make_graph([
        (1, 2, 0.9, 1.0), (2, 3, 0.9, 1.0), (3, BS_NODE, 0.9, 1.0),
        (1, 4, 0.8, 1.0), (4, 3, 0.8, 1.0), (3, 5, 0.8, 1.0), (5, BS_NODE, 0.8, 1.0),
        (1, BS_NODE, 0.2, 1.0),
    ])


def links(*pairs, measurement=None):
    return {frozenset(pair): measurement or good() for pair in pairs}


# =====================================================================
# LINK CHECK
# =====================================================================

def test_healthy_path_qualifies_at_check_time(relay_graph):
    path = make_path(relay_graph, [1, 2, 3, BS_NODE])
    world = StubWorld(links((1, 2), (2, 3), (3, BS_NODE)))
    reports = link_check(path, world, activation_time=10.0, delta=0.3, tau=1.0, params=PARAMS)
    assert all(r.qualified for r in reports)
    assert [r.link for r in reports] == path.links
    assert all(t == pytest.approx(9.7) for _, _, t in world.queries)


@pytest.mark.parametrize("delta", [0.0, 0.5, 0.7])
def test_check_offset_must_lie_inside_half_tau(relay_graph, delta):
    path = make_path(relay_graph, [1, BS_NODE])
    with pytest.raises(InvalidArgumentError):
        link_check(path, StubWorld({}), 10.0, delta, 1.0, PARAMS)


@pytest.mark.parametrize("measurement, cause", [
    (None, CheckCause.ABSENT),
    (LinkMeasurement(rss=-60.0, duration=None), CheckCause.OUT_OF_RANGE),
    (weak(), CheckCause.LOW_RSS),
    (LinkMeasurement(rss=-60.0, duration=1.2), CheckCause.LOW_CONNECTIVITY),
])
def test_link_failure_causes(relay_graph, measurement, cause):
    path = make_path(relay_graph, [1, BS_NODE])
    table = {} if measurement is None else links((1, BS_NODE), measurement=measurement)
    (report,) = link_check(path, StubWorld(table), 10.0, 0.3, 1.0, PARAMS)
    assert not report.qualified
    assert report.cause == cause
    if cause == CheckCause.ABSENT:
        assert report.rss == -114.0 and report.connectivity == 0.0


def test_remaining_duration_counts_from_activation(relay_graph):
    path = make_path(relay_graph, [1, BS_NODE])
    world = StubWorld(links((1, BS_NODE), measurement=LinkMeasurement(rss=-60.0, duration=1.2)))
    (report,) = link_check(path, world, 10.0, 0.3, 1.0, PARAMS.model_copy(update={"C_th": 0.5}))
    assert report.connectivity == pytest.approx(0.9)
    assert report.qualified


def test_mend_flags_mark_reachable_sides(relay_graph):
    path = make_path(relay_graph, [1, 4, 3, 5, BS_NODE])
    world = StubWorld({**links((1, 4), (3, 5), (5, BS_NODE)), **links((4, 3), measurement=weak())})
    flags = mend_flags(path, link_check(path, world, 10.0, 0.3, 1.0, PARAMS))
    assert flags.sr == {4: True, 3: False, 5: False}
    assert flags.dr == {4: False, 3: True, 5: True}


# =====================================================================
# PATH CHECK
# =====================================================================

def test_first_qualified_path_is_selected(diamond):
    j1 = make_path(diamond, [1, 2, BS_NODE], PathRank.J1)
    j2 = make_path(diamond, [1, 3, BS_NODE], PathRank.J2)
    world = StubWorld({**links((1, 3), (3, BS_NODE), (1, 2)), **links((2, BS_NODE), measurement=weak())})
    result = path_check([j1, j2], world, 10.0, DELTAS, 1.0, PARAMS)
    assert result.selected == j2
    assert result.fault_links == [(-1, 2)]
    assert [entry.path for entry in result.checked] == [j1, j2]
    assert sorted({round(t, 6) for _, _, t in world.queries}) == [9.6, 9.7]


def test_paths_with_known_fault_are_skipped(relay_graph):
    j1 = make_path(relay_graph, [1, 2, 3, BS_NODE], PathRank.J1)
    j2 = make_path(relay_graph, [1, 4, 3, BS_NODE], PathRank.J2)
    j3 = make_path(relay_graph, [1, BS_NODE], PathRank.J3)
    world = StubWorld({**links((1, 2), (2, 3), (1, 4), (4, 3), (1, BS_NODE)),
                       **links((3, BS_NODE), measurement=weak())})
    result = path_check([j1, j2, j3], world, 10.0, DELTAS, 1.0, PARAMS)
    assert result.skipped == [j2]
    assert result.selected == j3
    assert all((u, v) != (4, 3) for u, v, _ in world.queries)


def test_path_check_validates_offsets(diamond):
    paths = [make_path(diamond, [1, 2, BS_NODE]), make_path(diamond, [1, BS_NODE])]
    with pytest.raises(InvalidArgumentError):
        path_check(paths, StubWorld({}), 10.0, [0.2, 0.3], 1.0, PARAMS)
    with pytest.raises(InvalidArgumentError):
        path_check(paths, StubWorld({}), 10.0, [0.2], 1.0, PARAMS)


def test_empty_candidate_list_selects_nothing():
    result = path_check([], StubWorld({}), 10.0, DELTAS, 1.0, PARAMS)
    assert result.selected is None and result.checked == []


# =====================================================================
# MENDING AND FINAL SELECTION
# =====================================================================

def _crossing_failure(relay_graph):
    e = make_path(relay_graph, [1, 2, 3, BS_NODE], PathRank.J1)
    f = make_path(relay_graph, [1, 4, 3, 5, BS_NODE], PathRank.J2)
    world = StubWorld({**links((1, 2), (2, 3), (4, 3), (3, 5), (5, BS_NODE)),
                       **links((3, BS_NODE), (1, 4), measurement=weak())})
    return path_check([e, f], world, 10.0, DELTAS, 1.0, PARAMS)


def test_mending_splices_at_shared_node(relay_graph):
    result = _crossing_failure(relay_graph)
    assert result.selected is None and len(result.checked) == 2
    mended = mend_paths(result.checked, PARAMS)
    assert mended.nodes == (1, 2, 3, 5, BS_NODE)
    assert mended.rank == PathRank.MENDED
    # measured -60 dBm on every spliced link
    assert mended.metrics.p_S == pytest.approx(20.0 / 70.0)


def test_mending_respects_hop_constraint(relay_graph):
    result = _crossing_failure(relay_graph)
    assert mend_paths(result.checked, PARAMS.model_copy(update={"H_th": 4})) is None


def test_mending_needs_two_checked_paths(relay_graph):
    result = _crossing_failure(relay_graph)
    with pytest.raises(InvalidArgumentError):
        mend_paths(result.checked[:1], PARAMS)


def test_third_and_second_paths_mend_at_their_shared_node():
    # s=1, d=BS; J2 and J3 cross at b=3
    g = make_graph([
        (1, 2, 0.9, 1.0), (2, BS_NODE, 0.9, 1.0),
        (1, 4, 0.8, 1.0), (4, 3, 0.8, 1.0), (3, BS_NODE, 0.8, 1.0),
        (1, 5, 0.7, 1.0), (5, 3, 0.7, 1.0), (3, 6, 0.7, 1.0), (6, BS_NODE, 0.7, 1.0),
        (1, BS_NODE, 0.2, 1.0),
    ])
    paths = [make_path(g, [1, 2, BS_NODE], PathRank.J1),
             make_path(g, [1, 4, 3, BS_NODE], PathRank.J2),
             make_path(g, [1, 5, 3, 6, BS_NODE], PathRank.J3)]
    world = StubWorld({**links((1, 2), (4, 3), (3, BS_NODE), (1, 5), (5, 3), (3, 6)),
                       **links((2, BS_NODE), (1, 4), (6, BS_NODE), measurement=weak())})
    result = path_check(paths, world, 10.0, DELTAS, 1.0, PARAMS)
    assert result.selected is None and len(result.checked) == 3
    assert result.checked[1].flags.dr[3] and not result.checked[1].flags.sr[3]
    assert result.checked[2].flags.sr[3] and not result.checked[2].flags.dr[3]
    direct = make_path(g, [1, BS_NODE], PathRank.DIRECT)
    decision = select_final(result, mend_paths(result.checked, PARAMS), direct)
    assert decision.kind == ActivationKind.MENDED
    assert decision.path.nodes == (1, 5, 3, BS_NODE)
    assert decision.path.metrics.p_H == 3


def test_unmendable_shared_nodes_fall_back_to_direct():
    # J1 and J2 share c=4, J2 and J3 share b=3; every source-side link fails
    g = make_graph([
        (1, 2, 0.9, 1.0), (2, 4, 0.9, 1.0), (4, BS_NODE, 0.9, 1.0),
        (1, 5, 0.8, 1.0), (5, 4, 0.8, 1.0), (4, 3, 0.8, 1.0), (3, BS_NODE, 0.8, 1.0),
        (1, 6, 0.7, 1.0), (6, 3, 0.7, 1.0), (3, 7, 0.7, 1.0), (7, BS_NODE, 0.7, 1.0),
        (1, BS_NODE, 0.2, 1.0),
    ])
    paths = [make_path(g, [1, 2, 4, BS_NODE], PathRank.J1),
             make_path(g, [1, 5, 4, 3, BS_NODE], PathRank.J2),
             make_path(g, [1, 6, 3, 7, BS_NODE], PathRank.J3)]
    world = StubWorld({**links((2, 4), (4, BS_NODE), (5, 4), (4, 3), (3, BS_NODE),
                               (6, 3), (3, 7), (7, BS_NODE)),
                       **links((1, 2), (1, 5), (1, 6), measurement=weak())})
    result = path_check(paths, world, 10.0, DELTAS, 1.0, PARAMS)
    assert result.selected is None and len(result.checked) == 3
    assert mend_paths(result.checked, PARAMS) is None
    direct = make_path(g, [1, BS_NODE], PathRank.DIRECT)
    decision = select_final(result, None, direct)
    assert decision.kind == ActivationKind.DIRECT and decision.path == direct


def test_node_disjoint_paths_cannot_mend(diamond):
    paths = [make_path(diamond, [1, 2, BS_NODE], PathRank.J1),
             make_path(diamond, [1, 3, BS_NODE], PathRank.J2)]
    world = StubWorld({**links((1, 2), (3, BS_NODE)),
                       **links((2, BS_NODE), (1, 3), measurement=weak())})
    result = path_check(paths, world, 10.0, DELTAS, 1.0, PARAMS)
    assert result.selected is None and len(result.checked) == 2
    assert result.checked[0].flags.sr[2] and result.checked[1].flags.dr[3]
    assert mend_paths(result.checked, PARAMS) is None


def test_final_selection_order(diamond):
    qualified = make_path(diamond, [1, 2, BS_NODE])
    direct = make_path(diamond, [1, BS_NODE], PathRank.DIRECT)
    mended = make_path(diamond, [1, 3, BS_NODE], PathRank.MENDED)
    empty = PathCheckResult()
    assert select_final(PathCheckResult(selected=qualified), mended, direct).kind == ActivationKind.QUALIFIED
    assert select_final(empty, mended, direct).path == mended
    assert select_final(empty, None, direct).kind == ActivationKind.DIRECT
    gap = select_final(empty, None, None)
    assert gap.kind == ActivationKind.NO_PATH and gap.service_gap


def test_verification_log_lists_every_checked_link(tmp_path, relay_graph):
    result = _crossing_failure(relay_graph)
    rows = verification_rows(10.0, 1, result)
    assert len(rows) == 3 + 4
    path = tmp_path / "verification.csv"
    write_verification_log(rows, path)
    with open(path, newline="") as handle:
        read = list(csv.DictReader(handle))
    assert list(read[0]) == VERIFICATION_LOG_HEADER
    assert read[2]["link"] == "3--1" and read[2]["qualified"] == "0"
