# services/verification.py
"""Pre-switchover path verification against the true world state."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Union

import pandas as pd

from app.core.exceptions import InvalidArgumentError
from app.schemas.metrics import UNBOUNDED, EdgeMetrics
from app.schemas.routing import PathRank, RankedPath, RoutingParams
from app.schemas.verification import (
    ActivationDecision,
    ActivationKind,
    CheckCause,
    CheckedPath,
    FaultSet,
    LinkCheckReport,
    MendFlags,
    PathCheckResult,
)
from app.services.metrics import LinkDuration, link_connectivity, normalized_strength, path_metrics

logger = logging.getLogger(__name__)

VERIFICATION_LOG_HEADER = ["t", "vue", "path_rank", "link", "rss", "conn", "qualified"]


# =====================================================================
# WORLD ACCESS
# =====================================================================

@dataclass(frozen=True)
class LinkMeasurement:
    """
    What an LCM exchange learns about one link.

    ``duration`` is the true remaining link time, or None when the endpoints
    are already out of range of each other.
    """
    rss: float
    duration: Optional[LinkDuration]


class World(Protocol):
    """Ground truth queried by the protocol."""

    def measure(self, u: int, v: int, time: float) -> Optional[LinkMeasurement]:
        """Measurement of link (u, v) at time, or None when a node is absent."""
        ...


# =====================================================================
# LINK CHECK
# =====================================================================

def _check_delta(delta: float, tau: float) -> None:
    if not 0.0 < delta < tau / 2.0:
        raise InvalidArgumentError(f"check offset {delta} must lie in (0, {tau / 2.0})")


def link_check(
    path: RankedPath,
    world: World,
    activation_time: float,
    delta: float,
    tau: float,
    params: RoutingParams,
    noise_floor: float = -114.0,
) -> List[LinkCheckReport]:
    """
    Check every link of a path at activation_time - delta.

    The remaining duration is measured at check time and reduced by delta so
    it counts from the activation instant. A link qualifies when its rss
    exceeds gamma_th and its connectivity exceeds C_th.

    Raises:
        InvalidArgumentError: If delta is outside (0, tau / 2)
    """
    _check_delta(delta, tau)
    check_time = activation_time - delta
    reports = []
    for u, v in path.links:
        measurement = world.measure(u, v, check_time)
        if measurement is None:
            reports.append(LinkCheckReport(
                link=(u, v), rss=noise_floor, connectivity=0.0, qualified=False,
                cause=CheckCause.ABSENT, check_time=check_time,
            ))
            continue
        if measurement.duration is None:
            connectivity = 0.0
            cause = CheckCause.OUT_OF_RANGE
        else:
            remaining = measurement.duration
            if remaining is not UNBOUNDED:
                remaining = max(remaining - delta, 0.0)
            connectivity = link_connectivity(remaining, tau)
            if measurement.rss <= params.gamma_th:
                cause = CheckCause.LOW_RSS
            elif connectivity <= params.C_th:
                cause = CheckCause.LOW_CONNECTIVITY
            else:
                cause = CheckCause.NONE
        reports.append(LinkCheckReport(
            link=(u, v), rss=measurement.rss, connectivity=connectivity,
            qualified=cause == CheckCause.NONE, cause=cause, check_time=check_time,
        ))
    return reports


def mend_flags(path: RankedPath, reports: Sequence[LinkCheckReport]) -> MendFlags:
    """sr[v]: every link s..v qualified; dr[v]: every link v..d qualified (interior v)."""
    ok = [report.qualified for report in reports]
    interior = path.nodes[1:-1]
    sr = {node: all(ok[: i + 1]) for i, node in enumerate(interior)}
    dr = {node: all(ok[i + 1:]) for i, node in enumerate(interior)}
    return MendFlags(sr=sr, dr=dr)


def path_check(
    paths: Sequence[RankedPath],
    world: World,
    activation_time: float,
    deltas: Sequence[float],
    tau: float,
    params: RoutingParams,
    noise_floor: float = -114.0,
) -> PathCheckResult:
    """
    Check ranked paths in order until one fully qualifies.

    Path k is checked at activation_time - deltas[k]. A path containing a link
    already in the fault set is skipped without a check.

    Raises:
        InvalidArgumentError: If the offsets are not strictly decreasing or too few
    """
    if len(deltas) < len(paths):
        raise InvalidArgumentError("need one check offset per candidate path")
    if any(a <= b for a, b in zip(deltas, deltas[1:])):
        raise InvalidArgumentError("check offsets must be strictly decreasing")

    fault = FaultSet()
    checked: List[CheckedPath] = []
    skipped: List[RankedPath] = []
    selected: Optional[RankedPath] = None
    for path, delta in zip(paths, deltas):
        if fault.touches(path):
            logger.debug(f"Skipping {path.rank.value} {path.nodes}: contains a faulty link")
            skipped.append(path)
            continue
        reports = link_check(path, world, activation_time, delta, tau, params, noise_floor)
        for report in reports:
            if not report.qualified:
                fault.add(report.link)
        entry = CheckedPath(path=path, reports=reports, flags=mend_flags(path, reports))
        checked.append(entry)
        if entry.qualified:
            selected = path
            break
    return PathCheckResult(selected=selected, checked=checked, skipped=skipped,
                           fault_links=fault.links())


# =====================================================================
# MENDING AND FINAL SELECTION
# =====================================================================

def _measured_edges(entry: CheckedPath, params: RoutingParams) -> Dict[frozenset, EdgeMetrics]:
    edges = {}
    for report in entry.reports:
        if report.qualified:
            edges[report.key] = EdgeMetrics(
                l_S=normalized_strength(min(report.rss, params.gamma_M), params.gamma_th, params.gamma_M),
                l_C=report.connectivity,
            )
    return edges


def mend_paths(checked: Sequence[CheckedPath], params: RoutingParams) -> Optional[RankedPath]:
    """
    Splice two unqualified checked paths at a shared interior node.

    For paths e and f sharing node u with sr_e[u] and dr_f[u], the candidate is
    e's prefix up to u followed by f's suffix after u. Candidates must be simple
    and have fewer than H_th hops; the strongest by measured metrics wins.

    Raises:
        InvalidArgumentError: If fewer than two paths were checked
    """
    if len(checked) < 2:
        raise InvalidArgumentError("mending needs at least two checked paths")
    failed = [entry for entry in checked if not entry.qualified]
    measured: Dict[frozenset, EdgeMetrics] = {}
    for entry in failed:
        measured.update(_measured_edges(entry, params))

    best: Optional[RankedPath] = None
    for e in failed:
        for f in failed:
            if e is f:
                continue
            for u in e.flags.sr:
                if not e.flags.sr[u] or not f.flags.dr.get(u, False):
                    continue
                head = e.path.nodes[: e.path.nodes.index(u) + 1]
                tail = f.path.nodes[f.path.nodes.index(u) + 1:]
                nodes = head + tail
                if len(set(nodes)) != len(nodes) or len(nodes) - 1 >= params.H_th:
                    logger.debug(f"Mending at {u} rejected: {nodes}")
                    continue
                links = [frozenset(link) for link in zip(nodes[:-1], nodes[1:])]
                candidate = RankedPath(
                    nodes=nodes,
                    metrics=path_metrics([measured[link] for link in links]),
                    rank=PathRank.MENDED,
                )
                if best is None or (
                    (-candidate.metrics.p_S, candidate.metrics.p_H, candidate.nodes)
                    < (-best.metrics.p_S, best.metrics.p_H, best.nodes)
                ):
                    best = candidate
    return best


def select_final(
    result: PathCheckResult,
    mended: Optional[RankedPath],
    direct: Optional[RankedPath],
) -> ActivationDecision:
    """Qualified path, else mended path, else direct V2I, else a service gap."""
    if result.selected is not None:
        return ActivationDecision(kind=ActivationKind.QUALIFIED, path=result.selected)
    if mended is not None:
        return ActivationDecision(kind=ActivationKind.MENDED, path=mended)
    if direct is not None:
        return ActivationDecision(kind=ActivationKind.DIRECT, path=direct)
    return ActivationDecision(kind=ActivationKind.NO_PATH)


# =====================================================================
# AUDIT LOG
# =====================================================================

def verification_rows(time: float, vue: int, result: PathCheckResult) -> List[dict]:
    rows = []
    for entry in result.checked:
        for report in entry.reports:
            rows.append({
                "t": time,
                "vue": vue,
                "path_rank": entry.path.rank.value,
                "link": f"{report.link[0]}-{report.link[1]}",
                "rss": report.rss,
                "conn": report.connectivity,
                "qualified": int(report.qualified),
            })
    return rows


def write_verification_log(rows: Iterable[dict], path: Union[str, Path]) -> None:
    pd.DataFrame(list(rows), columns=VERIFICATION_LOG_HEADER).to_csv(path, index=False)
