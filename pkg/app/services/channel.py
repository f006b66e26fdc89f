# services/channel.py
import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.exceptions import InvalidArgumentError, TraceParseError
from app.core.tables import read_table, write_table
from app.data.vehicle_catalog import (
    DensityLevel,
    VEHICLE_CATALOG,
    VehicleClass,
    class_for_antenna_height,
)
from app.schemas.channel import BSDescriptor, ChannelParams, LinkClass, LinkRecord, LinkType
from app.schemas.scenario import BSSite, TraceLog, VehicleState, WorldMap
from app.services.scenario import associate_bs

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0

# Offset separating BS indices from vehicle ids in per-link seed streams.
_BS_KEY_OFFSET = 1 << 40


# =====================================================================
# GEOMETRY
# =====================================================================

def _segment_hits_boxes(p0: np.ndarray, p1: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """
    Clip segments against axis-aligned boxes (Liang-Barsky).

    Args:
        p0, p1: (N, 2) segment endpoints, already in each box's frame
        boxes: (N, 4) rows of (x_min, y_min, x_max, y_max)

    Returns:
        (N,) bool, True where a positive-length piece of the segment lies inside
        the box interior. Grazing an edge or a corner does not count.
    """
    d = p1 - p0
    p = np.stack([-d[:, 0], d[:, 0], -d[:, 1], d[:, 1]], axis=1)
    q = np.stack([
        p0[:, 0] - boxes[:, 0],
        boxes[:, 2] - p0[:, 0],
        p0[:, 1] - boxes[:, 1],
        boxes[:, 3] - p0[:, 1],
    ], axis=1)
    parallel = p == 0.0
    outside = np.any(parallel & (q <= 0.0), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(parallel, 0.0, q / np.where(parallel, 1.0, p))
    entering = np.where((p < 0.0) & ~parallel, r, -np.inf)
    leaving = np.where((p > 0.0) & ~parallel, r, np.inf)
    t0 = np.maximum(0.0, entering.max(axis=1))
    t1 = np.minimum(1.0, leaving.min(axis=1))
    return ~outside & (t0 < t1)


class VehicleOutlines:
    """Oriented vehicle rectangles of one instant, packed for vectorized tests."""

    def __init__(self, vehicles: Sequence[VehicleState]):
        self.ids = np.array([v.id for v in vehicles], dtype=np.int64)
        self.centers = np.array([[v.x, v.y] for v in vehicles], dtype=float).reshape(-1, 2)
        headings = []
        for v in vehicles:
            speed = v.speed
            headings.append((v.vx / speed, v.vy / speed) if speed > 0 else (1.0, 0.0))
        self.headings = np.array(headings, dtype=float).reshape(-1, 2)
        specs = [VEHICLE_CATALOG[v.vclass] for v in vehicles]
        half_len = np.array([s["length"] / 2.0 for s in specs], dtype=float)
        half_wid = np.array([s["width"] / 2.0 for s in specs], dtype=float)
        self.boxes = np.stack([-half_len, -half_wid, half_len, half_wid], axis=1).reshape(-1, 4)
        self.body_heights = np.array([s["body_height"] for s in specs], dtype=float)

    def __len__(self) -> int:
        return len(self.ids)

    def count_blockers(
        self,
        a: Tuple[float, float],
        b: Tuple[float, float],
        min_body_height: float,
        exclude_ids: Iterable[int] = (),
    ) -> int:
        """Vehicles tall enough to obstruct the a-b segment."""
        if len(self) == 0:
            return 0
        mask = self.body_heights >= min_body_height
        excluded = list(exclude_ids)
        if excluded:
            mask &= ~np.isin(self.ids, excluded)
        if not mask.any():
            return 0
        centers = self.centers[mask]
        cos_h, sin_h = self.headings[mask, 0], self.headings[mask, 1]

        def to_local(point):
            rel = np.asarray(point, dtype=float) - centers
            return np.stack([rel[:, 0] * cos_h + rel[:, 1] * sin_h,
                             -rel[:, 0] * sin_h + rel[:, 1] * cos_h], axis=1)

        hits = _segment_hits_boxes(to_local(a), to_local(b), self.boxes[mask])
        return int(hits.sum())


# =====================================================================
# CHANNEL MODEL
# =====================================================================

class ChannelModel:
    """Geometry-based ground-truth radio oracle over one world map."""

    def __init__(self, world_map: Optional[WorldMap] = None,
                 params: ChannelParams = ChannelParams()):
        # without a map no link is obstructed by buildings
        self.world_map = world_map
        self.params = params
        buildings = world_map.buildings if world_map is not None else []
        self._buildings = np.array(
            [[b.x_min, b.y_min, b.x_max, b.y_max] for b in buildings], dtype=float
        ).reshape(-1, 4)
        self.reference_loss = 20.0 * math.log10(
            4.0 * math.pi * params.carrier_frequency_hz / SPEED_OF_LIGHT
        )

    def blocked_by_building(self, a: Tuple[float, float], b: Tuple[float, float]) -> bool:
        if len(self._buildings) == 0:
            return False
        n = len(self._buildings)
        p0 = np.tile(np.asarray(a, dtype=float), (n, 1))
        p1 = np.tile(np.asarray(b, dtype=float), (n, 1))
        return bool(_segment_hits_boxes(p0, p1, self._buildings).any())

    def classify(
        self,
        tx_pos: Tuple[float, float],
        tx_height: float,
        rx_pos: Tuple[float, float],
        rx_height: float,
        outlines: Optional[VehicleOutlines] = None,
        exclude_ids: Iterable[int] = (),
    ) -> Tuple[LinkClass, int]:
        """Link class and the number of obstructing vehicles."""
        if self.blocked_by_building(tx_pos, rx_pos):
            return LinkClass.NLOSB, 0
        if outlines is None:
            return LinkClass.LOS, 0
        threshold = max(tx_height, rx_height) + self.params.fresnel_margin
        blockers = outlines.count_blockers(tx_pos, rx_pos, threshold, exclude_ids)
        if blockers > 0:
            return LinkClass.NLOSV, blockers
        return LinkClass.LOS, 0

    def mean_rss(self, link_class: LinkClass, distance_3d: float, tx_power: float,
                 n_blockers: int = 0) -> float:
        """Expected RSS before shadowing and before the gamma_M clamp."""
        if distance_3d <= 0:
            raise InvalidArgumentError("distance must be positive")
        exponent = self.params.pathloss_exponent[link_class]
        loss = self.reference_loss + 10.0 * exponent * math.log10(distance_3d)
        if link_class == LinkClass.NLOSB:
            loss += self.params.wall_loss_db
        loss += self.params.blocker_loss_db * min(n_blockers, self.params.max_blockers)
        return tx_power - loss

    def rss(self, link_class: LinkClass, distance_3d: float, tx_power: float,
            n_blockers: int, rng: np.random.Generator) -> float:
        shadowing = rng.normal(0.0, self.params.shadowing_sigma[link_class])
        value = self.mean_rss(link_class, distance_3d, tx_power, n_blockers) - shadowing
        return min(float(value), self.params.gamma_m)

    # -----------------------------------------------------------------
    # Link-level helpers used by the database builder and the simulator
    # -----------------------------------------------------------------

    def v2v_rss(self, a: VehicleState, b: VehicleState, tx_power: float,
                outlines: Optional[VehicleOutlines], rng: np.random.Generator) -> float:
        link_class, blockers = self.classify(
            a.position, a.antenna_height, b.position, b.antenna_height,
            outlines, exclude_ids=(a.id, b.id),
        )
        return self.rss(link_class, distance_3d(a.position, a.antenna_height,
                                                b.position, b.antenna_height),
                        tx_power, blockers, rng)

    def v2i_rss(self, v: VehicleState, bs: BSSite,
                outlines: Optional[VehicleOutlines], rng: np.random.Generator) -> float:
        link_class, blockers = self.classify(
            v.position, v.antenna_height, bs.position, bs.height,
            outlines, exclude_ids=(v.id,),
        )
        return self.rss(link_class, distance_3d(v.position, v.antenna_height,
                                                bs.position, bs.height),
                        bs.tx_power, blockers, rng)


# =====================================================================
# MODULE-LEVEL OPERATIONS
# =====================================================================

def distance_3d(a: Tuple[float, float], h_a: float, b: Tuple[float, float], h_b: float) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (h_a - h_b) ** 2)


def classify_link(
    tx_pos: Tuple[float, float],
    tx_height: float,
    rx_pos: Tuple[float, float],
    rx_height: float,
    world_map: WorldMap,
    vehicles: Sequence[VehicleState],
    params: ChannelParams = ChannelParams(),
    exclude_ids: Iterable[int] = (),
) -> LinkClass:
    """Classify one link as LOS, NLOSb or NLOSv."""
    model = ChannelModel(world_map, params)
    link_class, _ = model.classify(
        tx_pos, tx_height, rx_pos, rx_height, VehicleOutlines(vehicles), exclude_ids
    )
    return link_class


def ground_truth_rss(
    link_class: LinkClass,
    distance: float,
    tx_power: float,
    n_blockers: int,
    rng: np.random.Generator,
    params: ChannelParams = ChannelParams(),
) -> float:
    """
    True received strength in dBm for one link instance.

    Same draw as ``ChannelModel.rss`` for an already classified link.

    Raises:
        InvalidArgumentError: If distance is not positive
    """
    return ChannelModel(params=params).rss(link_class, distance, tx_power, n_blockers, rng)


def density_context(
    v: VehicleState,
    vehicles: Sequence[VehicleState],
    radius: float,
    level: DensityLevel,
) -> Tuple[int, DensityLevel]:
    """Count of other vehicles strictly within radius, plus the scenario level."""
    if radius <= 0:
        raise InvalidArgumentError("radius must be positive")
    count = sum(
        1 for other in vehicles
        if other.id != v.id and math.hypot(other.x - v.x, other.y - v.y) < radius
    )
    return count, level


def link_rng(seed: int, time: float, a: int, b: int, bs_link: bool = False) -> np.random.Generator:
    """
    Seed stream of one link at one instant, symmetric in its endpoints.

    For V2I links ``b`` is the BS index.
    """
    millis = int(round(time * 1000.0))
    if bs_link:
        key = [seed, millis, a, _BS_KEY_OFFSET + b]
    else:
        key = [seed, millis, min(a, b), max(a, b)]
    return np.random.default_rng(key)


def surrounding_counts(vehicles: Sequence[VehicleState], radius: float) -> List[int]:
    """Surrounding-vehicle count of every vehicle of one instant."""
    if not vehicles:
        return []
    centers = np.array([[v.x, v.y] for v in vehicles], dtype=float)
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    within = (dist < radius).sum(axis=1) - 1
    return [int(c) for c in within]


# =====================================================================
# LINK-RECORD DATABASE
# =====================================================================

LINK_DB_HEADER = ["type", "tx_id", "rx_id", "x_t", "y_t", "h_t", "v_t",
                  "x_r", "y_r", "h_r", "v_r", "rss", "density"]


def v2i_rss_all(model: ChannelModel, v: VehicleState, outlines: Optional[VehicleOutlines],
                seed: int, time: float) -> List[float]:
    """True strength from every BS of the map to one vehicle."""
    return [
        model.v2i_rss(v, bs, outlines, link_rng(seed, time, v.id, k, bs_link=True))
        for k, bs in enumerate(model.world_map.bs_sites)
    ]


def build_link_database(
    log: TraceLog,
    world_map: WorldMap,
    params: ChannelParams = ChannelParams(),
    seed: int = 0,
    v2v_per_tick: int = 20,
    d_I: float = 400.0,
    d_V: float = 300.0,
    vue_tx_power: float = 23.0,
) -> List[LinkRecord]:
    """
    Historical link database from a trace log.

    Every tick yields one V2I record per vehicle associated with a BS and a
    seeded sample of at most ``v2v_per_tick`` V2V records among pairs closer
    than d_V.
    """
    model = ChannelModel(world_map, params)
    records: List[LinkRecord] = []
    for index, tick in enumerate(log.ticks):
        vehicles = tick.vehicles
        outlines = VehicleOutlines(vehicles)
        for v in vehicles:
            rss = v2i_rss_all(model, v, outlines, seed, tick.time)
            k = associate_bs(v, world_map, rss, d_I)
            if k is None:
                continue
            bs = world_map.bs_sites[k]
            records.append(LinkRecord(
                link_type=LinkType.V2I,
                tx=v,
                rx=BSDescriptor(index=k, x=bs.x, y=bs.y, height=bs.height),
                rss=rss[k],
                density_level=log.density_level,
            ))

        pairs = [
            (a, b)
            for i, a in enumerate(vehicles)
            for b in vehicles[i + 1:]
            if math.hypot(a.x - b.x, a.y - b.y) < d_V
        ]
        if pairs and v2v_per_tick > 0:
            rng = np.random.default_rng([seed, index])
            chosen = rng.choice(len(pairs), size=min(v2v_per_tick, len(pairs)), replace=False)
            for p in sorted(int(i) for i in chosen):
                a, b = pairs[p]
                rss = model.v2v_rss(a, b, vue_tx_power, outlines, link_rng(seed, tick.time, a.id, b.id))
                records.append(LinkRecord(
                    link_type=LinkType.V2V, tx=a, rx=b, rss=rss, density_level=log.density_level,
                ))
    logger.info(
        f"Built link database: {sum(r.link_type == LinkType.V2I for r in records)} V2I and "
        f"{sum(r.link_type == LinkType.V2V for r in records)} V2V records "
        f"from {len(log.ticks)} ticks ({log.density_level.value})"
    )
    return records


def _class_for_height(height: float, line_number: int) -> VehicleClass:
    vclass = class_for_antenna_height(height)
    if vclass is not None:
        return vclass
    raise TraceParseError(f"no vehicle class has antenna height {height}", line_number)


def _link_row(r: LinkRecord) -> list:
    if isinstance(r.rx, BSDescriptor):
        rx_cols = [r.rx.index, repr(r.rx.x), repr(r.rx.y), repr(r.rx.height), repr(0.0)]
    else:
        rx_cols = [r.rx.id, repr(r.rx.x), repr(r.rx.y), repr(r.rx.antenna_height),
                   repr(r.rx.speed)]
    return [
        r.link_type.value, r.tx.id, rx_cols[0],
        repr(r.tx.x), repr(r.tx.y), repr(r.tx.antenna_height), repr(r.tx.speed),
        *rx_cols[1:], repr(r.rss), r.density_level.value,
    ]


def export_link_database(records: Sequence[LinkRecord], path) -> None:
    """Write records as ``type,tx_id,rx_id,x_t,...,rss,density`` rows."""
    write_table(path, LINK_DB_HEADER, (_link_row(r) for r in records))


def import_link_database(path) -> List[LinkRecord]:
    """
    Read a link database file.

    Vehicle velocities come back as (speed, 0): the file keeps scalar speeds only.

    Raises:
        TraceParseError: On a malformed row, with its line number
    """
    _, frame = read_table(path, LINK_DB_HEADER)
    records: List[LinkRecord] = []
    for line_number, *fields in frame.itertuples(index=False, name=None):
        try:
            link_type = LinkType(fields[0])
            x_t, y_t, h_t, v_t, x_r, y_r, h_r, v_r, rss = (float(f) for f in fields[3:12])
            tx = VehicleState(id=int(fields[1]), x=x_t, y=y_t, vx=v_t, vy=0.0,
                              antenna_height=h_t, vclass=_class_for_height(h_t, line_number))
            if link_type == LinkType.V2I:
                rx = BSDescriptor(index=int(fields[2]), x=x_r, y=y_r, height=h_r)
            else:
                rx = VehicleState(id=int(fields[2]), x=x_r, y=y_r, vx=v_r, vy=0.0,
                                  antenna_height=h_r, vclass=_class_for_height(h_r, line_number))
            records.append(LinkRecord(link_type=link_type, tx=tx, rx=rx, rss=rss,
                                      density_level=DensityLevel(fields[12])))
        except ValueError as exc:
            raise TraceParseError(str(exc).splitlines()[0], line_number) from exc
    return records


# =====================================================================
# DENSITY AND COVERAGE EXPORTS
# =====================================================================

def density_cdf(logs: Dict[DensityLevel, TraceLog], radius: float,
                warmup_ticks: int = 0) -> pd.DataFrame:
    """
    Empirical CDF of the surrounding-vehicle count per density level.

    Returns:
        DataFrame with columns level, count, cdf
    """
    if radius <= 0:
        raise InvalidArgumentError("radius must be positive")
    frames = []
    for level, log in logs.items():
        counts = [c for tick in log.ticks[warmup_ticks:]
                  for c in surrounding_counts(tick.vehicles, radius)]
        if not counts:
            continue
        series = pd.Series(counts).value_counts().sort_index()
        frames.append(pd.DataFrame({
            "level": level.value,
            "count": series.index.astype(int),
            "cdf": series.cumsum().to_numpy() / len(counts),
        }))
    if not frames:
        return pd.DataFrame(columns=["level", "count", "cdf"])
    return pd.concat(frames, ignore_index=True)


def rss_heatmap(log: TraceLog, world_map: WorldMap, params: ChannelParams = ChannelParams(),
                seed: int = 0, cell: float = 5.0, d_I: float = 400.0) -> pd.DataFrame:
    """
    Mean V2I strength to the associated BS per grid cell.

    Returns:
        DataFrame with columns x, y, mean_rss, count (x, y are cell corners)
    """
    if cell <= 0:
        raise InvalidArgumentError("cell size must be positive")
    model = ChannelModel(world_map, params)
    rows = []
    for tick in log.ticks:
        outlines = VehicleOutlines(tick.vehicles)
        for v in tick.vehicles:
            rss = v2i_rss_all(model, v, outlines, seed, tick.time)
            k = associate_bs(v, world_map, rss, d_I)
            if k is None:
                continue
            rows.append({"x": math.floor(v.x / cell) * cell,
                         "y": math.floor(v.y / cell) * cell,
                         "rss": rss[k]})
    if not rows:
        return pd.DataFrame(columns=["x", "y", "mean_rss", "count"])
    frame = pd.DataFrame(rows)
    grouped = frame.groupby(["x", "y"])["rss"].agg(["mean", "count"]).reset_index()
    return grouped.rename(columns={"mean": "mean_rss"})
