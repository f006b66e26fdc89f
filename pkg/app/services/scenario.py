# services/scenario.py
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.exceptions import InvalidArgumentError, TraceParseError
from app.core.tables import read_table, write_table
from app.data.vehicle_catalog import DensityLevel, VEHICLE_CATALOG, VehicleClass, density_level_for
from app.schemas.scenario import BSSite, Building, Road, Tick, TraceLog, VehicleState, WorldMap

logger = logging.getLogger(__name__)

TRACE_HEADER = ["t", "id", "x", "y", "vx", "vy", "h", "class"]

_STEP = 0.1  # s, car-following substep
_HEADWAY_TIME = 1.0  # s

PathLike = Union[str, Path]


# =====================================================================
# A. MAP GENERATION
# =====================================================================

def road_centers(count: int, block_size: float, road_width: float) -> List[float]:
    """Centerline coordinates of the grid roads along one axis."""
    cell = block_size + road_width
    return [i * cell + road_width / 2.0 for i in range(count)]


def generate_map(
    blocks_x: int,
    blocks_y: int,
    block_size: float,
    road_width: float,
    bs_count: int,
    seed: int,
    bs_height: float = settings.BS_HEIGHT,
    bs_tx_power: float = settings.BS_TX_POWER,
) -> WorldMap:
    """
    Build a Manhattan-style grid city.

    Every cell is a road strip followed by a building block, so the extent is
    count * (block_size + road_width) along each axis. Base stations sit at
    intersections spread evenly over the grid, shifted inside the crossing by
    a seeded offset.

    Raises:
        InvalidArgumentError: On non-positive counts or when road_width >= block_size
    """
    if blocks_x < 1 or blocks_y < 1 or bs_count < 1:
        raise InvalidArgumentError("block and base station counts must be at least 1")
    if not block_size > road_width > 0:
        raise InvalidArgumentError("require block_size > road_width > 0")

    cell = block_size + road_width
    width, height = blocks_x * cell, blocks_y * cell
    xs = road_centers(blocks_x, block_size, road_width)
    ys = road_centers(blocks_y, block_size, road_width)

    roads = [Road(x0=x, y0=0.0, x1=x, y1=height, lanes=2, width=road_width) for x in xs]
    roads += [Road(x0=0.0, y0=y, x1=width, y1=y, lanes=2, width=road_width) for y in ys]

    buildings = [
        Building(
            x_min=i * cell + road_width,
            y_min=j * cell + road_width,
            x_max=(i + 1) * cell,
            y_max=(j + 1) * cell,
        )
        for i in range(blocks_x)
        for j in range(blocks_y)
    ]

    rng = np.random.default_rng(seed)
    side = math.ceil(math.sqrt(bs_count))
    rows = math.ceil(bs_count / side)
    bs_sites = []
    for k in range(bs_count):
        row, col = divmod(k, side)
        ix = min(int((col + 0.5) * blocks_x / side), blocks_x - 1)
        iy = min(int((row + 0.5) * blocks_y / rows), blocks_y - 1)
        dx, dy = rng.choice([-1.0, 1.0], size=2) * road_width / 4.0
        bs_sites.append(
            BSSite(x=xs[ix] + float(dx), y=ys[iy] + float(dy), height=bs_height, tx_power=bs_tx_power)
        )

    world = WorldMap(width=width, height=height, roads=roads, buildings=buildings, bs_sites=bs_sites)
    logger.info(
        f"Generated {width:.0f}x{height:.0f} m map: {len(roads)} roads, "
        f"{len(buildings)} buildings, {len(bs_sites)} base stations"
    )
    return world


# =====================================================================
# B. TRAFFIC MICRO-SIMULATION
# =====================================================================

@dataclass
class _Lane:
    """One travel direction of a road; s runs from the entry boundary."""
    index: int
    vertical: bool
    direction: int
    fixed: float
    length: float
    crossings: List[Tuple[float, int]] = field(default_factory=list)
    vehicles: List["_Vehicle"] = field(default_factory=list)

    def to_xy(self, s: float) -> Tuple[float, float]:
        along = s if self.direction > 0 else self.length - s
        return (self.fixed, along) if self.vertical else (along, self.fixed)

    def s_of(self, coordinate: float) -> float:
        return coordinate if self.direction > 0 else self.length - coordinate

    def heading(self) -> Tuple[int, int]:
        return (0, self.direction) if self.vertical else (self.direction, 0)


@dataclass
class _Vehicle:
    vid: int
    vclass: VehicleClass
    s: float
    speed: float
    desired_speed: float

    @property
    def length(self) -> float:
        return VEHICLE_CATALOG[self.vclass]["length"]


class TrafficSimulator:
    """
    Lane-based car following on the grid roads.

    Each road carries one lane per direction at a quarter road width from the
    centerline. Vehicles enter at the lane start through a stratified arrival
    process, keep at least ``min_gap`` bumper to bumper, pick straight, left or
    right uniformly at every intersection and leave past the lane end.
    """

    def __init__(
        self,
        world_map: WorldMap,
        density: float,
        seed: int,
        speed_limit: float = settings.SPEED_LIMIT,
        min_gap: float = settings.MIN_HEADWAY,
        max_accel: float = settings.MAX_ACCEL,
        truck_share: float = settings.TRUCK_SHARE,
    ):
        self.world_map = world_map
        self.speed_limit = speed_limit
        self.min_gap = min_gap
        self.max_accel = max_accel
        self.truck_share = truck_share
        self.time = 0.0
        self.entered = 0
        self._next_id = 0

        self.lanes = self._build_lanes(world_map)
        road_km = world_map.road_length / 1000.0
        # entries per hour spread over the lane entry points
        self.lane_rate = density * road_km / len(self.lanes) / 3600.0

        streams = np.random.SeedSequence(seed).spawn(len(self.lanes) + 1)
        self.rng = np.random.default_rng(streams[0])
        self._arrival_rngs = [np.random.default_rng(stream) for stream in streams[1:]]
        self._arrival_index = [0] * len(self.lanes)
        self._next_arrival = [self._draw_arrival(i) for i in range(len(self.lanes))]
        self._pending = [0] * len(self.lanes)

    @staticmethod
    def _build_lanes(world_map: WorldMap) -> List[_Lane]:
        lanes: List[_Lane] = []
        vertical_roads = [road for road in world_map.roads if road.vertical]
        horizontal_roads = [road for road in world_map.roads if not road.vertical]
        for road in world_map.roads:
            quarter = road.width / 4.0
            for direction in (1, -1):
                if road.vertical:
                    # northbound keeps right of the centerline
                    fixed = road.x0 + quarter * direction
                    lane = _Lane(len(lanes), True, direction, fixed, world_map.height)
                    crossings = [(h.y0, k) for k, h in enumerate(horizontal_roads)]
                else:
                    fixed = road.y0 - quarter * direction
                    lane = _Lane(len(lanes), False, direction, fixed, world_map.width)
                    crossings = [(v.x0, k) for k, v in enumerate(vertical_roads)]
                lane.crossings = sorted((lane.s_of(c), k) for c, k in crossings)
                lanes.append(lane)
        return lanes

    def _draw_arrival(self, lane_index: int) -> float:
        if self.lane_rate <= 0:
            return math.inf
        k = self._arrival_index[lane_index]
        self._arrival_index[lane_index] += 1
        offset = self._arrival_rngs[lane_index].random()
        return (k + offset) / self.lane_rate

    def _target_lane(self, lane: _Lane, crossing_road: int, turn: int) -> _Lane:
        hx, hy = lane.heading()
        # turn 1 = left, 2 = right
        nx_, ny_ = (-hy, hx) if turn == 1 else (hy, -hx)
        vertical_target = not lane.vertical
        direction = ny_ if vertical_target else nx_
        candidates = [
            candidate for candidate in self.lanes
            if candidate.vertical == vertical_target and candidate.direction == direction
        ]
        return candidates[crossing_road]

    def is_insert_safe(self, lane: _Lane, s: float, vehicle: _Vehicle) -> bool:
        """Whether vehicle fits at s with min_gap plus headway to both neighbours."""
        for other in lane.vehicles:
            gap = abs(other.s - s) - (other.length + vehicle.length) / 2.0
            follower_speed = vehicle.speed if other.s > s else other.speed
            if gap < self.min_gap + _HEADWAY_TIME * follower_speed:
                return False
        return True

    def _insert(self, lane: _Lane, vehicle: _Vehicle) -> None:
        lane.vehicles.append(vehicle)
        lane.vehicles.sort(key=lambda v: -v.s)

    def _spawn(self, lane: _Lane) -> None:
        while self._next_arrival[lane.index] <= self.time:
            self._pending[lane.index] += 1
            self._next_arrival[lane.index] = self._draw_arrival(lane.index)
        if self._pending[lane.index] == 0:
            return
        vclass = VehicleClass.TRUCK_BUS if self.rng.random() < self.truck_share else VehicleClass.PASSENGER
        desired = self.speed_limit * float(self.rng.uniform(0.85, 1.0))
        candidate = _Vehicle(self._next_id, vclass, VEHICLE_CATALOG[vclass]["length"] / 2.0, desired, desired)
        if not self.is_insert_safe(lane, candidate.s, candidate):
            return
        self._next_id += 1
        self._pending[lane.index] -= 1
        self.entered += 1
        self._insert(lane, candidate)

    def step(self, dt: float = _STEP) -> None:
        """Advance every lane by dt, then apply the turns decided in this step."""
        transfers = []
        for lane in self.lanes:
            leader: Optional[_Vehicle] = None
            survivors = []
            for vehicle in lane.vehicles:
                old_s = vehicle.s
                speed = min(vehicle.desired_speed, vehicle.speed + self.max_accel * dt)
                if leader is not None:
                    gap = leader.s - vehicle.s - (leader.length + vehicle.length) / 2.0
                    speed = min(speed, max(0.0, (gap - self.min_gap) / _HEADWAY_TIME))
                new_s = vehicle.s + speed * dt
                if leader is not None:
                    limit = leader.s - (leader.length + vehicle.length) / 2.0 - self.min_gap
                    new_s = max(old_s, min(new_s, limit))
                vehicle.speed = speed
                vehicle.s = new_s
                leader = vehicle
                if new_s > lane.length:
                    continue
                survivors.append(vehicle)
                for crossing_s, road_index in lane.crossings:
                    if old_s < crossing_s <= new_s:
                        turn = int(self.rng.integers(3))
                        if turn:
                            transfers.append((lane, vehicle, crossing_s, road_index, turn))
                        break
            lane.vehicles = survivors

        for lane, vehicle, crossing_s, road_index, turn in transfers:
            target = self._target_lane(lane, road_index, turn)
            overshoot = vehicle.s - crossing_s
            target_s = target.s_of(lane.fixed) + overshoot
            moving = _Vehicle(vehicle.vid, vehicle.vclass, target_s, vehicle.speed, vehicle.desired_speed)
            if target_s > target.length:
                continue
            if not self.is_insert_safe(target, target_s, moving):
                continue
            lane.vehicles.remove(vehicle)
            vehicle.s = target_s
            self._insert(target, vehicle)

        self.time += dt
        for lane in self.lanes:
            self._spawn(lane)

    def snapshot(self, time: float) -> Tick:
        states = []
        for lane in self.lanes:
            hx, hy = lane.heading()
            for vehicle in lane.vehicles:
                x, y = lane.to_xy(vehicle.s)
                states.append(VehicleState(
                    id=vehicle.vid,
                    x=x,
                    y=y,
                    vx=hx * vehicle.speed,
                    vy=hy * vehicle.speed,
                    antenna_height=VEHICLE_CATALOG[vehicle.vclass]["antenna_height"],
                    vclass=vehicle.vclass,
                ))
        states.sort(key=lambda v: v.id)
        return Tick(time=time, vehicles=states)


def generate_traces(
    world_map: WorldMap,
    density: float,
    duration: float,
    tau: float,
    seed: int,
    warmup: Optional[float] = None,
    **vehicle_params,
) -> TraceLog:
    """
    Simulate traffic and sample it every tau seconds.

    The simulator runs for ``warmup`` seconds (default: one crossing of the map
    at the speed limit) before the first recorded tick, so the roads are
    populated at t = 0. Ticks are recorded at k * tau for k = 0..duration/tau.

    Args:
        world_map: Map to drive on
        density: Requested entries per hour per km of road
        duration: Recorded span in seconds
        tau: Collection period
        seed: Seed of every random draw
        warmup: Pre-roll in seconds
        vehicle_params: Overrides for TrafficSimulator knobs

    Raises:
        InvalidArgumentError: On non-positive density or duration < tau
    """
    if density <= 0:
        raise InvalidArgumentError("density must be positive")
    if not duration >= tau > 0:
        raise InvalidArgumentError("require duration >= tau > 0")

    sim = TrafficSimulator(world_map, density, seed, **vehicle_params)
    if warmup is None:
        warmup = max(world_map.width, world_map.height) / sim.speed_limit
    for _ in range(int(math.ceil(warmup / _STEP))):
        sim.step()

    substeps = max(1, int(round(tau / _STEP)))
    dt = tau / substeps
    n_ticks = int(math.floor(duration / tau + 1e-9)) + 1
    ticks = [sim.snapshot(0.0)]
    for k in range(1, n_ticks):
        for _ in range(substeps):
            sim.step(dt)
        ticks.append(sim.snapshot(k * tau))

    log = TraceLog(tau=tau, density_level=density_level_for(density), ticks=ticks)
    mean_count = sum(len(t.vehicles) for t in ticks) / len(ticks)
    logger.info(
        f"Generated {len(ticks)} ticks at density {density:g} veh/h/km "
        f"({log.density_level.value}), mean {mean_count:.1f} vehicles per tick"
    )
    return log


def realized_density(log: TraceLog, world_map: WorldMap, warmup_ticks: int = 0) -> float:
    """Entries per hour per km of road observed after the warm-up ticks."""
    ticks = log.ticks[warmup_ticks:]
    if len(ticks) < 2:
        return 0.0
    seen = {v.id for v in ticks[0].vehicles}
    entries = 0
    for tick in ticks[1:]:
        for vehicle in tick.vehicles:
            if vehicle.id not in seen:
                seen.add(vehicle.id)
                entries += 1
    hours = (ticks[-1].time - ticks[0].time) / 3600.0
    return entries / hours / (world_map.road_length / 1000.0)


# =====================================================================
# C. BASE STATION ASSOCIATION
# =====================================================================

def associate_bs(
    v: VehicleState,
    world_map: WorldMap,
    rss_per_bs: Sequence[float],
    d_I: float = settings.D_I,
) -> Optional[int]:
    """
    Strongest base station within coverage, lowest index on ties.

    Returns:
        BS index, or None when every BS is farther than d_I

    Raises:
        InvalidArgumentError: If the map has no BS or rss_per_bs is misaligned
    """
    if not world_map.bs_sites:
        raise InvalidArgumentError("map has no base stations")
    if len(rss_per_bs) != len(world_map.bs_sites):
        raise InvalidArgumentError("rss_per_bs must align with the map's base stations")
    best: Optional[int] = None
    for index, (bs, rss) in enumerate(zip(world_map.bs_sites, rss_per_bs)):
        if math.hypot(v.x - bs.x, v.y - bs.y) > d_I:
            continue
        if best is None or rss > rss_per_bs[best]:
            best = index
    return best


# =====================================================================
# D. INTERPOLATION
# =====================================================================

def state_at(log: TraceLog, time: float) -> Dict[int, VehicleState]:
    """
    Vehicle states at an arbitrary instant inside the log.

    Between two ticks, vehicles present at both are linearly interpolated;
    vehicles present at only one of them are absent.
    """
    if not log.ticks:
        return {}
    times = [tick.time for tick in log.ticks]
    if time < times[0] or time > times[-1]:
        return {}
    index = int(np.searchsorted(times, time, side="right")) - 1
    if times[index] == time or index == len(times) - 1:
        return log.by_id(index)
    before, after = log.by_id(index), log.by_id(index + 1)
    frac = (time - times[index]) / (times[index + 1] - times[index])
    states = {}
    for vid, a in before.items():
        b = after.get(vid)
        if b is None:
            continue
        states[vid] = a.model_copy(update={
            "x": a.x + (b.x - a.x) * frac,
            "y": a.y + (b.y - a.y) * frac,
            "vx": a.vx + (b.vx - a.vx) * frac,
            "vy": a.vy + (b.vy - a.vy) * frac,
        })
    return states


# =====================================================================
# E. FILE INTERCHANGE
# =====================================================================

def export_traces(log: TraceLog, path: PathLike) -> None:
    """Write ``t,id,x,y,vx,vy,h,class`` rows after a metadata comment."""
    rows = (
        [repr(tick.time), v.id, repr(v.x), repr(v.y), repr(v.vx), repr(v.vy),
         repr(v.antenna_height), v.vclass.value]
        for tick in log.ticks
        for v in tick.vehicles
    )
    comment = f"density_level={log.density_level.value} tau={log.tau!r} ticks={len(log.ticks)}"
    write_table(path, TRACE_HEADER, rows, comment=comment)


def _parse_meta(line: str, line_number: int) -> Dict[str, str]:
    meta = {}
    for token in line.lstrip("#").split():
        if "=" not in token:
            raise TraceParseError(f"bad metadata token {token!r}", line_number)
        key, value = token.split("=", 1)
        meta[key] = value
    return meta


def import_traces(path: PathLike) -> TraceLog:
    """
    Read a trace file written by export_traces.

    Raises:
        TraceParseError: On a malformed row, with its line number
    """
    comments, frame = read_table(path, TRACE_HEADER)
    meta: Dict[str, str] = {}
    for line_number, text in comments:
        meta.update(_parse_meta(text, line_number))

    try:
        tau = float(meta.get("tau", 1.0))
        level = DensityLevel(meta.get("density_level", DensityLevel.LOW.value))
        n_ticks = int(meta["ticks"]) if "ticks" in meta else None
    except ValueError as exc:
        raise TraceParseError(f"bad metadata: {exc}", 1) from exc

    grouped: Dict[float, List[VehicleState]] = {}
    for line_number, *fields in frame.itertuples(index=False, name=None):
        try:
            t = float(fields[0])
            state = VehicleState(
                id=int(fields[1]),
                x=float(fields[2]),
                y=float(fields[3]),
                vx=float(fields[4]),
                vy=float(fields[5]),
                antenna_height=float(fields[6]),
                vclass=VehicleClass(fields[7]),
            )
        except ValueError as exc:
            raise TraceParseError(str(exc).splitlines()[0], line_number) from exc
        grouped.setdefault(t, []).append(state)

    if n_ticks is None:
        ticks = [Tick(time=t, vehicles=grouped[t]) for t in sorted(grouped)]
    else:
        by_index = {int(round(t / tau)): t for t in grouped}
        ticks = []
        for k in range(n_ticks):
            t = by_index.get(k, k * tau)
            ticks.append(Tick(time=t, vehicles=grouped.get(t, [])))
    return TraceLog(tau=tau, density_level=level, ticks=ticks)


def export_map(world_map: WorldMap, path: PathLike) -> None:
    """Write the map as ``extent``, ``road``, ``building`` and ``bs`` stanzas."""
    with open(path, "w") as handle:
        handle.write(f"extent {world_map.width!r} {world_map.height!r}\n")
        for r in world_map.roads:
            handle.write(f"road {r.x0!r} {r.y0!r} {r.x1!r} {r.y1!r} {r.lanes} {r.width!r}\n")
        for b in world_map.buildings:
            handle.write(f"building {b.x_min!r} {b.y_min!r} {b.x_max!r} {b.y_max!r}\n")
        for bs in world_map.bs_sites:
            handle.write(f"bs {bs.x!r} {bs.y!r} {bs.height!r} {bs.tx_power!r}\n")


_MAP_ARITY = {"extent": 2, "road": 6, "building": 4, "bs": 4}


def import_map(path: PathLike) -> WorldMap:
    """
    Read a map file written by export_map.

    Raises:
        TraceParseError: On an unknown stanza or a wrong field count
    """
    extent: Optional[Tuple[float, float]] = None
    roads, buildings, bs_sites = [], [], []
    with open(path) as handle:
        for line_number, line in enumerate(handle, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            kind, values = parts[0], parts[1:]
            if kind not in _MAP_ARITY:
                raise TraceParseError(f"unknown stanza {kind!r}", line_number)
            if len(values) != _MAP_ARITY[kind]:
                raise TraceParseError(
                    f"{kind} needs {_MAP_ARITY[kind]} fields, got {len(values)}", line_number
                )
            try:
                if kind == "extent":
                    extent = (float(values[0]), float(values[1]))
                elif kind == "road":
                    x0, y0, x1, y1 = (float(v) for v in values[:4])
                    roads.append(Road(x0=x0, y0=y0, x1=x1, y1=y1,
                                      lanes=int(values[4]), width=float(values[5])))
                elif kind == "building":
                    x_min, y_min, x_max, y_max = (float(v) for v in values)
                    buildings.append(Building(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max))
                else:
                    x, y, h, p = (float(v) for v in values)
                    bs_sites.append(BSSite(x=x, y=y, height=h, tx_power=p))
            except ValueError as exc:
                raise TraceParseError(str(exc).splitlines()[0], line_number) from exc
    if extent is None:
        raise TraceParseError("missing extent stanza", 1)
    return WorldMap(width=extent[0], height=extent[1], roads=roads,
                    buildings=buildings, bs_sites=bs_sites)
