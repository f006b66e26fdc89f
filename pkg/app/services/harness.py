# services/harness.py
import logging
import math
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.core.config import Settings
from app.core.exceptions import InvalidArgumentError
from app.data.vehicle_catalog import density_level_for
from app.schemas.channel import ChannelParams, LinkRecord, LinkType
from app.schemas.harness import (
    ALL_METHODS,
    CycleConfig,
    CycleLog,
    CycleRow,
    EvalReport,
    Method,
    MethodSummary,
    WarningRow,
)
from app.schemas.metrics import PathMetrics
from app.schemas.predictor import StrengthDistribution, TrainHyper
from app.schemas.routing import BS_NODE, PathRank, RankedPath, RoutingParams
from app.schemas.scenario import TraceLog, VehicleState, WorldMap
from app.schemas.topology import VirtualTopology
from app.schemas.verification import ActivationDecision, ActivationKind
from app.schemas.warning import V2IInference
from app.services import channel as channel_service
from app.services import routing as routing_service
from app.services.metrics import link_connectivity, link_duration, relative_kinematics
from app.services.predictor import (
    KNNPredictor,
    PredictorModel,
    encode_v2i,
    infer_batch,
    predict_mobility,
    train_capnet,
)
from app.services.scenario import associate_bs, generate_traces, state_at
from app.services.verification import (
    LinkMeasurement,
    mend_paths,
    path_check,
    select_final,
    verification_rows,
)
from app.services.warning import build_virtual_topology, check_warning

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["method", "density", "gamma_th", "rep", "P_S", "P_C", "P_H", "P_Q",
                  "warn_ratio", "gaps"]

PathLike = Union[str, Path]


@dataclass
class PredictorBundle:
    """Trained strength models used by the cycle."""
    v2i: PredictorModel
    v2v: Optional[PredictorModel] = None


# =====================================================================
# A. GROUND-TRUTH WORLD OVER A TRACE
# =====================================================================

class TraceWorld:
    """
    True radio state of a trace log at any instant inside it.

    A vehicle's V2I link goes to the strongest BS within d_I at the queried
    instant. Channel draws come from per-link seed streams, so repeated queries
    agree.
    """

    def __init__(
        self,
        log: TraceLog,
        world_map: WorldMap,
        channel_params: ChannelParams = ChannelParams(),
        seed: int = 0,
        d_I: float = 400.0,
        d_V: float = 300.0,
        vue_tx_power: float = 23.0,
    ):
        self.log = log
        self.world_map = world_map
        self.model = channel_service.ChannelModel(world_map, channel_params)
        self.seed = seed
        self.d_I = d_I
        self.d_V = d_V
        self.vue_tx_power = vue_tx_power
        self._states: Dict[float, Tuple[Dict[int, VehicleState], channel_service.VehicleOutlines]] = {}
        self._v2i: Dict[Tuple[int, float], List[float]] = {}

    def states(self, time: float) -> Dict[int, VehicleState]:
        return self._snapshot(time)[0]

    def _snapshot(self, time: float):
        if time not in self._states:
            states = state_at(self.log, time)
            self._states[time] = (states, channel_service.VehicleOutlines(list(states.values())))
        return self._states[time]

    def _v2i_all(self, vid: int, time: float) -> Optional[List[float]]:
        key = (vid, time)
        if key not in self._v2i:
            states, outlines = self._snapshot(time)
            if vid not in states:
                return None
            self._v2i[key] = channel_service.v2i_rss_all(self.model, states[vid], outlines,
                                                         self.seed, time)
        return self._v2i[key]

    def serving_bs(self, vid: int, time: float) -> Optional[int]:
        rss = self._v2i_all(vid, time)
        if rss is None or not rss:
            return None
        return associate_bs(self.states(time)[vid], self.world_map, rss, self.d_I)

    def v2i_rss(self, vid: int, bs_index: int, time: float) -> Optional[float]:
        rss = self._v2i_all(vid, time)
        return None if rss is None else rss[bs_index]

    def measure(self, u: int, v: int, time: float) -> Optional[LinkMeasurement]:
        states, outlines = self._snapshot(time)
        if BS_NODE in (u, v):
            vid = v if u == BS_NODE else u
            if vid not in states or not self.world_map.bs_sites:
                return None
            k = self.serving_bs(vid, time)
            if k is None:
                return LinkMeasurement(rss=max(self._v2i_all(vid, time)), duration=None)
            state, bs = states[vid], self.world_map.bs_sites[k]
            kin = relative_kinematics(state.position, state.velocity, bs.position, (0.0, 0.0), self.d_I)
            return LinkMeasurement(rss=self.v2i_rss(vid, k, time), duration=link_duration(kin))
        if u not in states or v not in states:
            return None
        a, b = states[u], states[v]
        rss = self.model.v2v_rss(a, b, self.vue_tx_power, outlines,
                                 channel_service.link_rng(self.seed, time, a.id, b.id))
        if math.dist(a.position, b.position) > self.d_V:
            return LinkMeasurement(rss=rss, duration=None)
        kin = relative_kinematics(a.position, a.velocity, b.position, b.velocity, self.d_V)
        return LinkMeasurement(rss=rss, duration=link_duration(kin))


# =====================================================================
# B. PATH MEASUREMENT
# =====================================================================

@dataclass(frozen=True)
class PathSample:
    strength: float
    connectivity: float
    hops: int
    qualified: bool


def measure_path(world: TraceWorld, nodes: Sequence[int], time: float, window: float,
                 params: RoutingParams, noise_floor: float) -> PathSample:
    """
    Ground-truth bottleneck strength (dBm) and connectivity of a path at time.

    Connectivity is normalized by the remaining activation window. A missing
    link counts as noise floor with zero connectivity.
    """
    strengths, connectivities = [], []
    for u, v in zip(nodes[:-1], nodes[1:]):
        m = world.measure(u, v, time)
        if m is None or m.duration is None:
            strengths.append(noise_floor if m is None else m.rss)
            connectivities.append(0.0)
            continue
        strengths.append(m.rss)
        connectivities.append(link_connectivity(m.duration, window))
    hops = len(nodes) - 1
    strength, connectivity = min(strengths), min(connectivities)
    qualified = strength > params.gamma_th and connectivity > params.C_th and hops < params.H_th
    return PathSample(strength, connectivity, hops, qualified)


def _direct_path(world: TraceWorld, vue: int, time: float, params: RoutingParams,
                 tau: float) -> Optional[RankedPath]:
    """
    Direct V2I path when the VUE is truly in coverage at time.

    Its normalized strength is clamped to [0, 1] since the true link may sit
    below gamma_th.
    """
    if world.serving_bs(vue, time) is None:
        return None
    m = world.measure(vue, BS_NODE, time)
    strength = (min(m.rss, params.gamma_M) - params.gamma_th) / (params.gamma_M - params.gamma_th)
    strength = max(strength, 0.0)
    return RankedPath(
        nodes=(vue, BS_NODE),
        metrics=PathMetrics(p_S=strength, p_C=link_connectivity(m.duration, tau), p_H=1),
        rank=PathRank.DIRECT,
    )


# =====================================================================
# C. ONE CYCLE
# =====================================================================

def _route(method: Method, vue: int, topology: VirtualTopology, world: TraceWorld,
           activation: float, config: CycleConfig) -> Tuple[ActivationDecision, List[dict]]:
    params = config.routing
    direct = _direct_path(world, vue, activation, params, config.tau)
    if method == Method.D_V2I:
        # direct V2I communication stays on its own link whatever the prediction says
        return _keep_direct(direct), []

    if method == Method.ROPE:
        paths = routing_service.tora_top3(topology, vue, params)
        result = path_check(paths, world, activation, config.deltas, config.tau, params,
                            config.noise_floor)
        mended = None
        if result.selected is None and len(result.checked) >= 2:
            mended = mend_paths(result.checked, params)
        rows = verification_rows(activation, vue, result)
        return select_final(result, mended, direct), rows

    if method == Method.ROPE_MINUS:
        paths = routing_service.tora_top3(topology, vue, params)
        path = paths[0] if paths else None
    else:
        path = routing_service.baseline_car(topology, vue, params)
    if path is not None:
        return ActivationDecision(kind=ActivationKind.UNVERIFIED, path=path), []
    return _keep_direct(direct), []


def _keep_direct(direct: Optional[RankedPath]) -> ActivationDecision:
    if direct is None:
        return ActivationDecision(kind=ActivationKind.NO_PATH)
    return ActivationDecision(kind=ActivationKind.DIRECT, path=direct)


def run_cycle(
    index: int,
    log: TraceLog,
    world_map: WorldMap,
    models: PredictorBundle,
    config: CycleConfig,
    world: Optional[TraceWorld] = None,
) -> CycleLog:
    """
    One predict, warn, route, verify and activate round at tick ``index``.

    Every VUE served at tick time gets one row per method. Warned VUEs are
    routed by the method; the others keep their direct V2I link under every
    method, so each method is scored on the same population.

    Raises nothing for short history: such ticks come back in ``skipped_ticks``.
    """
    tau = config.tau
    T = config.history_ticks
    if index < T or index + 2 >= len(log.ticks):
        logger.warning(f"Skipping tick {index}: insufficient history or horizon")
        return CycleLog(skipped_ticks=[index])
    world = world or TraceWorld(log, world_map, seed=config.seed, d_I=config.d_I, d_V=config.d_V)
    t = log.ticks[index].time
    activation = t + tau

    history = [log.by_id(k) for k in range(index - T, index + 1)]
    predicted: Dict[int, VehicleState] = {}
    for vid in sorted(history[-1]):
        if all(vid in tick for tick in history):
            predicted[vid] = _predict(history, vid, tau, world_map, T)

    serving = {vid: world.serving_bs(vid, t) for vid in predicted}
    vues = [vid for vid in predicted if serving[vid] is not None]
    inferences: List[V2IInference] = []
    if vues:
        feats = [encode_v2i(predicted[vid], config.density_level) for vid in vues]
        mus, variances = infer_batch(
            models.v2i,
            np.array([f.explicit for f in feats]),
            np.array([f.context for f in feats]),
        )
        for vid, mu, var in zip(vues, mus, variances):
            bs = world_map.bs_sites[serving[vid]]
            inferences.append(V2IInference(
                vue_id=vid,
                distribution=StrengthDistribution(mu=float(mu), var=float(var)),
                bs_position=bs.position,
            ))

    warnings: List[WarningRow] = []
    warned: List[int] = []
    for inference in inferences:
        vid = inference.vue_id
        decision = check_warning(inference.distribution, predicted[vid].position,
                                 inference.bs_position, config.routing.gamma_th, config.d_I, vid)
        if decision.triggered:
            warned.append(vid)
        true_rss = world.v2i_rss(vid, serving[vid], activation)
        if true_rss is not None:
            warnings.append(WarningRow(
                tick=index, vue=vid, mu=decision.mu, sigma=decision.sigma,
                warned=decision.triggered, true_rss=true_rss,
                deteriorated=true_rss <= config.routing.gamma_th,
            ))

    rows: List[CycleRow] = []
    for vue in vues:
        if vue in warned:
            continue
        direct = _direct_path(world, vue, activation, config.routing, tau)
        kept = _row(index, activation, vue, config.methods[0], _keep_direct(direct), world,
                    config, warned=False)
        rows.extend(kept.model_copy(update={"method": method}) for method in config.methods)

    if not warned:
        return CycleLog(rows=rows, warnings=warnings)

    topology = build_virtual_topology(
        predicted, inferences, models.v2v, config.routing.gamma_th, config.routing.gamma_M,
        config.d_I, config.d_V, tau, config.density_level, snapshot_time=activation,
    )
    audit: List[dict] = []
    for vue in warned:
        for method in config.methods:
            decision, checks = _route(method, vue, topology, world, activation, config)
            audit.extend(checks)
            rows.append(_row(index, activation, vue, method, decision, world, config))
    return CycleLog(rows=rows, warnings=warnings, verification_rows=audit)


def _predict(history: List[Dict[int, VehicleState]], vid: int, tau: float,
             world_map: WorldMap, T: int) -> VehicleState:
    return predict_mobility([tick[vid] for tick in history], tau, tau, world_map, min_length=T + 1)


def _row(index: int, activation: float, vue: int, method: Method, decision: ActivationDecision,
         world: TraceWorld, config: CycleConfig, warned: bool = True) -> CycleRow:
    if decision.path is None:
        # a service gap scores as an unqualified path at the noise floor
        return CycleRow(tick=index, time=activation, vue=vue, method=method, warned=warned,
                        outcome=decision.kind.value, P_S=config.noise_floor, P_C=0.0,
                        qualified=False)
    nodes = decision.path.nodes
    first = measure_path(world, nodes, activation, config.tau, config.routing, config.noise_floor)
    mid = measure_path(world, nodes, activation + 0.5 * config.tau, 0.5 * config.tau,
                       config.routing, config.noise_floor)
    return CycleRow(
        tick=index,
        time=activation,
        vue=vue,
        method=method,
        warned=warned,
        outcome=decision.kind.value,
        path=list(nodes),
        path_rank=decision.path.rank.value,
        P_S=first.strength,
        P_C=first.connectivity,
        P_H=first.hops,
        qualified=first.qualified and mid.qualified,
    )


def run_simulation(log: TraceLog, world_map: WorldMap, models: PredictorBundle,
                   config: CycleConfig, channel_params: ChannelParams = ChannelParams(),
                   vue_tx_power: float = 23.0) -> CycleLog:
    """Run the cycle on every tick after the warm-up and merge the logs."""
    world = TraceWorld(log, world_map, channel_params, config.seed, config.d_I, config.d_V,
                       vue_tx_power)
    rows, warnings, skipped, audit = [], [], [], []
    last = len(log.ticks) - 3
    for index in range(config.warmup_ticks, last + 1):
        cycle = run_cycle(index, log, world_map, models, config, world)
        rows.extend(cycle.rows)
        warnings.extend(cycle.warnings)
        skipped.extend(cycle.skipped_ticks)
        audit.extend(cycle.verification_rows)
        if index % 50 == 0:
            logger.info(f"Cycle at tick {index}/{last}: {len(rows)} routed decisions so far")
    return CycleLog(rows=rows, warnings=warnings, skipped_ticks=skipped, verification_rows=audit)


# =====================================================================
# D. EVALUATION
# =====================================================================

def successful_warning_ratio(
    predictions: Sequence[StrengthDistribution],
    ground_truth_rss: Sequence[float],
    gamma_th: float,
) -> Optional[float]:
    """
    Percent of truly deteriorated links (rss <= gamma_th) the warning rule flagged.

    Returns:
        Percent, or None when no link deteriorated

    Raises:
        InvalidArgumentError: If the sequences are not aligned
    """
    if len(predictions) != len(ground_truth_rss):
        raise InvalidArgumentError("predictions and ground truth must be aligned")
    deteriorated = [(p, y) for p, y in zip(predictions, ground_truth_rss) if y <= gamma_th]
    if not deteriorated:
        logger.warning("No deteriorated link; warning ratio is not applicable")
        return None
    hits = sum(1 for p, _ in deteriorated if p.mu - p.sigma <= gamma_th)
    return 100.0 * hits / len(deteriorated)


def rows_frame(rows: Sequence[CycleRow]) -> pd.DataFrame:
    columns = list(CycleRow.model_fields)
    if not rows:
        return pd.DataFrame(columns=columns)
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=columns)
    frame["method"] = frame["method"].map(lambda m: Method(m).value)
    return frame


def evaluate(logs: Sequence[CycleLog],
             methods: Sequence[Method] = ALL_METHODS) -> EvalReport:
    """
    Per-method aggregates over every scored VUE in the logs.

    P_S is the mean ground-truth bottleneck strength in dBm and P_Q the percent
    of VUEs whose path meets all constraints at both sample instants. A service
    gap counts at the noise floor and as unqualified. P_H averages activated
    paths only.
    """
    rows = [row for log in logs for row in log.rows]
    deteriorated = [w for log in logs for w in log.warnings if w.deteriorated]
    warn_ratio = None
    if deteriorated:
        warn_ratio = 100.0 * sum(w.warned for w in deteriorated) / len(deteriorated)

    frame = rows_frame(rows)
    summaries: Dict[Method, MethodSummary] = {}
    for method in methods:
        subset = frame[frame["method"] == method.value]
        active = subset[subset["path"].notna()]
        gaps = int((subset["outcome"] == ActivationKind.NO_PATH.value).sum())
        if subset.empty:
            summaries[method] = MethodSummary(method=method, warn_ratio=warn_ratio, gaps=gaps)
            continue
        summaries[method] = MethodSummary(
            method=method,
            P_S=float(subset["P_S"].mean()),
            P_C=float(subset["P_C"].mean()),
            P_H=float(active["P_H"].mean()) if not active.empty else None,
            P_Q=100.0 * float(subset["qualified"].astype(bool).mean()),
            warn_ratio=warn_ratio,
            gaps=gaps,
            activated=len(active),
        )
    return EvalReport(summaries=summaries, rows=rows)


def warning_ratio_table(v2i_model: PredictorModel, knn: KNNPredictor,
                        records: Sequence[LinkRecord], gamma_grid: Sequence[float]) -> pd.DataFrame:
    """Successful warning ratio of CAPNet and KNN on the same V2I records."""
    chosen = [r for r in records if r.link_type == LinkType.V2I]
    if not chosen:
        raise InvalidArgumentError("no V2I records to evaluate")
    feats = [encode_v2i(r.tx, r.density_level) for r in chosen]
    x = np.array([f.explicit for f in feats])
    c = np.array([f.context for f in feats])
    mus, variances = infer_batch(v2i_model, x, c)
    knn_mu = knn.predict(x)
    truth = [r.rss for r in chosen]
    capnet_preds = [StrengthDistribution(mu=float(m), var=float(v)) for m, v in zip(mus, variances)]
    knn_preds = [StrengthDistribution(mu=float(m), var=1e-12) for m in knn_mu]
    rows = []
    for gamma_th in gamma_grid:
        rows.append({
            "gamma_th": gamma_th,
            "capnet": successful_warning_ratio(capnet_preds, truth, gamma_th),
            "knn": successful_warning_ratio(knn_preds, truth, gamma_th),
        })
    return pd.DataFrame(rows)


# =====================================================================
# E. EXPERIMENT SWEEP
# =====================================================================

def train_models(world_map: WorldMap, cfg: Settings, seed: int) -> PredictorBundle:
    """Train V2I and V2V models on a dedicated trace per density level."""
    params = ChannelParams.from_settings(cfg)
    records: List[LinkRecord] = []
    for i, density in enumerate(cfg.DENSITIES):
        log = generate_traces(world_map, density, cfg.DURATION, cfg.TAU, seed + 10_000 + i)
        records.extend(channel_service.build_link_database(
            log, world_map, params, seed + 10_000 + i, cfg.V2V_RECORDS_PER_TICK,
            cfg.D_I, cfg.D_V, cfg.VUE_TX_POWER,
        ))
    hyper = TrainHyper.from_settings(cfg, seed=seed)
    v2v = None
    if any(r.link_type == LinkType.V2V for r in records):
        v2v = train_capnet(records, hyper, LinkType.V2V)
    return PredictorBundle(v2i=train_capnet(records, hyper, LinkType.V2I), v2v=v2v)


def _run_unit(job) -> List[dict]:
    world_map, cfg, models, density, rep, seed, methods = job
    trace_seed = seed + 1000 * rep + int(density)
    log = generate_traces(world_map, density, cfg.DURATION, cfg.TAU, trace_seed)
    level = density_level_for(density)
    results = []
    for gamma_th in cfg.GAMMA_GRID:
        config = CycleConfig.from_settings(cfg, density_level=level, gamma_th=gamma_th,
                                           seed=trace_seed).model_copy(update={"methods": methods})
        cycle = run_simulation(log, world_map, models, config, ChannelParams.from_settings(cfg),
                               cfg.VUE_TX_POWER)
        report = evaluate([cycle], methods)
        for method in methods:
            summary = report.summaries[method]
            results.append({
                "method": method.value, "density": density, "gamma_th": gamma_th, "rep": rep,
                "P_S": summary.P_S, "P_C": summary.P_C, "P_H": summary.P_H, "P_Q": summary.P_Q,
                "warn_ratio": summary.warn_ratio, "gaps": summary.gaps,
                "_rows": [row.model_dump(mode="json") for row in report.rows
                          if row.method == method and row.path is not None],
            })
        logger.info(f"Finished cell density={density:g} gamma_th={gamma_th:g} rep={rep}")
    return results


def run_experiment(
    world_map: WorldMap,
    cfg: Settings,
    models: Optional[PredictorBundle] = None,
    methods: Sequence[Method] = ALL_METHODS,
    seed: Optional[int] = None,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Full factorial sweep over densities, gamma_th values, methods and replications.

    Returns:
        (results, strength_cdf): one results row per cell in RESULT_COLUMNS, and
        the empirical CDF of activated path strength per method, density and gamma_th
    """
    seed = cfg.SEED if seed is None else seed
    models = models or train_models(world_map, cfg, seed)
    jobs = [(world_map, cfg, models, density, rep, seed, list(methods))
            for density in cfg.DENSITIES for rep in range(cfg.REPLICATIONS)]
    if cfg.WORKERS > 1:
        with Pool(processes=cfg.WORKERS) as pool:
            chunks = pool.map(_run_unit, jobs)
    else:
        chunks = [_run_unit(job) for job in jobs]

    cells = [cell for chunk in chunks for cell in chunk]
    results = pd.DataFrame([{k: cell[k] for k in RESULT_COLUMNS} for cell in cells],
                           columns=RESULT_COLUMNS)
    results = results.sort_values(["method", "density", "gamma_th", "rep"]).reset_index(drop=True)
    return results, strength_cdf(cells)


def strength_cdf(cells: Sequence[dict]) -> pd.DataFrame:
    """Empirical CDF of activated path strength (dBm) per method, density and gamma_th."""
    records = [
        {"method": cell["method"], "density": cell["density"], "gamma_th": cell["gamma_th"],
         "P_S": row["P_S"]}
        for cell in cells for row in cell["_rows"] if row["P_S"] is not None
    ]
    columns = ["method", "density", "gamma_th", "P_S", "cdf"]
    if not records:
        return pd.DataFrame(columns=columns)
    frame = pd.DataFrame(records).sort_values(["method", "density", "gamma_th", "P_S"])
    group = frame.groupby(["method", "density", "gamma_th"])["P_S"]
    frame["cdf"] = (group.cumcount() + 1) / group.transform("size")
    return frame[columns].reset_index(drop=True)


def write_results(results: pd.DataFrame, path: PathLike) -> None:
    results.to_csv(path, index=False, columns=RESULT_COLUMNS)
