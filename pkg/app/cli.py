# app/cli.py
import functools
from pathlib import Path
from typing import List, Optional

import click
from sqlalchemy.orm import Session, sessionmaker

import app.models  # noqa: F401  registers every table on Base.metadata
from app.core.config import Base, load_settings, make_engine
from app.core.exceptions import RopeError
from app.core.logging_config import configure_logging
from app.crud.experiment_result import crud_experiment_result
from app.crud.link_record import crud_link_record
from app.schemas.channel import ChannelParams, LinkType
from app.schemas.harness import ALL_METHODS, CycleConfig, Method
from app.schemas.predictor import TrainHyper
from app.services import channel as channel_service
from app.services import harness as harness_service
from app.services import predictor as predictor_service
from app.services import scenario as scenario_service
from app.services.verification import write_verification_log

_PATH = click.Path(dir_okay=False, path_type=Path)
_EXISTING = click.Path(exists=True, dir_okay=False, path_type=Path)


def _engine_errors(func):
    """Report engine errors as a click failure with a non-zero exit."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except RopeError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _session(database_url: str) -> Session:
    bind = make_engine(database_url)
    Base.metadata.create_all(bind=bind)
    return sessionmaker(autocommit=False, autoflush=False, bind=bind)()


# =====================================================================
# GROUP
# =====================================================================

@click.group()
@click.option("--seed", type=int, default=None, help="Seed of every random draw.")
@click.option("--config", "config_path", type=_EXISTING, default=None,
              help="Key-value config file (dotenv syntax).")
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR.")
@click.pass_context
def cli(ctx: click.Context, seed: Optional[int], config_path: Optional[Path], log_level: Optional[str]):
    """Predictive V2X routing: scenario generation, training and evaluation."""
    overrides = {}
    if seed is not None:
        overrides["SEED"] = seed
    if log_level is not None:
        overrides["LOG_LEVEL"] = log_level
    cfg = load_settings(config_path, **overrides)
    configure_logging(cfg.LOG_LEVEL)
    ctx.obj = cfg


# =====================================================================
# SCENARIO
# =====================================================================

@cli.command("gen-map")
@click.option("--out", type=_PATH, required=True)
@click.pass_obj
@_engine_errors
def gen_map(cfg, out: Path):
    """Generate the grid city from the configured block and BS knobs."""
    world_map = scenario_service.generate_map(
        cfg.BLOCKS_X, cfg.BLOCKS_Y, cfg.BLOCK_SIZE, cfg.ROAD_WIDTH, cfg.BS_COUNT, cfg.SEED,
        bs_height=cfg.BS_HEIGHT, bs_tx_power=cfg.BS_TX_POWER,
    )
    scenario_service.export_map(world_map, out)
    click.echo(f"map {world_map.width:g} x {world_map.height:g} m, "
               f"{len(world_map.bs_sites)} BS -> {out}")


@cli.command("gen-traces")
@click.option("--map", "map_path", type=_EXISTING, required=True)
@click.option("--density", type=float, required=True, help="Vehicles entering per hour per km.")
@click.option("--duration", type=float, default=None, help="Recorded seconds.")
@click.option("--out", type=_PATH, required=True)
@click.pass_obj
@_engine_errors
def gen_traces(cfg, map_path: Path, density: float, duration: Optional[float], out: Path):
    world_map = scenario_service.import_map(map_path)
    log = scenario_service.generate_traces(
        world_map, density, duration or cfg.DURATION, cfg.TAU, cfg.SEED,
        speed_limit=cfg.SPEED_LIMIT, min_gap=cfg.MIN_HEADWAY,
        max_accel=cfg.MAX_ACCEL, truck_share=cfg.TRUCK_SHARE,
    )
    scenario_service.export_traces(log, out)
    realized = scenario_service.realized_density(log, world_map)
    click.echo(f"{len(log.ticks)} ticks ({log.density_level.value}, "
               f"realized {realized:.0f} veh/h/km) -> {out}")


@cli.command("build-db")
@click.option("--map", "map_path", type=_EXISTING, required=True)
@click.option("--traces", "trace_paths", type=_EXISTING, required=True, multiple=True)
@click.option("--out", type=_PATH, required=True)
@click.option("--store-sql", is_flag=True, help="Also write the records to DATABASE_URL.")
@click.pass_obj
@_engine_errors
def build_db(cfg, map_path: Path, trace_paths: List[Path], out: Path, store_sql: bool):
    """Build the historical link database from one or more trace files."""
    world_map = scenario_service.import_map(map_path)
    params = ChannelParams.from_settings(cfg)
    records = []
    for i, trace_path in enumerate(trace_paths):
        log = scenario_service.import_traces(trace_path)
        records.extend(channel_service.build_link_database(
            log, world_map, params, cfg.SEED + i, cfg.V2V_RECORDS_PER_TICK,
            cfg.D_I, cfg.D_V, cfg.VUE_TX_POWER,
        ))
    channel_service.export_link_database(records, out)
    if store_sql:
        db = _session(cfg.DATABASE_URL)
        try:
            crud_link_record.create_many(db, records=records)
        finally:
            db.close()
    click.echo(f"{len(records)} link records -> {out}")


# =====================================================================
# PREDICTOR
# =====================================================================

@cli.command("train")
@click.option("--db", "db_path", type=_EXISTING, required=True)
@click.option("--link-type", type=click.Choice([t.value for t in LinkType]), default="V2I")
@click.option("--out", type=_PATH, required=True)
@click.pass_obj
@_engine_errors
def train(cfg, db_path: Path, link_type: str, out: Path):
    """Train the strength model of one link type and report held-out NLL."""
    records = channel_service.import_link_database(db_path)
    hyper = TrainHyper.from_settings(cfg)
    kind = LinkType(link_type)
    model = predictor_service.train_capnet(records, hyper, kind)
    predictor_service.save_model(model, out)

    chosen = [r for r in records if r.link_type == kind]
    _, _, test = predictor_service.split_records(chosen, hyper.seed)
    if test:
        fixed = predictor_service.fit_fixed_variance(records, hyper, kind)
        click.echo(f"held-out NLL: learned variance {predictor_service.evaluate_nll(model, test):.3f}, "
                   f"fixed variance {predictor_service.evaluate_nll(fixed, test):.3f}")
    click.echo(f"{kind.value} model (best epoch {model.best_epoch}) -> {out}")


@cli.command("eval")
@click.option("--db", "db_path", type=_EXISTING, required=True)
@click.option("--model", "model_path", type=_EXISTING, required=True, help="V2I model file.")
@click.option("--out", type=_PATH, default=None, help="Optional CSV of the table.")
@click.pass_obj
@_engine_errors
def evaluate_predictor(cfg, db_path: Path, model_path: Path, out: Optional[Path]):
    """Successful warning ratio of CAPNet against KNN over the gamma_th grid."""
    records = channel_service.import_link_database(db_path)
    model = predictor_service.load_model(model_path)
    chosen = [r for r in records if r.link_type == LinkType.V2I]
    train_set, _, test = predictor_service.split_records(chosen, cfg.SEED)
    knn = predictor_service.KNNPredictor(train_set or chosen, min(cfg.KNN_K, len(train_set or chosen)))
    table = harness_service.warning_ratio_table(model, knn, test or chosen, cfg.GAMMA_GRID)
    if out is not None:
        table.to_csv(out, index=False)
    click.echo(table.to_string(index=False))


# =====================================================================
# CYCLE AND EXPERIMENTS
# =====================================================================

def _load_models(v2i_path: Path, v2v_path: Optional[Path]) -> harness_service.PredictorBundle:
    v2v = predictor_service.load_model(v2v_path) if v2v_path else None
    return harness_service.PredictorBundle(v2i=predictor_service.load_model(v2i_path), v2v=v2v)


@cli.command("run")
@click.option("--map", "map_path", type=_EXISTING, required=True)
@click.option("--traces", "trace_path", type=_EXISTING, required=True)
@click.option("--v2i-model", type=_EXISTING, required=True)
@click.option("--v2v-model", type=_EXISTING, default=None)
@click.option("--gamma-th", type=float, default=None)
@click.option("--method", "methods", type=click.Choice([m.value for m in Method]), multiple=True)
@click.option("--out", type=_PATH, required=True, help="Per-decision rows CSV.")
@click.option("--verification-log", type=_PATH, default=None)
@click.pass_obj
@_engine_errors
def run(cfg, map_path: Path, trace_path: Path, v2i_model: Path, v2v_model: Optional[Path],
        gamma_th: Optional[float], methods, out: Path, verification_log: Optional[Path]):
    """Run the predictive cycle over one trace and summarize every method."""
    world_map = scenario_service.import_map(map_path)
    log = scenario_service.import_traces(trace_path)
    chosen = [Method(m) for m in methods] or ALL_METHODS
    config = CycleConfig.from_settings(
        cfg, density_level=log.density_level, gamma_th=gamma_th,
    ).model_copy(update={"methods": chosen})
    cycle = harness_service.run_simulation(
        log, world_map, _load_models(v2i_model, v2v_model), config,
        ChannelParams.from_settings(cfg), cfg.VUE_TX_POWER,
    )
    frame = harness_service.rows_frame(cycle.rows)
    frame["path"] = frame["path"].map(lambda p: " ".join(str(n) for n in p) if p else "")
    frame.to_csv(out, index=False)
    if verification_log is not None:
        write_verification_log(cycle.verification_rows, verification_log)

    report = harness_service.evaluate([cycle], chosen)
    for method in chosen:
        s = report.summaries[method]
        click.echo(f"{method.value:6s} activated={s.activated} gaps={s.gaps} "
                   f"P_S={_fmt(s.P_S)} P_C={_fmt(s.P_C)} P_H={_fmt(s.P_H)} P_Q={_fmt(s.P_Q)} "
                   f"warn={_fmt(s.warn_ratio)}")


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.3f}"


@cli.command("sweep")
@click.option("--map", "map_path", type=_EXISTING, required=True)
@click.option("--out", type=_PATH, required=True, help="Results CSV.")
@click.option("--cdf-out", type=_PATH, default=None, help="Path-strength CDF CSV.")
@click.option("--store-sql", is_flag=True, help="Also store every cell in DATABASE_URL.")
@click.pass_obj
@_engine_errors
def sweep(cfg, map_path: Path, out: Path, cdf_out: Optional[Path], store_sql: bool):
    """Full factorial sweep over densities, gamma_th, methods and replications."""
    world_map = scenario_service.import_map(map_path)
    results, cdf = harness_service.run_experiment(world_map, cfg)
    harness_service.write_results(results, out)
    if cdf_out is not None:
        cdf.to_csv(cdf_out, index=False)
    if store_sql:
        db = _session(cfg.DATABASE_URL)
        try:
            crud_experiment_result.create_many(db, results=results)
        finally:
            db.close()
    click.echo(f"{len(results)} cells -> {out}")


if __name__ == "__main__":
    cli()
