# services/predictor.py
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.exceptions import InvalidArgumentError, ModelFormatError
from app.data.vehicle_catalog import DensityLevel, one_hot
from app.schemas.channel import LinkRecord, LinkType
from app.schemas.predictor import FeatureVector, StrengthDistribution, TrainHyper, V2I_ARITY, V2V_ARITY
from app.schemas.scenario import VehicleState, WorldMap
from app.services import capnet

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

# Target spread (dB) at or below which a training set counts as degenerate.
_DEGENERATE_STD = 1e-9


# =====================================================================
# A. MOBILITY PREDICTION
# =====================================================================

def snap_to_road(position: Tuple[float, float], world_map: WorldMap) -> Tuple[float, float]:
    """Nearest point of any road strip; points already on a road are unchanged."""
    best, best_dist = position, math.inf
    for road in world_map.roads:
        x_min, y_min, x_max, y_max = road.bounds()
        px = min(max(position[0], x_min), x_max)
        py = min(max(position[1], y_min), y_max)
        dist = math.hypot(px - position[0], py - position[1])
        if dist < best_dist:
            best, best_dist = (px, py), dist
    return best


def predict_mobility(
    history: Sequence[VehicleState],
    horizon: float,
    tau: float = settings.TAU,
    world_map: Optional[WorldMap] = None,
    min_length: int = settings.HISTORY_TICKS + 1,
) -> VehicleState:
    """
    Constant-acceleration extrapolation of one vehicle.

    Args:
        history: States of one vehicle, oldest first, spaced by tau
        horizon: Prediction horizon in seconds
        tau: Spacing of the history
        world_map: When given, the predicted position is snapped onto the road network
        min_length: Fewest states accepted, by default the T history ticks plus
            the current one

    Returns:
        Predicted state with extrapolated position and velocity

    Raises:
        InvalidArgumentError: If the history is shorter than min_length
    """
    if len(history) < max(min_length, 2):
        raise InvalidArgumentError(
            f"mobility prediction needs at least {max(min_length, 2)} states, got {len(history)}"
        )
    if tau <= 0:
        raise InvalidArgumentError("tau must be positive")
    last, prev = history[-1], history[-2]
    ax = (last.vx - prev.vx) / tau
    ay = (last.vy - prev.vy) / tau
    x = last.x + last.vx * horizon + 0.5 * ax * horizon ** 2
    y = last.y + last.vy * horizon + 0.5 * ay * horizon ** 2
    if world_map is not None:
        x, y = snap_to_road((x, y), world_map)
    return last.model_copy(update={
        "x": x,
        "y": y,
        "vx": last.vx + ax * horizon,
        "vy": last.vy + ay * horizon,
    })


# =====================================================================
# B. FEATURES
# =====================================================================

def encode_v2i(v: VehicleState, level: DensityLevel) -> FeatureVector:
    return FeatureVector(
        link_type=LinkType.V2I,
        explicit=[v.x, v.y, v.antenna_height, v.speed],
        context=one_hot(level),
    )


def encode_v2v(tx: VehicleState, rx: VehicleState, level: DensityLevel) -> FeatureVector:
    return FeatureVector(
        link_type=LinkType.V2V,
        explicit=[tx.x, tx.y, tx.antenna_height, rx.x, rx.y, rx.antenna_height,
                  abs(tx.speed - rx.speed)],
        context=one_hot(level),
    )


def features_of(record: LinkRecord) -> FeatureVector:
    if record.link_type == LinkType.V2I:
        return encode_v2i(record.tx, record.density_level)
    return encode_v2v(record.tx, record.rx, record.density_level)


def _arrays(records: Sequence[LinkRecord]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    feats = [features_of(r) for r in records]
    x = np.array([f.explicit for f in feats], dtype=float)
    c = np.array([f.context for f in feats], dtype=float)
    y = np.array([r.rss for r in records], dtype=float)
    return x, c, y


def split_records(records: Sequence[LinkRecord], seed: int) -> Tuple[List[LinkRecord], ...]:
    """Seeded 6:2:2 train/validation/test split."""
    order = np.random.default_rng(seed).permutation(len(records))
    n_train = int(0.6 * len(records))
    n_val = int(0.2 * len(records))
    pick = lambda idx: [records[i] for i in idx]
    return (
        pick(order[:n_train]),
        pick(order[n_train:n_train + n_val]),
        pick(order[n_train + n_val:]),
    )


# =====================================================================
# C. CAPNET MODEL
# =====================================================================

@dataclass
class PredictorModel:
    """Trained weights plus the normalization statistics they expect."""
    link_type: LinkType
    params: capnet.Params
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    fixed_variance: Optional[float] = None
    degenerate: bool = False
    best_epoch: int = 0
    history: List[capnet.EpochRecord] = field(default_factory=list)

    @property
    def arity(self) -> int:
        return V2I_ARITY if self.link_type == LinkType.V2I else V2V_ARITY

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.x_mean) / self.x_std

    def predict(self, x: np.ndarray, c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Mean (dBm) and variance (dB^2) for raw explicit features."""
        mean, var = capnet.predict(self.params, self.standardize(x), c)
        if self.fixed_variance is not None:
            var = np.full_like(mean, self.fixed_variance)
        return self.y_mean + self.y_std * mean, self.y_std ** 2 * var


def _stats(values: np.ndarray, axis=None):
    mean = values.mean(axis=axis)
    std = values.std(axis=axis)
    return mean, np.where(std > _DEGENERATE_STD, std, 1.0)


def _mse_loss(params, x, c, y) -> float:
    mean = capnet.forward(params, x, c).mean
    return float(0.5 * ((mean - y) ** 2).mean())


def _prepare(records: Sequence[LinkRecord], link_type: LinkType):
    if not records:
        raise InvalidArgumentError("link database is empty")
    chosen = [r for r in records if r.link_type == link_type]
    if not chosen:
        raise InvalidArgumentError(f"no {link_type.value} records to train on")
    return chosen


def _train(records: Sequence[LinkRecord], hyper: TrainHyper, link_type: LinkType,
           fixed_variance: bool) -> PredictorModel:
    chosen = _prepare(records, link_type)
    train, val, _ = split_records(chosen, hyper.seed)
    if not train:
        train = chosen
    x_tr, c_tr, y_tr = _arrays(train)
    x_va, c_va, y_va = _arrays(val) if val else (x_tr[:0], c_tr[:0], y_tr[:0])

    x_mean, x_std = _stats(x_tr, axis=0)
    y_mean = float(y_tr.mean())
    raw_std = float(y_tr.std())
    degenerate = len(np.unique(y_tr)) < 2 or raw_std <= _DEGENERATE_STD
    y_std = raw_std if not degenerate else 1.0
    if degenerate:
        logger.warning(
            f"{link_type.value} training targets are constant; variance will collapse to the floor"
        )

    scale_x = lambda x: (x - x_mean) / x_std
    scale_y = lambda y: (y - y_mean) / y_std
    rng = np.random.default_rng(hyper.seed)
    result = capnet.fit(
        scale_x(x_tr), c_tr, scale_y(y_tr),
        scale_x(x_va), c_va, scale_y(y_va),
        learning_rate=hyper.learning_rate, epochs=hyper.epochs,
        batch_size=hyper.batch_size, grad_clip=hyper.grad_clip, rng=rng,
        fixed_variance=fixed_variance,
        loss_fn=_mse_loss if fixed_variance else None,
    )

    residual_var = None
    if fixed_variance:
        fitted = capnet.forward(result.params, scale_x(x_tr), c_tr).mean
        residual_var = max(float(((fitted - scale_y(y_tr)) ** 2).mean()), capnet.VAR_FLOOR)

    model = PredictorModel(
        link_type=link_type,
        params=result.params,
        x_mean=x_mean,
        x_std=x_std,
        y_mean=y_mean,
        y_std=y_std,
        fixed_variance=residual_var,
        degenerate=degenerate,
        best_epoch=result.best_epoch,
        history=result.history,
    )
    first, last = result.history[0], result.history[-1]
    logger.info(
        f"Trained {'fixed-variance' if fixed_variance else 'CAPNet'} {link_type.value} model on "
        f"{len(train)} records: loss {first.train_nll:.3f} -> {last.train_nll:.3f}, "
        f"best epoch {result.best_epoch}"
    )
    return model


def train_capnet(records: Sequence[LinkRecord], hyper: TrainHyper = TrainHyper(),
                 link_type: LinkType = LinkType.V2I) -> PredictorModel:
    """
    Train the two-flow strength model for one link type.

    Returns the epoch-best model by validation NLL. A database whose targets
    are all equal still trains, with ``degenerate`` set.

    Raises:
        InvalidArgumentError: If no record of the requested link type exists
    """
    return _train(records, hyper, link_type, fixed_variance=False)


def fit_fixed_variance(records: Sequence[LinkRecord], hyper: TrainHyper = TrainHyper(),
                       link_type: LinkType = LinkType.V2I) -> PredictorModel:
    """Same-capacity mean flow trained on squared error, variance = residual variance."""
    return _train(records, hyper, link_type, fixed_variance=True)


def evaluate_nll(model: PredictorModel, records: Sequence[LinkRecord]) -> float:
    """Mean Gaussian NLL in dB units over the records of the model's link type."""
    chosen = [r for r in records if r.link_type == model.link_type]
    if not chosen:
        raise InvalidArgumentError("no records to evaluate")
    x, c, y = _arrays(chosen)
    mean, var = model.predict(x, c)
    return float(capnet.gaussian_nll(mean, var, y).mean())


def infer_strength(model: PredictorModel, f: FeatureVector) -> StrengthDistribution:
    """
    Predicted RSS distribution of one link.

    Raises:
        InvalidArgumentError: If f does not match the model's link type
    """
    if f.link_type != model.link_type or len(f.explicit) != model.arity:
        raise InvalidArgumentError(
            f"model expects {model.link_type.value} features of arity {model.arity}"
        )
    mu, var = infer_batch(model, np.array([f.explicit]), np.array([f.context]))
    return StrengthDistribution(mu=float(mu[0]), var=float(var[0]))


def infer_batch(model: PredictorModel, x: np.ndarray, c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized inference over rows of explicit features and one-hots."""
    x = np.asarray(x, dtype=float).reshape(-1, model.arity)
    c = np.asarray(c, dtype=float).reshape(-1, 3)
    if len(x) == 0:
        return np.zeros(0), np.zeros(0)
    mean, var = model.predict(x, c)
    return mean, np.maximum(var, capnet.VAR_FLOOR)


def check_gradients(model: PredictorModel, records: Sequence[LinkRecord], eps: float = 1e-6,
                    n_entries: int = 50) -> float:
    """Backprop versus finite differences on a few standardized records."""
    chosen = [r for r in records if r.link_type == model.link_type][:16]
    if not chosen:
        raise InvalidArgumentError("no records for the gradient check")
    x, c, y = _arrays(chosen)
    params = {k: v.copy() for k, v in model.params.items()}
    return capnet.numeric_gradient_check(
        params, model.standardize(x), c, (y - model.y_mean) / model.y_std, eps=eps,
        n_entries=n_entries,
    )


# =====================================================================
# D. KNN BASELINE
# =====================================================================

class KNNPredictor:
    """Mean RSS of the k nearest records over standardized explicit features."""

    def __init__(self, records: Sequence[LinkRecord], k: int = settings.KNN_K):
        if not records:
            raise InvalidArgumentError("link database is empty")
        if not 1 <= k <= len(records):
            raise InvalidArgumentError(f"k must lie in [1, {len(records)}]")
        self.link_type = records[0].link_type
        x, _, y = _arrays(records)
        self.mean, self.std = _stats(x, axis=0)
        self.points = (x - self.mean) / self.std
        self.targets = y
        self.k = k

    def predict(self, x: np.ndarray) -> np.ndarray:
        query = (np.asarray(x, dtype=float).reshape(-1, self.points.shape[1]) - self.mean) / self.std
        dist = ((query[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(dist, axis=1, kind="stable")[:, : self.k]
        return self.targets[nearest].mean(axis=1)


def knn_predict(records: Sequence[LinkRecord], f: FeatureVector, k: int = settings.KNN_K) -> float:
    """
    KNN point estimate for one link.

    Raises:
        InvalidArgumentError: On an empty database or k outside [1, len(records)]
    """
    same_type = [r for r in records if r.link_type == f.link_type] if records else []
    if not same_type:
        raise InvalidArgumentError("link database is empty")
    return float(KNNPredictor(same_type, k).predict(np.array([f.explicit]))[0])


# =====================================================================
# E. MODEL FILES
# =====================================================================

PathLike = Union[str, Path]


def save_model(model: PredictorModel, path: PathLike) -> None:
    """
    Write a model as a numpy ``.npz`` archive.

    Layout: ``format_version``, ``link_type``, every weight array by name,
    ``x_mean``, ``x_std``, ``y_stats`` = [mean, std], ``fixed_variance``
    (NaN when absent), ``degenerate``, ``best_epoch``.
    """
    arrays = {name: model.params[name] for name in capnet.PARAM_NAMES}
    np.savez(
        path,
        format_version=np.array(MODEL_FORMAT_VERSION),
        link_type=np.array(model.link_type.value),
        x_mean=model.x_mean,
        x_std=model.x_std,
        y_stats=np.array([model.y_mean, model.y_std]),
        fixed_variance=np.array(np.nan if model.fixed_variance is None else model.fixed_variance),
        degenerate=np.array(model.degenerate),
        best_epoch=np.array(model.best_epoch),
        **arrays,
    )


def load_model(path: PathLike) -> PredictorModel:
    """
    Read a model written by save_model.

    Raises:
        ModelFormatError: On a missing key or an unsupported version
    """
    try:
        with np.load(path, allow_pickle=False) as data:
            version = int(data["format_version"])
            if version != MODEL_FORMAT_VERSION:
                raise ModelFormatError(f"unsupported model format version {version}")
            fixed = float(data["fixed_variance"])
            return PredictorModel(
                link_type=LinkType(str(data["link_type"])),
                params={name: data[name].copy() for name in capnet.PARAM_NAMES},
                x_mean=data["x_mean"].copy(),
                x_std=data["x_std"].copy(),
                y_mean=float(data["y_stats"][0]),
                y_std=float(data["y_stats"][1]),
                fixed_variance=None if math.isnan(fixed) else fixed,
                degenerate=bool(data["degenerate"]),
                best_epoch=int(data["best_epoch"]),
            )
    except KeyError as exc:
        raise ModelFormatError(f"model file is missing {exc}") from exc
    except (OSError, ValueError) as exc:
        raise ModelFormatError(f"cannot read model file: {exc}") from exc
