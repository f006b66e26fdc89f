# services/capnet.py
"""
Two-flow fully connected network with a Gaussian NLL head, in numpy.

The mean flow maps standardized explicit features to mu through two ReLU
layers. The variance flow reads the second hidden layer of the mean flow
concatenated with the density one-hot and outputs a softplus variance.
All gradients are hand-derived.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

HIDDEN = 64
VAR_HIDDEN = 32
CONTEXT = 3
VAR_FLOOR = 1e-6

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "V1", "c1", "V2", "c2")
MEAN_PARAMS = ("W1", "b1", "W2", "b2", "W3", "b3")

Params = Dict[str, np.ndarray]


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def init_params(n_in: int, rng: np.random.Generator) -> Params:
    """He-initialized weights; the variance bias starts at softplus^-1(1)."""

    def he(fan_in, fan_out):
        return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))

    return {
        "W1": he(n_in, HIDDEN), "b1": np.zeros(HIDDEN),
        "W2": he(HIDDEN, HIDDEN), "b2": np.zeros(HIDDEN),
        "W3": he(HIDDEN, 1), "b3": np.zeros(1),
        "V1": he(HIDDEN + CONTEXT, VAR_HIDDEN), "c1": np.zeros(VAR_HIDDEN),
        "V2": he(VAR_HIDDEN, 1), "c2": np.full(1, math.log(math.e - 1.0)),
    }


@dataclass
class ForwardCache:
    x: np.ndarray
    c: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    u: np.ndarray
    g: np.ndarray
    z: np.ndarray
    mean: np.ndarray
    var: np.ndarray


def forward(params: Params, x: np.ndarray, c: np.ndarray) -> ForwardCache:
    """Batch forward pass on standardized inputs; returns (B,) mean and variance."""
    h1 = np.maximum(0.0, x @ params["W1"] + params["b1"])
    h2 = np.maximum(0.0, h1 @ params["W2"] + params["b2"])
    mean = (h2 @ params["W3"] + params["b3"])[:, 0]
    u = np.concatenate([h2, c], axis=1)
    g = np.maximum(0.0, u @ params["V1"] + params["c1"])
    z = (g @ params["V2"] + params["c2"])[:, 0]
    var = softplus(z) + VAR_FLOOR
    return ForwardCache(x, c, h1, h2, u, g, z, mean, var)


def gaussian_nll(mean: np.ndarray, var: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample negative log-likelihood."""
    return 0.5 * (np.log(2.0 * math.pi * var) + (y - mean) ** 2 / var)


def nll_loss(params: Params, x: np.ndarray, c: np.ndarray, y: np.ndarray) -> float:
    cache = forward(params, x, c)
    return float(gaussian_nll(cache.mean, cache.var, y).mean())


def backward(params: Params, cache: ForwardCache, y: np.ndarray,
             fixed_variance: bool = False) -> Params:
    """
    Gradients of the batch-mean loss.

    With ``fixed_variance`` the loss is half the squared error and only the
    mean flow receives gradients.
    """
    n = len(y)
    resid = cache.mean - y
    grads: Params = {}

    if fixed_variance:
        d_mean = resid / n
    else:
        d_mean = resid / cache.var / n
        d_var = (0.5 / cache.var - 0.5 * resid ** 2 / cache.var ** 2) / n
        d_z = (d_var * sigmoid(cache.z))[:, None]
        grads["V2"] = cache.g.T @ d_z
        grads["c2"] = d_z.sum(axis=0)
        d_g = (d_z @ params["V2"].T) * (cache.g > 0)
        grads["V1"] = cache.u.T @ d_g
        grads["c1"] = d_g.sum(axis=0)
        d_u = d_g @ params["V1"].T

    d_mean = d_mean[:, None]
    grads["W3"] = cache.h2.T @ d_mean
    grads["b3"] = d_mean.sum(axis=0)
    d_h2 = d_mean @ params["W3"].T
    if not fixed_variance:
        d_h2 = d_h2 + d_u[:, :HIDDEN]
    d_a2 = d_h2 * (cache.h2 > 0)
    grads["W2"] = cache.h1.T @ d_a2
    grads["b2"] = d_a2.sum(axis=0)
    d_a1 = (d_a2 @ params["W2"].T) * (cache.h1 > 0)
    grads["W1"] = cache.x.T @ d_a1
    grads["b1"] = d_a1.sum(axis=0)
    return grads


def clip_gradients(grads: Params, max_norm: float) -> float:
    """Scale grads in place to a global L2 norm of at most max_norm; returns the norm."""
    norm = math.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
    if norm > max_norm > 0:
        scale = max_norm / norm
        for name in grads:
            grads[name] *= scale
    return norm


def sgd_step(params: Params, grads: Params, learning_rate: float) -> None:
    for name, grad in grads.items():
        params[name] -= learning_rate * grad


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    val_nll: float


@dataclass
class TrainingResult:
    params: Params
    best_epoch: int
    history: List[EpochRecord] = field(default_factory=list)


def fit(
    x_train: np.ndarray, c_train: np.ndarray, y_train: np.ndarray,
    x_val: np.ndarray, c_val: np.ndarray, y_val: np.ndarray,
    learning_rate: float, epochs: int, batch_size: int, grad_clip: float,
    rng: np.random.Generator, fixed_variance: bool = False,
    loss_fn=None,
) -> TrainingResult:
    """
    Minibatch gradient descent, keeping the epoch with the lowest validation loss.

    Epoch 0 in the history is the untrained network.
    """
    params = init_params(x_train.shape[1], rng)
    if loss_fn is None:
        loss_fn = nll_loss

    def evaluate(p):
        train = loss_fn(p, x_train, c_train, y_train)
        val = loss_fn(p, x_val, c_val, y_val) if len(y_val) else train
        return train, val

    train_loss, val_loss = evaluate(params)
    result = TrainingResult(params={k: v.copy() for k, v in params.items()}, best_epoch=0,
                            history=[EpochRecord(0, train_loss, val_loss)])
    best_val = val_loss
    n = len(y_train)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            cache = forward(params, x_train[batch], c_train[batch])
            grads = backward(params, cache, y_train[batch], fixed_variance=fixed_variance)
            clip_gradients(grads, grad_clip)
            sgd_step(params, grads, learning_rate)
        train_loss, val_loss = evaluate(params)
        result.history.append(EpochRecord(epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            result.best_epoch = epoch
            result.params = {k: v.copy() for k, v in params.items()}
    return result


def numeric_gradient_check(params: Params, x: np.ndarray, c: np.ndarray, y: np.ndarray,
                           eps: float = 1e-6, n_entries: int = 50,
                           rng: Optional[np.random.Generator] = None) -> float:
    """
    Largest relative error between backprop and central differences.

    Checks ``n_entries`` parameter entries drawn uniformly over all arrays.
    Entries whose gradient is below 1e-4 in magnitude are compared on an
    absolute 1e-4 scale, where float roundoff dominates the difference.
    """
    rng = rng or np.random.default_rng(0)
    analytic = backward(params, forward(params, x, c), y)
    sizes = np.array([params[name].size for name in PARAM_NAMES])
    total = int(sizes.sum())
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in rng.choice(total, size=min(n_entries, total), replace=False):
        which = int(np.searchsorted(offsets, flat, side="right")) - 1
        name = PARAM_NAMES[which]
        array = params[name]
        index = np.unravel_index(int(flat - offsets[which]), array.shape)
        original = array[index]
        array[index] = original + eps
        plus = nll_loss(params, x, c, y)
        array[index] = original - eps
        minus = nll_loss(params, x, c, y)
        array[index] = original
        numeric = (plus - minus) / (2.0 * eps)
        exact = float(analytic[name][index])
        scale = max(abs(numeric), abs(exact), 1e-4)
        worst = max(worst, abs(numeric - exact) / scale)
    return worst


def predict(params: Params, x: np.ndarray, c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    cache = forward(params, x, c)
    return cache.mean, cache.var
