"""Feedforward ReLU networks for outcome regression and treatment-effect estimation.

Per-arm outcome regressions are fit by minimizing empirical mean squared
error with Adam; the per-source treatment effect estimate is the difference
of the two arm fits. Inputs and targets are standardized internally and
predictions are hard-clipped to a symmetric output bound.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .core_optim import AdamHyper, AdamState, adam_update, init_adam
from .errors import ArmCoverageError, InputError, NumericError
from .rng import STREAM_INIT, STREAM_SHUFFLE, stream_rng
from .synthetic import Dataset

FULL_BATCH_LIMIT = 4096


@dataclass(frozen=True)
class MlpConfig:
    """Training configuration for one network."""

    hidden_widths: Tuple[int, ...] = (64, 64)
    epochs: int = 500
    batch_size: int = 256
    learning_rate: float = 3e-4
    seed: int = 0
    output_clip: float = 200.0
    x_mean: Optional[np.ndarray] = None
    x_sd: Optional[np.ndarray] = None


@dataclass
class MlpModel:
    """A fitted ReLU network with standardization constants and output bound.

    ``weights[l]`` has shape (fan_in, fan_out); predictions are clipped to
    [-output_clip/2, output_clip/2].
    """

    layer_widths: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    output_clip: float
    x_mean: np.ndarray
    x_sd: np.ndarray
    y_mean: float
    y_sd: float
    loss_history: List[float] = field(default_factory=list, repr=False)

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]


def _check_matrix(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{name} contains non-finite entries")
    return X


def _init_params(widths, rng) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _flatten(weights, biases) -> np.ndarray:
    return np.concatenate([w.ravel() for w in weights] + [b for b in biases])


def _unflatten(theta, widths) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    weights, biases, pos = [], [], 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(theta[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out))
        pos += fan_in * fan_out
    for fan_out in widths[1:]:
        biases.append(theta[pos : pos + fan_out])
        pos += fan_out
    return weights, biases


def _forward(Xs, weights, biases):
    """Forward pass on standardized inputs; returns output and hidden activations."""
    activations = [Xs]
    h = Xs
    for w, b in zip(weights[:-1], biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        activations.append(h)
    out = h @ weights[-1] + biases[-1]
    return out[:, 0], activations


def _mse_grad(Xs, ys, weights, biases):
    """Mean squared error and its gradient via backprop."""
    out, activations = _forward(Xs, weights, biases)
    resid = out - ys
    loss = float(resid @ resid) / resid.size
    delta = (2.0 / resid.size) * resid[:, None]
    grads_w = [None] * len(weights)
    grads_b = [None] * len(biases)
    for layer in reversed(range(len(weights))):
        grads_w[layer] = activations[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (activations[layer] > 0.0)
    return loss, grads_w, grads_b


def fit_mlp(X, y, config: MlpConfig = MlpConfig()) -> MlpModel:
    """Fit one ReLU network by empirical MSE. Deterministic given the seed."""
    X = _check_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < 2:
        raise InputError(f"need at least 2 samples to fit, got {n}")
    if y.shape != (n,):
        raise InputError(f"y must have shape ({n},), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise InputError("y contains non-finite entries")

    x_mean = np.asarray(config.x_mean, dtype=np.float64) if config.x_mean is not None else X.mean(axis=0)
    x_sd = np.asarray(config.x_sd, dtype=np.float64) if config.x_sd is not None else X.std(axis=0)
    x_sd = np.where(x_sd > 0.0, x_sd, 1.0)
    y_mean = float(y.mean())
    y_sd = float(y.std())
    if y_sd == 0.0:
        y_sd = 1.0
    Xs = (X - x_mean) / x_sd
    ys = (y - y_mean) / y_sd

    widths = [p, *config.hidden_widths, 1]
    weights, biases = _init_params(widths, stream_rng(config.seed, STREAM_INIT))
    state = init_adam(_flatten(weights, biases))
    hyper = AdamHyper(learning_rate=config.learning_rate)
    rng_shuffle = stream_rng(config.seed, STREAM_SHUFFLE)
    full_batch = n <= FULL_BATCH_LIMIT

    loss_history = []
    for _ in range(config.epochs):
        weights, biases = _unflatten(state.params, widths)
        if full_batch:
            loss, gw, gb = _mse_grad(Xs, ys, weights, biases)
            state = adam_update(state, _flatten(gw, gb), hyper)
            epoch_loss = loss
        else:
            perm = rng_shuffle.permutation(n)
            batch_losses = []
            for start in range(0, n, config.batch_size):
                idx = perm[start : start + config.batch_size]
                weights, biases = _unflatten(state.params, widths)
                loss, gw, gb = _mse_grad(Xs[idx], ys[idx], weights, biases)
                state = adam_update(state, _flatten(gw, gb), hyper)
                batch_losses.append(loss)
            epoch_loss = float(np.mean(batch_losses))
        if not np.isfinite(epoch_loss):
            raise NumericError("training loss diverged")
        loss_history.append(epoch_loss)

    weights, biases = _unflatten(state.params, widths)
    return MlpModel(
        layer_widths=widths,
        weights=[w.copy() for w in weights],
        biases=[b.copy() for b in biases],
        output_clip=config.output_clip,
        x_mean=x_mean.copy(),
        x_sd=x_sd.copy(),
        y_mean=y_mean,
        y_sd=y_sd,
        loss_history=loss_history,
    )


def predict(model: MlpModel, X) -> np.ndarray:
    """Forward pass; outputs are clipped to [-output_clip/2, output_clip/2]."""
    X = _check_matrix(X)
    if X.shape[1] != model.input_dim:
        raise InputError(f"expected {model.input_dim} columns, got {X.shape[1]}")
    Xs = (X - model.x_mean) / model.x_sd
    out, _ = _forward(Xs, model.weights, model.biases)
    out = out * model.y_sd + model.y_mean
    half = model.output_clip / 2.0
    return np.clip(out, -half, half)


@dataclass
class SourceCate:
    """Per-source treatment-effect estimate: difference of the two arm fits."""

    f1: MlpModel
    f0: MlpModel

    def __post_init__(self):
        if self.f1.input_dim != self.f0.input_dim:
            raise InputError("arm models must share the covariate dimension")

    @property
    def input_dim(self) -> int:
        return self.f1.input_dim


def estimate_source_cate(data: Dataset, config: MlpConfig = MlpConfig()) -> SourceCate:
    """Fit the treated-arm and control-arm regressions for one source.

    Standardization statistics are pooled over both arms. The control-arm
    fit uses seed + 1 so the two initializations differ.
    """
    if data.a is None or data.y is None:
        raise InputError("source data must include treatment and outcome columns")
    treated = data.a == 1
    if treated.sum() < 2 or (~treated).sum() < 2:
        raise ArmCoverageError(
            f"need >= 2 rows per arm, got {int(treated.sum())} treated / {int((~treated).sum())} control"
        )
    x_mean = data.X.mean(axis=0)
    x_sd = data.X.std(axis=0)
    pooled = replace(config, x_mean=x_mean, x_sd=x_sd)
    f1 = fit_mlp(data.X[treated], data.y[treated], pooled)
    f0 = fit_mlp(data.X[~treated], data.y[~treated], replace(pooled, seed=config.seed + 1))
    return SourceCate(f1=f1, f0=f0)


def cate_values(sc: SourceCate, X) -> np.ndarray:
    """Estimated treatment effect f1(x) - f0(x) row by row."""
    return predict(sc.f1, X) - predict(sc.f0, X)


def mlp_to_dict(model: MlpModel) -> dict:
    return {
        "kind": "mlp",
        "layer_widths": list(model.layer_widths),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "output_clip": model.output_clip,
        "x_mean": model.x_mean.tolist(),
        "x_sd": model.x_sd.tolist(),
        "y_mean": model.y_mean,
        "y_sd": model.y_sd,
    }


def mlp_from_dict(doc: dict) -> MlpModel:
    if doc.get("kind") != "mlp":
        raise InputError(f"expected an mlp document, got kind={doc.get('kind')!r}")
    return MlpModel(
        layer_widths=[int(w) for w in doc["layer_widths"]],
        weights=[np.asarray(w, dtype=np.float64) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in doc["biases"]],
        output_clip=float(doc["output_clip"]),
        x_mean=np.asarray(doc["x_mean"], dtype=np.float64),
        x_sd=np.asarray(doc["x_sd"], dtype=np.float64),
        y_mean=float(doc["y_mean"]),
        y_sd=float(doc["y_sd"]),
    )


def linear_mlp(coefs, intercept: float = 0.0, output_clip: float = 200.0) -> MlpModel:
    """Zero-hidden-layer network computing coefs @ x + intercept, useful as an exact oracle."""
    coefs = np.asarray(coefs, dtype=np.float64)
    p = coefs.size
    return MlpModel(
        layer_widths=[p, 1],
        weights=[coefs[:, None].copy()],
        biases=[np.array([intercept])],
        output_clip=output_clip,
        x_mean=np.zeros(p),
        x_sd=np.ones(p),
        y_mean=0.0,
        y_sd=1.0,
    )
