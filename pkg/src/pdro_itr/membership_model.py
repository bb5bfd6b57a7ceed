"""Multinomial logistic regression for source-membership probabilities.

Estimates omega_s(x) = P(S = s | X = x) by maximizing the multinomial
log-likelihood with a small ridge penalty. The last class's coefficient
row is pinned to zero for identifiability; logits use max-subtraction.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core_optim import AdamHyper, adam_minimize
from .errors import ClassCoverageError, InputError
from .simplex import SimplexVector

RIDGE_DEFAULT = 1e-6


@dataclass(frozen=True)
class SoftmaxConfig:
    """Training configuration; num_sources=None infers |S| from the labels."""

    epochs: int = 2000
    learning_rate: float = 0.05
    ridge: float = RIDGE_DEFAULT
    with_intercept: bool = False
    num_sources: Optional[int] = None
    seed: int = 0


@dataclass
class SoftmaxModel:
    """Fitted coefficients; beta has shape (|S|, p) with the last row zero.

    ``intercept`` is None for intercept-free fits, else length |S| with the
    last entry zero.
    """

    beta: np.ndarray
    num_sources: int
    intercept: Optional[np.ndarray] = None

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.beta.ndim != 2 or self.beta.shape[0] != self.num_sources:
            raise InputError(f"beta must be ({self.num_sources}, p), got {self.beta.shape}")
        if self.num_sources < 2:
            raise InputError("need at least 2 classes")
        if self.intercept is not None:
            self.intercept = np.asarray(self.intercept, dtype=np.float64)
            if self.intercept.shape != (self.num_sources,):
                raise InputError("intercept length must equal num_sources")

    @property
    def input_dim(self) -> int:
        return self.beta.shape[1]


def _logits(model: SoftmaxModel, X: np.ndarray) -> np.ndarray:
    z = X @ model.beta.T
    if model.intercept is not None:
        z = z + model.intercept
    return z


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def membership_probs(model: SoftmaxModel, X) -> np.ndarray:
    """n x |S| matrix of membership probabilities, each row summing to 1."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise InputError(f"X must be (n, {model.input_dim}), got {X.shape}")
    return _softmax_rows(_logits(model, X))


def predict_membership(model: SoftmaxModel, x) -> SimplexVector:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != model.input_dim:
        raise InputError(f"x must be a length-{model.input_dim} vector, got shape {x.shape}")
    return SimplexVector(membership_probs(model, x[None, :])[0])


def log_likelihood(model: SoftmaxModel, X, s_labels) -> float:
    """Mean log-likelihood of 1-based labels under the model (no penalty)."""
    X = np.asarray(X, dtype=np.float64)
    labels = _check_labels(s_labels, X.shape[0], model.num_sources)
    z = _logits(model, X)
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(z[np.arange(X.shape[0]), labels - 1] - log_norm))


def _check_labels(s_labels, n: int, num_sources: int) -> np.ndarray:
    labels = np.asarray(s_labels)
    if labels.shape != (n,):
        raise InputError(f"labels must have shape ({n},), got {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == labels.astype(np.int64)):
            raise InputError("labels must be integers")
        labels = labels.astype(np.int64)
    out_of_range = (labels < 1) | (labels > num_sources)
    if np.any(out_of_range):
        bad = int(labels[out_of_range][0])
        raise ClassCoverageError(f"label {bad} outside 1..{num_sources}")
    counts = np.bincount(labels, minlength=num_sources + 1)[1:]
    if np.any(counts == 0):
        missing = int(np.nonzero(counts == 0)[0][0] + 1)
        raise ClassCoverageError(f"class {missing} has no rows")
    return labels


def _nll_and_grad(theta, Xa, Y, ridge, num_classes):
    """Penalized mean negative log-likelihood and its gradient.

    theta holds the first |S|-1 coefficient rows flattened; the last row
    stays zero. Xa may carry an appended intercept column.
    """
    n, q = Xa.shape
    free = theta.reshape(num_classes - 1, q)
    z = Xa @ np.vstack([free, np.zeros(q)]).T
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    P = e / e.sum(axis=1, keepdims=True)
    nll = -float(np.mean(np.log(P[Y.astype(bool)]))) + ridge * float(np.sum(free * free))
    grad_rows = (P - Y).T @ Xa / n + 2.0 * ridge * np.vstack([free, np.zeros(q)])
    return nll, grad_rows[:-1].ravel()


def fit_softmax(X, s_labels, config: SoftmaxConfig = SoftmaxConfig()) -> SoftmaxModel:
    """Fit by full-batch Adam from a zero start. Deterministic given the config."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError(f"X must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("X contains non-finite entries")
    n, p = X.shape
    if n == 0:
        raise InputError("cannot fit on an empty sample")
    labels_raw = np.asarray(s_labels)
    k = config.num_sources if config.num_sources is not None else int(labels_raw.max(initial=0))
    if k < 2:
        raise InputError("need at least 2 classes")
    labels = _check_labels(s_labels, n, k)

    Xa = np.hstack([X, np.ones((n, 1))]) if config.with_intercept else X
    Y = np.zeros((n, k))
    Y[np.arange(n), labels - 1] = 1.0

    def objective(theta):
        return _nll_and_grad(theta, Xa, Y, config.ridge, k)

    theta0 = np.zeros((k - 1) * Xa.shape[1])
    theta = adam_minimize(objective, theta0, config.epochs, AdamHyper(learning_rate=config.learning_rate))
    full = np.vstack([theta.reshape(k - 1, Xa.shape[1]), np.zeros(Xa.shape[1])])
    if config.with_intercept:
        return SoftmaxModel(beta=full[:, :p], num_sources=k, intercept=full[:, p])
    return SoftmaxModel(beta=full, num_sources=k)


def softmax_to_dict(model: SoftmaxModel) -> dict:
    return {
        "kind": "softmax",
        "beta": model.beta.tolist(),
        "num_sources": model.num_sources,
        "intercept": None if model.intercept is None else model.intercept.tolist(),
    }


def softmax_from_dict(doc: dict) -> SoftmaxModel:
    if doc.get("kind") != "softmax":
        raise InputError(f"expected a softmax document, got kind={doc.get('kind')!r}")
    intercept = doc.get("intercept")
    return SoftmaxModel(
        beta=np.asarray(doc["beta"], dtype=np.float64),
        num_sources=int(doc["num_sources"]),
        intercept=None if intercept is None else np.asarray(intercept, dtype=np.float64),
    )
