"""First-order optimization primitives shared by all fitting modules.

Adam with bias correction over flat float64 parameter vectors, plus a
central-difference gradient checker used as the test oracle for every
analytic gradient in the package.
"""

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .errors import InputError, NumericError, ParameterError


@dataclass(frozen=True)
class AdamHyper:
    """Adam hyperparameters. Defaults are the conventional ones."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0.0 or self.epsilon <= 0.0:
            raise ParameterError("learning_rate and epsilon must be positive")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ParameterError("beta1 and beta2 must lie in (0, 1)")


@dataclass(frozen=True)
class AdamState:
    """Parameters plus first/second moment estimates and the step counter."""

    params: np.ndarray
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0

    def __post_init__(self):
        if not (self.params.shape == self.m.shape == self.v.shape):
            raise InputError("params, m and v must share one shape")
        if np.any(self.v < 0.0):
            raise InputError("second-moment estimate v must be nonnegative")
        if self.step_count < 0:
            raise InputError("step_count must be nonnegative")


def init_adam(params) -> AdamState:
    p = np.asarray(params, dtype=np.float64)
    return AdamState(params=p, m=np.zeros_like(p), v=np.zeros_like(p), step_count=0)


def adam_update(state: AdamState, grad, hyper: AdamHyper) -> AdamState:
    """One bias-corrected Adam step; returns a fresh state, never mutates."""
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != state.params.shape:
        raise InputError(
            f"gradient shape {g.shape} does not match params shape {state.params.shape}"
        )
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient entry")
    t = state.step_count + 1
    m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * g
    v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * g * g
    m_hat = m / (1.0 - hyper.beta1 ** t)
    v_hat = v / (1.0 - hyper.beta2 ** t)
    params = state.params - hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.epsilon)
    return AdamState(params=params, m=m, v=v, step_count=t)


def adam_minimize(
    value_and_grad: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    x0,
    steps: int,
    hyper: AdamHyper,
) -> np.ndarray:
    """Run ``steps`` Adam updates from ``x0`` and return the final parameters."""
    state = init_adam(x0)
    for _ in range(steps):
        value, grad = value_and_grad(state.params)
        if not np.isfinite(value):
            raise NumericError(f"objective diverged to {value}")
        state = adam_update(state, grad, hyper)
    return state.params


def finite_diff_grad(f: Callable[[np.ndarray], float], x, eps: float) -> np.ndarray:
    """Central-difference gradient of a scalar function, coordinate by coordinate."""
    if eps <= 0.0:
        raise ParameterError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = eps
        hi = f(x + step)
        lo = f(x - step)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(f"non-finite function value near coordinate {i}")
        grad[i] = (hi - lo) / (2.0 * eps)
    return grad
