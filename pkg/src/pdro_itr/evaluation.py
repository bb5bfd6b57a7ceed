"""Policy value estimators and the size-weighted baseline rule.

Simulation evaluation scores a rule against the analytic treatment effect
of the generative model, reporting the worst case over Dirichlet-sampled
mixture weights. Observational evaluation uses the doubly robust value
estimator with a known or fitted propensity.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .errors import InputError, ParameterError, PositivityError
from .membership_model import SoftmaxConfig, fit_softmax, membership_probs
from .pdro_learner import NuisanceSet, PdroPolicy
from .rng import STREAM_COVARIATES, stream_rng
from .simplex import SimplexVector
from .synthetic import (
    NUM_SOURCES,
    Dataset,
    ScenarioSpec,
    dirichlet_draws,
    scenario_f_all,
    true_membership_probs,
    truncated_standard_normal,
)


@dataclass
class EvalReport:
    method_name: str
    policy_value: float
    worst_case_value: Optional[float]
    n_test: int
    rho_draws: int
    metadata: Dict[str, str] = field(default_factory=dict)


def _oracle_values(cate_oracle: Callable, X: np.ndarray) -> np.ndarray:
    # accept either a vectorized oracle (matrix -> vector) or a scalar one
    try:
        values = np.asarray(cate_oracle(X), dtype=np.float64)
        if values.shape == (X.shape[0],):
            return values
    except Exception:
        pass
    return np.array([float(cate_oracle(x)) for x in X])


def empirical_policy_value(policy: PdroPolicy, X_test, cate_oracle: Callable) -> float:
    """Mean of oracle(x) * decide(x) over the test covariates."""
    X_test = np.asarray(X_test, dtype=np.float64)
    if X_test.ndim != 2 or X_test.shape[0] == 0:
        raise InputError("test covariates must be a nonempty matrix")
    decisions = policy.decide_batch(X_test)
    return float(np.mean(_oracle_values(cate_oracle, X_test) * decisions))


def worst_case_value(
    policy: PdroPolicy,
    spec: ScenarioSpec,
    delta_true: float,
    n_test: int = 1000,
    n_draws: int = 100,
    alpha: float = 1.0,
    seed: int = 0,
) -> float:
    """Minimum empirical policy value over Dirichlet-sampled mixture weights.

    The test covariates and the draw set are fixed by the seed, so every
    policy evaluated with the same seed faces the same distributions.
    """
    if n_test < 1 or n_draws < 1:
        raise InputError(f"n_test and n_draws must be >= 1, got {n_test}, {n_draws}")
    if not 0.0 <= delta_true <= 1.0:
        raise ParameterError(f"delta_true must be in [0, 1], got {delta_true}")
    X_test = truncated_standard_normal(stream_rng(seed, STREAM_COVARIATES), (n_test, spec.dim_p))
    decisions = policy.decide_batch(X_test)
    F = scenario_f_all(spec, X_test)
    anchored = delta_true * (true_membership_probs(spec, X_test) * F).sum(axis=1)
    draws = dirichlet_draws(NUM_SOURCES, alpha, n_draws, seed)
    # value per draw: mean of 2 * [anchored + (1-delta) F rho] * d
    mixture = anchored[:, None] + (1.0 - delta_true) * (F @ draws.T)
    values = 2.0 * (mixture * decisions[:, None]).mean(axis=0)
    return float(values.min())


def doubly_robust_value(
    policy: PdroPolicy,
    data: Dataset,
    propensity: Callable[[int, np.ndarray], float],
    f1_hat: Callable,
    f0_hat: Callable,
) -> float:
    """Doubly robust estimate of the policy value on a labeled sample."""
    if data.a is None or data.y is None:
        raise InputError("doubly robust evaluation needs treatment and outcome columns")
    X, a, y = data.X, data.a, data.y
    pi = np.array([float(propensity(int(ai), xi)) for ai, xi in zip(a, X)])
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        bad = int(np.nonzero((pi <= 0.0) | (pi >= 1.0))[0][0])
        raise PositivityError(f"propensity {pi[bad]} outside (0, 1) at row {bad}")
    d = policy.decide_batch(X)
    f1 = _oracle_values(f1_hat, X)
    f0 = _oracle_values(f0_hat, X)
    fitted_at_a = np.where(a == 1, f1, f0)
    ipw = (a == d) / pi * (y - fitted_at_a)
    return float(np.mean(ipw + d * f1 + (1 - d) * f0))


def naive_policy(nuisance: NuisanceSet, source_sizes) -> PdroPolicy:
    """Size-weighted average effect rule: a delta=0 policy with fixed weights."""
    sizes = np.asarray(source_sizes, dtype=np.float64)
    if sizes.shape != (nuisance.num_sources,):
        raise InputError(f"need {nuisance.num_sources} source sizes, got shape {sizes.shape}")
    if np.any(sizes < 0) or sizes.sum() <= 0:
        raise InputError("source sizes must be nonnegative with a positive total")
    return PdroPolicy(delta=0.0, rho=SimplexVector(sizes / sizes.sum()), nuisance=nuisance)


def constant_propensity(p_treated: float = 0.5) -> Callable[[int, np.ndarray], float]:
    if not 0.0 < p_treated < 1.0:
        raise InputError(f"treated probability must be in (0, 1), got {p_treated}")

    def propensity(a, x):
        return p_treated if a == 1 else 1.0 - p_treated

    return propensity


def fit_logistic_propensity(data: Dataset, clip: float = 0.01) -> Callable[[int, np.ndarray], float]:
    """Logistic propensity fit on the labeled sample, clipped away from {0, 1}."""
    if data.a is None:
        raise InputError("propensity fitting needs a treatment column")
    labels = np.where(data.a == 1, 1, 2)  # class 1 = treated
    model = fit_softmax(data.X, labels, SoftmaxConfig(with_intercept=True, num_sources=2))

    def propensity(a, x):
        p_treated = float(membership_probs(model, np.asarray(x, dtype=np.float64)[None, :])[0, 0])
        p_treated = min(max(p_treated, clip), 1.0 - clip)
        return p_treated if a == 1 else 1.0 - p_treated

    return propensity
