"""Robust treatment rules that mix estimated membership weights with a learned prior.

A rule treats at x when the weighted score sum_s W_s(x) * C_s(x) is
positive, where W_s(x) = delta * omega_s(x) + (1 - delta) * rho_s. The
simplex weight rho is chosen to minimize the smoothed worst-case objective
mean_i g(X_i) * Phi_h(g(X_i)) over pooled source and target covariates,
optimized through a softmax parameterization so the constraint never binds
explicitly. delta = 0 recovers the fully robust rule; delta is tuned on a
small labeled calibration sample by squared prediction error.
"""

import itertools
from dataclasses import dataclass
from math import comb
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core_optim import AdamHyper, adam_minimize
from .errors import ArmCoverageError, InputError, ParameterError
from .membership_model import (
    SoftmaxModel,
    membership_probs,
    softmax_from_dict,
    softmax_to_dict,
)
from .nn_regressor import SourceCate, cate_values, mlp_from_dict, mlp_to_dict, predict
from .simplex import SimplexVector
from .synthetic import Dataset

DELTA_GRID_DEFAULT = tuple(round(0.05 * i, 2) for i in range(21))


@dataclass(frozen=True)
class OptConfig:
    """Adam schedule for the simplex weight search."""

    steps: int = 1000
    learning_rate: float = 0.05

    def __post_init__(self):
        if self.steps < 1:
            raise ParameterError(f"steps must be >= 1, got {self.steps}")
        if self.learning_rate <= 0.0:
            raise ParameterError(f"learning_rate must be positive, got {self.learning_rate}")


@dataclass
class NuisanceSet:
    """Per-source treatment-effect models plus the membership model.

    ``membership`` may be None only for a single source, where the
    membership weight is identically 1.
    """

    cates: List[SourceCate]
    membership: Optional[SoftmaxModel] = None

    def __post_init__(self):
        if len(self.cates) == 0:
            raise InputError("need at least one source model")
        dims = {sc.input_dim for sc in self.cates}
        if len(dims) != 1:
            raise InputError(f"source models disagree on covariate dimension: {sorted(dims)}")
        if self.membership is None:
            if len(self.cates) != 1:
                raise InputError("membership model required when there are multiple sources")
        else:
            if self.membership.num_sources != len(self.cates):
                raise InputError(
                    f"membership has {self.membership.num_sources} classes "
                    f"but {len(self.cates)} source models were given"
                )
            if self.membership.input_dim != self.cates[0].input_dim:
                raise InputError("membership model covariate dimension mismatch")

    @property
    def num_sources(self) -> int:
        return len(self.cates)

    @property
    def input_dim(self) -> int:
        return self.cates[0].input_dim


def phi_h(u, h: float):
    """Ramp surrogate for the indicator: 0 below -h, linear across [-h, h], 1 above."""
    if h <= 0.0:
        raise ParameterError(f"h must be positive, got {h}")
    ramp = np.clip((np.asarray(u, dtype=np.float64) + h) / (2.0 * h), 0.0, 1.0)
    return float(ramp) if ramp.ndim == 0 else ramp


def _check_delta(delta: float) -> float:
    if not 0.0 <= delta <= 1.0:
        raise ParameterError(f"delta must be in [0, 1], got {delta}")
    return float(delta)


def _check_covariates(nuisance: NuisanceSet, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError(f"covariates must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        raise InputError("covariate matrix is empty")
    if X.shape[1] != nuisance.input_dim:
        raise InputError(f"expected {nuisance.input_dim} columns, got {X.shape[1]}")
    return X


def _weights_of(rho) -> np.ndarray:
    if isinstance(rho, SimplexVector):
        return rho.weights
    return SimplexVector(np.asarray(rho, dtype=np.float64)).weights


def cate_matrix(nuisance: NuisanceSet, X) -> np.ndarray:
    """n x |S| matrix of estimated per-source treatment effects."""
    X = _check_covariates(nuisance, X)
    return np.column_stack([cate_values(sc, X) for sc in nuisance.cates])


def membership_matrix(nuisance: NuisanceSet, X) -> np.ndarray:
    """n x |S| matrix of estimated membership probabilities."""
    X = _check_covariates(nuisance, X)
    if nuisance.membership is None:
        return np.ones((X.shape[0], 1))
    return membership_probs(nuisance.membership, X)


def _scores_from_parts(C, Om, rho_w, delta) -> np.ndarray:
    return delta * (Om * C).sum(axis=1) + (1.0 - delta) * (C @ rho_w)


def robust_scores(X, nuisance: NuisanceSet, rho, delta: float) -> np.ndarray:
    """Weighted scores sum_s {delta*omega_s(x) + (1-delta)*rho_s} C_s(x), row by row."""
    delta = _check_delta(delta)
    C = cate_matrix(nuisance, X)
    Om = membership_matrix(nuisance, X)
    return _scores_from_parts(C, Om, _weights_of(rho), delta)


def robust_score(x, nuisance: NuisanceSet, rho, delta: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError(f"x must be a vector, got shape {x.shape}")
    return float(robust_scores(x[None, :], nuisance, rho, delta)[0])


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    w = e / e.sum()
    return w / w.sum()


def _objective_from_parts(z, C, Om, delta, h) -> Tuple[float, np.ndarray]:
    """Value and exact z-gradient of mean g*Phi_h(g) with rho = softmax(z).

    The ramp derivative at |g| = h uses the interior value 1/(2h), so the
    gradient is the a.e. derivative with a fixed convention at the kinks.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (C.shape[1],):
        raise InputError(f"z must have length {C.shape[1]}, got shape {z.shape}")
    rho = _softmax(z)
    g = _scores_from_parts(C, Om, rho, delta)
    ramp = np.clip((g + h) / (2.0 * h), 0.0, 1.0)
    value = float(np.mean(g * ramp))
    dpsi = ramp + g * (np.abs(g) <= h) / (2.0 * h)
    grad_rho = (1.0 - delta) * (C.T @ dpsi) / g.size
    grad_z = rho * (grad_rho - float(rho @ grad_rho))
    return value, grad_z


def smoothed_objective(z, pooled_X, nuisance: NuisanceSet, delta: float, h: float):
    """Surrogate objective value and its gradient in the free softmax coordinates."""
    delta = _check_delta(delta)
    if h <= 0.0:
        raise ParameterError(f"h must be positive, got {h}")
    C = cate_matrix(nuisance, pooled_X)
    Om = membership_matrix(nuisance, pooled_X)
    return _objective_from_parts(z, C, Om, delta, h)


def _default_bandwidth_from_parts(C, Om, delta) -> float:
    # spread of the scores at the uniform start sets the scale; m^(-1/2) decay
    uniform = np.full(C.shape[1], 1.0 / C.shape[1])
    g = _scores_from_parts(C, Om, uniform, delta)
    scale = float(np.std(g))
    base = 1.0 / np.sqrt(g.size)
    return scale * base if scale > 0.0 else base


def default_bandwidth(pooled_X, nuisance: NuisanceSet, delta: float) -> float:
    delta = _check_delta(delta)
    C = cate_matrix(nuisance, pooled_X)
    Om = membership_matrix(nuisance, pooled_X)
    return _default_bandwidth_from_parts(C, Om, delta)


def _simplex_lattice(num_sources: int, cap: int = 320) -> np.ndarray:
    """Deterministic grid on the simplex at the finest resolution within cap points."""
    q = max(qq for qq in range(1, 21) if comb(qq + num_sources - 1, num_sources - 1) <= cap)
    points = []
    for bars in itertools.combinations(range(q + num_sources - 1), num_sources - 1):
        composition, previous = [], -1
        for b in bars:
            composition.append(b - previous - 1)
            previous = b
        composition.append(q + num_sources - 2 - previous)
        points.append(composition)
    return np.asarray(points, dtype=np.float64) / q


def _fit_rho_from_parts(C, Om, delta, h, opt: OptConfig) -> SimplexVector:
    # the surrogate has local minima; seed Adam from the uniform start plus
    # the best lattice points, keep the lowest final value (ties -> uniform)
    num_sources = C.shape[1]

    def objective(z):
        return _objective_from_parts(z, C, Om, delta, h)

    lattice = _simplex_lattice(num_sources)
    g = delta * (Om * C).sum(axis=1) + (1.0 - delta) * (lattice @ C.T)
    lattice_values = (g * np.clip((g + h) / (2.0 * h), 0.0, 1.0)).mean(axis=1)
    seeds = np.argsort(lattice_values, kind="stable")[:3]
    starts = [np.zeros(num_sources)] + [np.log(lattice[i] + 1e-3) for i in seeds]

    polish_steps = max(1, opt.steps // 4)
    best_value, best_z = np.inf, None
    for z0 in starts:
        z = adam_minimize(objective, z0, opt.steps, AdamHyper(learning_rate=opt.learning_rate))
        z = adam_minimize(objective, z, polish_steps, AdamHyper(learning_rate=opt.learning_rate / 10))
        z = adam_minimize(objective, z, polish_steps, AdamHyper(learning_rate=opt.learning_rate / 100))
        value, _ = objective(z)
        if value < best_value:
            best_value, best_z = value, z
    return SimplexVector(_softmax(best_z))


def fit_rho(
    pooled_X,
    nuisance: NuisanceSet,
    delta: float,
    h: Optional[float] = None,
    opt: OptConfig = OptConfig(),
) -> SimplexVector:
    """Minimize the surrogate over the simplex; see _fit_rho_from_parts for the search."""
    delta = _check_delta(delta)
    if nuisance.num_sources == 1:
        _check_covariates(nuisance, pooled_X)
        return SimplexVector(np.ones(1))
    C = cate_matrix(nuisance, pooled_X)
    Om = membership_matrix(nuisance, pooled_X)
    if h is None:
        h = _default_bandwidth_from_parts(C, Om, delta)
    if h <= 0.0:
        raise ParameterError(f"h must be positive, got {h}")
    return _fit_rho_from_parts(C, Om, delta, h, opt)


def tune_delta(
    calibration: Dataset,
    nuisance: NuisanceSet,
    pooled_X,
    h: Optional[float] = None,
    grid: Optional[Sequence[float]] = None,
    opt: OptConfig = OptConfig(),
) -> Tuple[float, SimplexVector]:
    """Grid-search delta by squared prediction error on the calibration sample.

    Each candidate delta gets its own fitted rho; when h is None the
    bandwidth default is recomputed per delta. Ties go to the larger delta.
    """
    if calibration.a is None or calibration.y is None:
        raise InputError("calibration data must include treatment and outcome columns")
    treated = calibration.a == 1
    if treated.sum() < 1 or (~treated).sum() < 1:
        raise ArmCoverageError(
            f"calibration needs both arms, got {int(treated.sum())} treated "
            f"/ {int((~treated).sum())} control"
        )
    if grid is None:
        grid = DELTA_GRID_DEFAULT
    if len(grid) == 0:
        raise InputError("delta grid is empty")

    Xc = _check_covariates(nuisance, calibration.X)
    F1 = np.column_stack([predict(sc.f1, Xc) for sc in nuisance.cates])
    F0 = np.column_stack([predict(sc.f0, Xc) for sc in nuisance.cates])
    Om_c = membership_matrix(nuisance, Xc)
    y = calibration.y
    C = cate_matrix(nuisance, pooled_X)
    Om = membership_matrix(nuisance, pooled_X)

    best_delta, best_rho, best_crit = None, None, np.inf
    for delta in sorted(_check_delta(d) for d in grid):
        if nuisance.num_sources == 1:
            rho = SimplexVector(np.ones(1))
        else:
            h_delta = _default_bandwidth_from_parts(C, Om, delta) if h is None else h
            if h_delta <= 0.0:
                raise ParameterError(f"h must be positive, got {h_delta}")
            rho = _fit_rho_from_parts(C, Om, delta, h_delta, opt)
        W = delta * Om_c + (1.0 - delta) * rho.weights
        err1 = (W * F1).sum(axis=1) - y
        err0 = (W * F0).sum(axis=1) - y
        crit = float(np.mean(err1[treated] ** 2)) + float(np.mean(err0[~treated] ** 2))
        if crit <= best_crit:
            best_delta, best_rho, best_crit = delta, rho, crit
    return best_delta, best_rho


@dataclass
class PdroPolicy:
    """Treat when the weighted score is strictly positive."""

    delta: float
    rho: SimplexVector
    nuisance: NuisanceSet

    def __post_init__(self):
        self.delta = _check_delta(self.delta)
        if len(self.rho) != self.nuisance.num_sources:
            raise InputError(
                f"rho has {len(self.rho)} entries for {self.nuisance.num_sources} sources"
            )

    def score(self, x) -> float:
        return robust_score(x, self.nuisance, self.rho, self.delta)

    def score_batch(self, X) -> np.ndarray:
        return robust_scores(X, self.nuisance, self.rho, self.delta)

    def decide(self, x) -> int:
        return 1 if self.score(x) > 0.0 else 0

    def decide_batch(self, X) -> np.ndarray:
        return (self.score_batch(X) > 0.0).astype(np.int64)


def decide(policy: PdroPolicy, x) -> int:
    """1 if the score is strictly positive, else 0 (score exactly 0 -> 0)."""
    return policy.decide(x)


def fit_dro(
    pooled_X,
    nuisance: NuisanceSet,
    h: Optional[float] = None,
    opt: OptConfig = OptConfig(),
) -> PdroPolicy:
    """The fully robust rule: the delta = 0 specialization."""
    return PdroPolicy(delta=0.0, rho=fit_rho(pooled_X, nuisance, 0.0, h, opt), nuisance=nuisance)


def fit_pdro(
    pooled_X,
    nuisance: NuisanceSet,
    calibration: Dataset,
    h: Optional[float] = None,
    grid: Optional[Sequence[float]] = None,
    opt: OptConfig = OptConfig(),
) -> PdroPolicy:
    """Tune delta on the calibration sample, then assemble the policy."""
    delta_hat, rho_hat = tune_delta(calibration, nuisance, pooled_X, h, grid, opt)
    return PdroPolicy(delta=delta_hat, rho=rho_hat, nuisance=nuisance)


def policy_to_dict(policy: PdroPolicy) -> dict:
    return {
        "kind": "pdro_policy",
        "delta": policy.delta,
        "rho": policy.rho.weights.tolist(),
        "cates": [
            {"f1": mlp_to_dict(sc.f1), "f0": mlp_to_dict(sc.f0)} for sc in policy.nuisance.cates
        ],
        "membership": None
        if policy.nuisance.membership is None
        else softmax_to_dict(policy.nuisance.membership),
    }


def policy_from_dict(doc: dict) -> PdroPolicy:
    if doc.get("kind") != "pdro_policy":
        raise InputError(f"expected a pdro_policy document, got kind={doc.get('kind')!r}")
    cates = [
        SourceCate(f1=mlp_from_dict(entry["f1"]), f0=mlp_from_dict(entry["f0"]))
        for entry in doc["cates"]
    ]
    membership = None if doc.get("membership") is None else softmax_from_dict(doc["membership"])
    return PdroPolicy(
        delta=float(doc["delta"]),
        rho=SimplexVector(np.asarray(doc["rho"], dtype=np.float64)),
        nuisance=NuisanceSet(cates=cates, membership=membership),
    )
