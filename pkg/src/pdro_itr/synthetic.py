"""Synthetic multi-source benchmark generators.

Four scenarios, each with three source populations. Covariates are i.i.d.
standard normal truncated to [-10, 10]; source membership follows a
multinomial logistic law in the covariates; outcomes are
``f_s(X) * (2A - 1) + noise``. Target outcomes mix the source signal
functions with weights ``delta * w_s(x) + (1 - delta) * rho_s``.
"""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputError, ParameterError
from .rng import (
    STREAM_COVARIATES,
    STREAM_DIRICHLET,
    STREAM_MEMBERSHIP,
    STREAM_NOISE,
    STREAM_TREATMENT,
    stream_rng,
)
from .simplex import SimplexVector

NUM_SOURCES = 3

# Membership coefficients, one row per source; zero-padded for p > 5.
_BETA_BASE = np.array(
    [
        [-3.0, 2.0, 1.0, 0.0, 0.0],
        [1.0, -1.0, 3.0, 0.0, -1.0],
        [1.0, 0.0, 0.0, -1.0, 2.0],
    ]
)

_SCENARIO_DIMS = {1: 5, 2: 5, 3: 30, 4: 30}


@dataclass(frozen=True)
class ScenarioSpec:
    """Identifies one benchmark scenario: dimension, membership betas, noise scale."""

    id: int
    dim_p: int
    beta_true: np.ndarray
    noise_sd: float = 1.0


def scenario_spec(scenario_id: int) -> ScenarioSpec:
    if scenario_id not in _SCENARIO_DIMS:
        raise ParameterError(f"scenario must be in {{1,2,3,4}}, got {scenario_id}")
    p = _SCENARIO_DIMS[scenario_id]
    beta = np.zeros((NUM_SOURCES, p))
    beta[:, :5] = _BETA_BASE
    return ScenarioSpec(id=scenario_id, dim_p=p, beta_true=beta)


@dataclass
class Dataset:
    """Rows of (covariates, treatment, outcome, optional source label).

    ``a``, ``y`` and ``s`` may be None for covariate-only data. Source labels
    are 1-based.
    """

    X: np.ndarray
    a: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise InputError("X must be a 2-D matrix")
        n = self.X.shape[0]
        for name in ("a", "y", "s"):
            col = getattr(self, name)
            if col is not None:
                col = np.asarray(col)
                if col.shape != (n,):
                    raise InputError(f"column {name} must have length {n}")
                setattr(self, name, col)
        if self.a is not None and not np.isin(self.a, (0, 1)).all():
            raise InputError("treatment column must be binary 0/1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _as_matrix(x, p: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != p:
        raise InputError(f"expected covariates of dimension {p}, got shape {arr.shape}")
    return arr


def scenario_f(spec: ScenarioSpec, s: int, x):
    """Signal function f_s for one source. Accepts a vector or an (m, p) matrix."""
    if s not in (1, 2, 3):
        raise ParameterError(f"source index must be in {{1,2,3}}, got {s}")
    X = _as_matrix(x, spec.dim_p)
    x1, x2, x3, x4, x5 = (X[:, i] for i in range(5))
    sid = spec.id
    if sid == 1:
        vals = {
            1: 3 * x1 + x3 + x4 - x5,
            2: x1 - x2 - 2 * x3 + x4 + x5,
            3: x1 + 2 * x2 + x3 - x4 + x5,
        }[s]
    elif sid == 2:
        vals = {
            1: -np.sin(x1) + np.exp(x2 / 10.0) - (x3 - x4) ** 2 + x5**3,
            2: np.sin(x1) - x2 * x3 - x3**2 + x4**2 - np.maximum(0.0, x5),
            3: -2 * x1 - x2**2 + x3**2 - x4 + np.abs(x5),
        }[s]
    elif sid == 3:
        vals = {
            1: x1 + x2 + x3 + x4 - 3 * x5,
            2: x1 - 2 * x2 + 2 * x3 + x4 + 3 * x5,
            3: x1 + x2 + x3 - x4,
        }[s]
    else:
        x6 = X[:, 5]
        vals = {
            1: np.sin(x1) + np.exp(x2 + x3) + (x4 - 3 * x5) ** 2 + 3 * x6,
            2: np.maximum(0.0, x1 * x2) + x3 - x4 + x5**2,
            3: -5 * x1 - x2**3 - (x3 - x4) ** 2 + np.abs(x5),
        }[s]
    return float(vals[0]) if np.asarray(x).ndim == 1 else vals


def scenario_f_all(spec: ScenarioSpec, X) -> np.ndarray:
    """All three signal functions stacked into an (m, 3) matrix."""
    X = _as_matrix(X, spec.dim_p)
    return np.column_stack([scenario_f(spec, s, X) for s in (1, 2, 3)])


def true_membership_probs(spec: ScenarioSpec, X) -> np.ndarray:
    """Membership probabilities P(S=s | X=x) as an (m, 3) matrix."""
    X = _as_matrix(X, spec.dim_p)
    logits = X @ spec.beta_true.T
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def true_membership(spec: ScenarioSpec, x) -> SimplexVector:
    """Membership probabilities at a single covariate vector."""
    probs = true_membership_probs(spec, np.asarray(x, dtype=np.float64)[None, :])[0]
    return SimplexVector.from_unnormalized(probs)


def outcome_mean(spec: ScenarioSpec, s: int, X, a) -> np.ndarray:
    """Noiseless source outcome f_s(X) * (2a - 1)."""
    return scenario_f(spec, s, X) * (2.0 * np.asarray(a) - 1.0)


def target_mixture_score(spec: ScenarioSpec, X, delta_true: float, rho_true: SimplexVector) -> np.ndarray:
    """Mixture signal g(x) = delta * sum_s w_s(x) f_s(x) + (1-delta) * sum_s rho_s f_s(x)."""
    if not 0.0 <= delta_true <= 1.0:
        raise ParameterError(f"delta must lie in [0, 1], got {delta_true}")
    F = scenario_f_all(spec, X)
    W = true_membership_probs(spec, X)
    return delta_true * (W * F).sum(axis=1) + (1.0 - delta_true) * (F @ rho_true.weights)


def true_target_cate(spec: ScenarioSpec, x, delta_true: float, rho_true: SimplexVector):
    """Target-population treatment effect at x: equals 2 g(x) under the outcome model."""
    vals = 2.0 * target_mixture_score(spec, _as_matrix(x, spec.dim_p), delta_true, rho_true)
    return float(vals[0]) if np.asarray(x).ndim == 1 else vals


def truncated_standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal draws with out-of-range components resampled into [-10, 10]."""
    draws = rng.standard_normal(shape)
    bad = np.abs(draws) > 10.0
    while bad.any():
        draws[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(draws) > 10.0
    return draws


def gen_source(spec: ScenarioSpec, n_per_source: int, seed: int) -> Dataset:
    """Equal-quota source sample: n_per_source rows per source, labels included.

    Covariates are drawn unconditionally, assigned a source via the membership
    law, and kept until every source reaches its quota; rows for already-full
    sources are rejected. Within a source the kept rows are i.i.d. from the
    conditional covariate law.
    """
    if n_per_source < 1:
        raise InputError("n_per_source must be >= 1")
    rng_x = stream_rng(seed, STREAM_COVARIATES)
    rng_s = stream_rng(seed, STREAM_MEMBERSHIP)
    buckets = [[] for _ in range(NUM_SOURCES)]
    while any(len(b) < n_per_source for b in buckets):
        short = sum(max(0, n_per_source - len(b)) for b in buckets)
        batch = max(256, 4 * short)
        X = truncated_standard_normal(rng_x, (batch, spec.dim_p))
        probs = true_membership_probs(spec, X)
        u = rng_s.random(batch)
        labels = (u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1)
        for row, lab in zip(X, labels):
            if len(buckets[lab]) < n_per_source:
                buckets[lab].append(row)
    X = np.vstack([np.vstack(b) for b in buckets])
    s = np.repeat(np.arange(1, NUM_SOURCES + 1), n_per_source)
    return _attach_outcomes(spec, X, s, seed)


def gen_source_natural(spec: ScenarioSpec, n_total: int, seed: int) -> Dataset:
    """Source sample without quotas: sizes follow the natural membership law."""
    if n_total < 1:
        raise InputError("n_total must be >= 1")
    rng_x = stream_rng(seed, STREAM_COVARIATES)
    rng_s = stream_rng(seed, STREAM_MEMBERSHIP)
    X = truncated_standard_normal(rng_x, (n_total, spec.dim_p))
    probs = true_membership_probs(spec, X)
    u = rng_s.random(n_total)
    s = 1 + (u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1)
    order = np.argsort(s, kind="stable")
    return _attach_outcomes(spec, X[order], s[order], seed)


def _attach_outcomes(spec: ScenarioSpec, X: np.ndarray, s: np.ndarray, seed: int) -> Dataset:
    n = X.shape[0]
    a = stream_rng(seed, STREAM_TREATMENT).integers(0, 2, size=n)
    eps = stream_rng(seed, STREAM_NOISE).normal(0.0, spec.noise_sd, size=n)
    y = np.empty(n)
    for src in range(1, NUM_SOURCES + 1):
        idx = s == src
        y[idx] = outcome_mean(spec, src, X[idx], a[idx]) + eps[idx]
    return Dataset(X=X, a=a, y=y, s=s)


def gen_target(
    spec: ScenarioSpec,
    n: int,
    delta_true: float,
    rho_true: SimplexVector,
    seed: int,
    with_labels: bool = False,
) -> Dataset:
    """Target sample: unconditional covariates, mixture outcomes when labeled."""
    if n < 1:
        raise InputError("n must be >= 1")
    X = truncated_standard_normal(stream_rng(seed, STREAM_COVARIATES), (n, spec.dim_p))
    if not with_labels:
        # Validate delta/rho eagerly even though they do not enter the draw.
        target_mixture_score(spec, X[:1], delta_true, rho_true)
        return Dataset(X=X)
    a = stream_rng(seed, STREAM_TREATMENT).integers(0, 2, size=n)
    eps = stream_rng(seed, STREAM_NOISE).normal(0.0, spec.noise_sd, size=n)
    g = target_mixture_score(spec, X, delta_true, rho_true)
    y = g * (2.0 * a - 1.0) + eps
    return Dataset(X=X, a=a, y=y)


def dirichlet_draws(k: int, alpha: float, n_draws: int, seed: int) -> np.ndarray:
    """(n_draws, k) symmetric Dirichlet draws; a fixed seed yields a prefix-stable stream."""
    if k < 2:
        raise ParameterError(f"k must be >= 2, got {k}")
    if alpha <= 0.0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    if n_draws < 1:
        raise InputError("n_draws must be >= 1")
    rng = stream_rng(seed, STREAM_DIRICHLET)
    draws = rng.dirichlet(np.full(k, alpha), size=n_draws)
    return draws / draws.sum(axis=1, keepdims=True)


def sample_dirichlet(k: int, alpha: float, seed: int) -> SimplexVector:
    """One draw from the symmetric Dirichlet, normalized onto the simplex exactly."""
    return SimplexVector.from_unnormalized(dirichlet_draws(k, alpha, 1, seed)[0])


def write_dataset_csv(ds: Dataset, path: str) -> None:
    """Write a dataset as x1..xp[,a][,y][,s] with round-trip float formatting."""
    header = [f"x{j + 1}" for j in range(ds.p)]
    if ds.a is not None:
        header.append("a")
    if ds.y is not None:
        header.append("y")
    if ds.s is not None:
        header.append("s")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.X[i]]
            if ds.a is not None:
                row.append(str(int(ds.a[i])))
            if ds.y is not None:
                row.append(repr(float(ds.y[i])))
            if ds.s is not None:
                row.append(str(int(ds.s[i])))
            writer.writerow(row)


def read_dataset_csv(path: str, allow_empty: bool = False) -> Dataset:
    """Read a dataset CSV; raises InputError naming the offending line."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        cols = [c.strip() for c in header]
        x_cols = [c for c in cols if c.startswith("x")]
        expected = [f"x{j + 1}" for j in range(len(x_cols))]
        if not x_cols or x_cols != expected:
            raise InputError(f"{path}: line 1: expected covariate headers x1..xp, got {cols}")
        extras = cols[len(x_cols):]
        allowed = [e for e in ("a", "y", "s") if e in extras]
        if extras != allowed:
            raise InputError(f"{path}: line 1: unexpected columns {extras} (allowed: a, y, s in order)")
        p = len(x_cols)
        X, a, y, s = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(cols):
                raise InputError(f"{path}: line {lineno}: expected {len(cols)} fields, got {len(row)}")
            try:
                X.append([float(v) for v in row[:p]])
                rest = row[p:]
                for name, value in zip(extras, rest):
                    if name == "a":
                        a.append(int(value))
                    elif name == "y":
                        y.append(float(value))
                    else:
                        s.append(int(value))
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from None
    if not X:
        if not allow_empty:
            raise InputError(f"{path}: no data rows")
        X = np.zeros((0, p))
    return Dataset(
        X=np.array(X),
        a=np.array(a) if "a" in extras else None,
        y=np.array(y) if "y" in extras else None,
        s=np.array(s) if "s" in extras else None,
    )
