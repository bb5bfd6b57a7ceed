"""Command line front end: simulate, fit, score, dr-eval, run-experiment.

The experiment runner wires the full pipeline per replication: generate
sources, an unlabeled target pool and a labeled calibration set; fit the
per-source outcome regressions and the membership model; fit each requested
policy; evaluate the worst-case policy value over Dirichlet mixture draws.
One CSV row per (replication, method), plus a sidecar JSON holding every
hyperparameter so row + sidecar regenerate the run exactly.
"""

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InputError, NumericError, ParameterError, PdroItrError
from .evaluation import (
    constant_propensity,
    doubly_robust_value,
    fit_logistic_propensity,
    naive_policy,
    worst_case_value,
)
from .membership_model import SoftmaxConfig, fit_softmax
from .nn_regressor import MlpConfig, estimate_source_cate, predict
from .pdro_learner import (
    DELTA_GRID_DEFAULT,
    NuisanceSet,
    OptConfig,
    PdroPolicy,
    fit_dro,
    fit_pdro,
    fit_rho,
    membership_matrix,
    policy_from_dict,
    policy_to_dict,
)
from .rng import STREAM_COVARIATES, stream_rng
from .simplex import SimplexVector
from .synthetic import (
    NUM_SOURCES,
    Dataset,
    gen_source,
    gen_source_natural,
    gen_target,
    read_dataset_csv,
    sample_dirichlet,
    scenario_spec,
    target_mixture_score,
    truncated_standard_normal,
    write_dataset_csv,
)

METHODS = ("pdro", "dro", "naive")
RESULT_COLUMNS = ("scenario", "method", "n", "delta_true", "rep", "policy_value", "worst_case_value", "seed")

# per-replication seed roles; replication r uses seed (base_seed + r) * 16 + role
ROLE_SOURCES = 0
ROLE_POOL = 1
ROLE_CALIBRATION = 2
ROLE_EVAL = 3
ROLE_RHO_TRUE = 4
ROLE_FIT_BASE = 5


@dataclass(frozen=True)
class ExperimentConfig:
    """Full experiment description; defaults mirror the benchmark protocol."""

    scenario: int = 1
    n_total: int = 2000
    delta_true: float = 0.75
    rho_true: Union[SimplexVector, str] = "dirichlet"
    reps: int = 200
    calibration_size: int = 25
    delta_grid: Tuple[float, ...] = DELTA_GRID_DEFAULT
    h_override: Optional[float] = None
    alpha_dirichlet: float = 1.0
    base_seed: int = 0
    methods: Tuple[str, ...] = METHODS
    output_path: str = "results.csv"
    n_test: int = 1000
    n_draws: int = 100
    jobs: int = 1
    unequal: bool = False

    def __post_init__(self):
        if self.scenario not in (1, 2, 3, 4):
            raise ParameterError(f"scenario must be in {{1,2,3,4}}, got {self.scenario}")
        domains = NUM_SOURCES + 1
        if self.n_total < domains or self.n_total % domains != 0:
            raise ParameterError(
                f"n_total must be a positive multiple of {domains} "
                f"(equal split over {NUM_SOURCES} sources + target), got {self.n_total}"
            )
        if isinstance(self.rho_true, str):
            if self.rho_true != "dirichlet":
                raise ParameterError(f"rho_true must be a weight vector or 'dirichlet', got {self.rho_true!r}")
        elif len(self.rho_true) != NUM_SOURCES:
            raise ParameterError(f"rho_true needs {NUM_SOURCES} entries, got {len(self.rho_true)}")
        if not 0.0 <= self.delta_true <= 1.0:
            raise ParameterError(f"delta_true must be in [0, 1], got {self.delta_true}")
        if self.reps < 1:
            raise ParameterError(f"reps must be >= 1, got {self.reps}")
        if self.calibration_size < 2:
            raise ParameterError(f"calibration_size must be >= 2, got {self.calibration_size}")
        if len(self.delta_grid) == 0 or any(not 0.0 <= d <= 1.0 for d in self.delta_grid):
            raise ParameterError(f"delta_grid must be nonempty with entries in [0, 1], got {self.delta_grid}")
        if self.h_override is not None and self.h_override <= 0.0:
            raise ParameterError(f"h_override must be positive, got {self.h_override}")
        if self.alpha_dirichlet <= 0.0:
            raise ParameterError(f"alpha_dirichlet must be positive, got {self.alpha_dirichlet}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or len(self.methods) == 0:
            raise ParameterError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")
        if self.n_test < 1 or self.n_draws < 1:
            raise ParameterError("n_test and n_draws must be >= 1")
        if self.jobs < 1:
            raise ParameterError(f"jobs must be >= 1, got {self.jobs}")

    @property
    def per_domain(self) -> int:
        return self.n_total // (NUM_SOURCES + 1)


def _config_to_meta(config: ExperimentConfig) -> dict:
    doc = {
        "scenario": config.scenario,
        "n_total": config.n_total,
        "delta_true": config.delta_true,
        "rho_true": "dirichlet"
        if isinstance(config.rho_true, str)
        else config.rho_true.weights.tolist(),
        "reps": config.reps,
        "calibration_size": config.calibration_size,
        "delta_grid": list(config.delta_grid),
        "h_override": config.h_override,
        "alpha_dirichlet": config.alpha_dirichlet,
        "base_seed": config.base_seed,
        "methods": list(config.methods),
        "output_path": config.output_path,
        "n_test": config.n_test,
        "n_draws": config.n_draws,
        "jobs": config.jobs,
        "unequal": config.unequal,
        "columns": list(RESULT_COLUMNS),
    }
    return doc


def _rep_rho_true(config: ExperimentConfig, rep: int) -> SimplexVector:
    if isinstance(config.rho_true, str):
        seed = (config.base_seed + rep) * 16 + ROLE_RHO_TRUE
        return sample_dirichlet(NUM_SOURCES, config.alpha_dirichlet, seed)
    return config.rho_true


def _rep_data(config: ExperimentConfig, rep: int) -> Tuple[Dataset, Dataset, Dataset, SimplexVector]:
    """Source, unlabeled target pool and calibration samples for one replication."""
    spec = scenario_spec(config.scenario)
    rep_seed = config.base_seed + rep
    rho_true = _rep_rho_true(config, rep)
    if config.unequal:
        sources = gen_source_natural(spec, NUM_SOURCES * config.per_domain, rep_seed * 16 + ROLE_SOURCES)
    else:
        sources = gen_source(spec, config.per_domain, rep_seed * 16 + ROLE_SOURCES)
    pool = gen_target(spec, config.per_domain, config.delta_true, rho_true, rep_seed * 16 + ROLE_POOL)
    calib = gen_target(
        spec,
        config.calibration_size,
        config.delta_true,
        rho_true,
        rep_seed * 16 + ROLE_CALIBRATION,
        with_labels=True,
    )
    return sources, pool, calib, rho_true


def _fit_nuisances(sources: Dataset, fit_seed_base: int) -> NuisanceSet:
    """Per-source arm regressions plus (for >1 source) the membership model."""
    if sources.s is None:
        raise InputError("training data needs a source label column s")
    labels = np.unique(sources.s)
    num_sources = len(labels)
    if labels.tolist() != list(range(1, num_sources + 1)):
        raise InputError(f"source labels must be 1..S, got {labels.tolist()}")
    cates = []
    for s in range(1, num_sources + 1):
        idx = sources.s == s
        subset = Dataset(X=sources.X[idx], a=sources.a[idx], y=sources.y[idx])
        cates.append(estimate_source_cate(subset, MlpConfig(seed=fit_seed_base + 2 * (s - 1))))
    membership = None
    if num_sources > 1:
        membership = fit_softmax(sources.X, sources.s, SoftmaxConfig(num_sources=num_sources))
    return NuisanceSet(cates=cates, membership=membership)


def _source_sizes(sources: Dataset, num_sources: int) -> List[int]:
    return [int((sources.s == s).sum()) for s in range(1, num_sources + 1)]


def _rep_worker(payload: Tuple[ExperimentConfig, int]) -> List[tuple]:
    """One replication end to end; returns one result row per method."""
    config, rep = payload
    spec = scenario_spec(config.scenario)
    rep_seed = config.base_seed + rep
    sources, pool, calib, rho_true = _rep_data(config, rep)
    nuisance = _fit_nuisances(sources, rep_seed * 16 + ROLE_FIT_BASE)
    pooled_X = np.vstack([sources.X, pool.X])

    policies = {}
    for method in config.methods:
        if method == "pdro":
            policies[method] = fit_pdro(
                pooled_X, nuisance, calib, h=config.h_override, grid=config.delta_grid
            )
        elif method == "dro":
            policies[method] = fit_dro(pooled_X, nuisance, h=config.h_override)
        else:
            policies[method] = naive_policy(nuisance, _source_sizes(sources, nuisance.num_sources))

    eval_seed = rep_seed * 16 + ROLE_EVAL
    X_test = truncated_standard_normal(
        stream_rng(eval_seed, STREAM_COVARIATES), (config.n_test, spec.dim_p)
    )
    g_true = target_mixture_score(spec, X_test, config.delta_true, rho_true)
    rows = []
    for method in config.methods:
        policy = policies[method]
        value = float(np.mean(2.0 * g_true * policy.decide_batch(X_test)))
        wc = worst_case_value(
            policy,
            spec,
            config.delta_true,
            n_test=config.n_test,
            n_draws=config.n_draws,
            alpha=config.alpha_dirichlet,
            seed=eval_seed,
        )
        rows.append(
            (
                config.scenario,
                method,
                config.n_total,
                repr(float(config.delta_true)),
                rep,
                repr(value),
                repr(wc),
                rep_seed,
            )
        )
    return rows


def run_experiment(config: ExperimentConfig, out=sys.stdout) -> List[dict]:
    """Run all replications, write the results CSV + meta JSON, print a summary.

    Returns one summary dict per method (mean / SD of the worst-case value
    and of the value at the true target mixture).
    """
    payloads = [(config, rep) for rep in range(config.reps)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            per_rep = list(pool.map(_rep_worker, payloads))
    else:
        per_rep = [_rep_worker(p) for p in payloads]
    rows = [row for rep_rows in per_rep for row in rep_rows]

    with open(config.output_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        writer.writerows(rows)
    meta_path = config.output_path + ".meta.json"
    with open(meta_path, "w") as fh:
        json.dump(_config_to_meta(config), fh, indent=2, sort_keys=True)
        fh.write("\n")

    summaries = []
    print(
        f"scenario={config.scenario} n={config.n_total} delta_true={config.delta_true} "
        f"reps={config.reps} draws={config.n_draws}",
        file=out,
    )
    print(f"{'method':<8}{'worst_case_mean':>16}{'worst_case_sd':>15}{'value_mean':>12}{'value_sd':>10}", file=out)
    for method in config.methods:
        wc = np.array([float(r[6]) for r in rows if r[1] == method])
        val = np.array([float(r[5]) for r in rows if r[1] == method])
        ddof = 1 if len(wc) > 1 else 0
        summary = {
            "method": method,
            "worst_case_mean": float(wc.mean()),
            "worst_case_sd": float(wc.std(ddof=ddof)),
            "value_mean": float(val.mean()),
            "value_sd": float(val.std(ddof=ddof)),
        }
        summaries.append(summary)
        print(
            f"{method:<8}{summary['worst_case_mean']:>16.4f}{summary['worst_case_sd']:>15.4f}"
            f"{summary['value_mean']:>12.4f}{summary['value_sd']:>10.4f}",
            file=out,
        )
    print(f"wrote {len(rows)} rows to {config.output_path} (meta: {meta_path})", file=out)
    return summaries


def _parse_rho(text: str) -> Union[SimplexVector, str]:
    if text == "dirichlet":
        return text
    try:
        weights = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ParameterError(f"rho must be 'dirichlet' or comma-separated weights, got {text!r}") from None
    return SimplexVector.from_unnormalized(weights)


def _parse_grid(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ParameterError(f"delta grid must be comma-separated numbers, got {text!r}") from None


def _parse_methods(text: str) -> Tuple[str, ...]:
    return tuple(m.strip() for m in text.split(",") if m.strip())


def _experiment_config_from_args(args) -> ExperimentConfig:
    base = {}
    if args.config is not None:
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{args.config}: invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise InputError(f"{args.config}: config must be a JSON object")
        known = set(ExperimentConfig.__dataclass_fields__)
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ParameterError(f"unknown config fields: {unknown}")
        base.update(doc)
    if "rho_true" in base and not isinstance(base["rho_true"], str):
        base["rho_true"] = SimplexVector.from_unnormalized(np.asarray(base["rho_true"], dtype=np.float64))
    if "delta_grid" in base:
        base["delta_grid"] = tuple(float(v) for v in base["delta_grid"])
    if "methods" in base:
        base["methods"] = tuple(base["methods"])

    overrides = {
        "scenario": args.scenario,
        "n_total": args.n_total,
        "delta_true": args.delta_true,
        "rho_true": None if args.rho_true is None else _parse_rho(args.rho_true),
        "reps": args.reps,
        "calibration_size": args.calibration_size,
        "delta_grid": None if args.delta_grid is None else _parse_grid(args.delta_grid),
        "h_override": args.h_override,
        "alpha_dirichlet": args.alpha_dirichlet,
        "base_seed": args.base_seed,
        "methods": None if args.methods is None else _parse_methods(args.methods),
        "output_path": args.output,
        "n_test": args.n_test,
        "n_draws": args.n_draws,
        "jobs": args.jobs,
        "unequal": True if args.unequal else None,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**base)


def _cmd_run_experiment(args) -> int:
    config = _experiment_config_from_args(args)
    run_experiment(config)
    return 0


def _cmd_simulate(args) -> int:
    config = ExperimentConfig(
        scenario=args.scenario,
        n_total=args.n_total,
        delta_true=args.delta_true,
        rho_true=_parse_rho(args.rho_true),
        calibration_size=args.calibration_size,
        alpha_dirichlet=args.alpha_dirichlet,
        base_seed=args.seed,
        unequal=bool(args.unequal),
    )
    sources, pool, calib, rho_true = _rep_data(config, rep=0)
    write_dataset_csv(sources, args.out_sources)
    print(f"wrote {sources.n} source rows to {args.out_sources}")
    if args.out_pool is not None:
        write_dataset_csv(pool, args.out_pool)
        print(f"wrote {pool.n} unlabeled target rows to {args.out_pool}")
    if args.out_calibration is not None:
        write_dataset_csv(calib, args.out_calibration)
        print(f"wrote {calib.n} calibration rows to {args.out_calibration}")
    print(f"rho_true={','.join(repr(float(w)) for w in rho_true.weights)}")
    return 0


def _cmd_fit(args) -> int:
    train = read_dataset_csv(args.train)
    missing = [c for c, col in (("a", train.a), ("y", train.y), ("s", train.s)) if col is None]
    if missing:
        raise InputError(f"{args.train}: line 1: training data is missing columns {missing}")
    nuisance = _fit_nuisances(train, args.seed * 16 + ROLE_FIT_BASE)
    pooled_X = train.X
    if args.pool is not None:
        pool = read_dataset_csv(args.pool)
        if pool.p != train.p:
            raise InputError(f"pool covariate dimension {pool.p} != training dimension {train.p}")
        pooled_X = np.vstack([train.X, pool.X])

    opt = OptConfig(steps=args.opt_steps, learning_rate=args.opt_lr)
    grid = DELTA_GRID_DEFAULT if args.delta_grid is None else _parse_grid(args.delta_grid)
    if args.method == "naive":
        policy = naive_policy(nuisance, _source_sizes(train, nuisance.num_sources))
    elif args.method == "dro":
        policy = fit_dro(pooled_X, nuisance, h=args.h_override, opt=opt)
    elif args.calibration is not None:
        calib = read_dataset_csv(args.calibration)
        if calib.p != train.p:
            raise InputError(f"calibration covariate dimension {calib.p} != training dimension {train.p}")
        policy = fit_pdro(pooled_X, nuisance, calib, h=args.h_override, grid=grid, opt=opt)
    else:
        # no calibration set: fix delta instead of tuning it
        rho = fit_rho(pooled_X, nuisance, args.delta, h=args.h_override, opt=opt)
        policy = PdroPolicy(delta=args.delta, rho=rho, nuisance=nuisance)

    with open(args.out, "w") as fh:
        json.dump(policy_to_dict(policy), fh)
        fh.write("\n")
    rho_text = ",".join(f"{w:.6f}" for w in policy.rho.weights)
    print(f"fitted {args.method} policy: delta={policy.delta} rho={rho_text} -> {args.out}")
    return 0


def _load_policy(path: str) -> PdroPolicy:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from None
    return policy_from_dict(doc)


def _cmd_score(args) -> int:
    policy = _load_policy(args.policy)
    data = read_dataset_csv(args.input, allow_empty=True)
    if data.p != policy.nuisance.input_dim:
        raise InputError(
            f"covariate dimension {data.p} does not match the policy ({policy.nuisance.input_dim})"
        )
    out_fh = open(args.out, "w", newline="") if args.out is not None else sys.stdout
    try:
        writer = csv.writer(out_fh, lineterminator="\n")
        writer.writerow(["decision", "score"])
        if data.n > 0:
            scores = policy.score_batch(data.X)
            for score in scores:
                writer.writerow([1 if score > 0.0 else 0, repr(float(score))])
    finally:
        if args.out is not None:
            out_fh.close()
    if args.out is not None:
        print(f"wrote {data.n} decisions to {args.out}")
    return 0


def _cmd_dr_eval(args) -> int:
    policy = _load_policy(args.policy)
    data = read_dataset_csv(args.data)
    if data.a is None or data.y is None:
        raise InputError(f"{args.data}: doubly robust evaluation needs a and y columns")
    mode = args.propensity
    clip_fraction = None
    if mode == "logistic":
        propensity = fit_logistic_propensity(data, clip=args.clip)
        p1 = np.array([propensity(1, x) for x in data.X])
        clip_fraction = float(np.mean((p1 <= args.clip) | (p1 >= 1.0 - args.clip)))
    elif mode.startswith("constant:"):
        propensity = constant_propensity(float(mode.split(":", 1)[1]))
    else:
        raise ParameterError(f"propensity mode must be 'constant:<p>' or 'logistic', got {mode!r}")

    # outcome models for the DR correction: the policy's own source models
    # combined under its mixture weights
    def fitted_arm(arm):
        def fn(X):
            X = np.asarray(X, dtype=np.float64)
            F = np.column_stack(
                [predict(sc.f1 if arm == 1 else sc.f0, X) for sc in policy.nuisance.cates]
            )
            W = policy.delta * membership_matrix(policy.nuisance, X) + (
                1.0 - policy.delta
            ) * policy.rho.weights
            return (W * F).sum(axis=1)

        return fn

    value = doubly_robust_value(policy, data, propensity, fitted_arm(1), fitted_arm(0))
    print(f"dr_value={value!r}")
    print(f"n={data.n}")
    print(f"propensity={mode}")
    if clip_fraction is not None:
        print(f"clip_fraction={clip_fraction!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdro-itr",
        description="Distributionally robust treatment rules from multi-source data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write synthetic benchmark datasets as CSV")
    sim.add_argument("--scenario", type=int, default=1)
    sim.add_argument("--n-total", type=int, default=2000, help="total size; split equally over sources + target")
    sim.add_argument("--delta-true", type=float, default=0.75)
    sim.add_argument("--rho-true", default="dirichlet", help="'dirichlet' or comma-separated weights")
    sim.add_argument("--calibration-size", type=int, default=25)
    sim.add_argument("--alpha-dirichlet", type=float, default=1.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--unequal", action="store_true", help="natural source sizes instead of equal quotas")
    sim.add_argument("--out-sources", required=True)
    sim.add_argument("--out-pool", default=None)
    sim.add_argument("--out-calibration", default=None)
    sim.set_defaults(func=_cmd_simulate)

    fit = sub.add_parser("fit", help="fit nuisances and a policy from labeled source CSV")
    fit.add_argument("--train", required=True, help="labeled source CSV with an s column")
    fit.add_argument("--pool", default=None, help="optional unlabeled target covariate CSV")
    fit.add_argument("--calibration", default=None, help="labeled target CSV for tuning delta")
    fit.add_argument("--method", choices=METHODS, default="pdro")
    fit.add_argument("--delta", type=float, default=0.5, help="fixed delta when no calibration set is given")
    fit.add_argument("--delta-grid", default=None)
    fit.add_argument("--h-override", type=float, default=None)
    fit.add_argument("--opt-steps", type=int, default=1000)
    fit.add_argument("--opt-lr", type=float, default=0.05)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", required=True, help="output policy JSON path")
    fit.set_defaults(func=_cmd_fit)

    score = sub.add_parser("score", help="apply a fitted policy to covariate rows")
    score.add_argument("--policy", required=True)
    score.add_argument("--input", required=True, help="covariate CSV (x1..xp)")
    score.add_argument("--out", default=None, help="output CSV; stdout when omitted")
    score.set_defaults(func=_cmd_score)

    dr = sub.add_parser("dr-eval", help="doubly robust policy value on a labeled CSV")
    dr.add_argument("--policy", required=True)
    dr.add_argument("--data", required=True, help="labeled CSV with a and y columns")
    dr.add_argument("--propensity", default="constant:0.5", help="'constant:<p>' or 'logistic'")
    dr.add_argument("--clip", type=float, default=0.01, help="propensity clip for logistic mode")
    dr.set_defaults(func=_cmd_dr_eval)

    run = sub.add_parser("run-experiment", help="replicate the synthetic benchmark end to end")
    run.add_argument("--config", default=None, help="JSON config; flags override its fields")
    run.add_argument("--scenario", type=int, default=None)
    run.add_argument("--n-total", type=int, default=None)
    run.add_argument("--delta-true", type=float, default=None)
    run.add_argument("--rho-true", default=None, help="'dirichlet' or comma-separated weights")
    run.add_argument("--reps", type=int, default=None)
    run.add_argument("--calibration-size", type=int, default=None)
    run.add_argument("--delta-grid", default=None)
    run.add_argument("--h-override", type=float, default=None)
    run.add_argument("--alpha-dirichlet", type=float, default=None)
    run.add_argument("--base-seed", type=int, default=None)
    run.add_argument("--methods", default=None, help="comma-separated subset of pdro,dro,naive")
    run.add_argument("--output", default=None)
    run.add_argument("--n-test", type=int, default=None)
    run.add_argument("--n-draws", type=int, default=None)
    run.add_argument("--jobs", type=int, default=None)
    run.add_argument("--unequal", action="store_true")
    run.set_defaults(func=_cmd_run_experiment)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except PdroItrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
