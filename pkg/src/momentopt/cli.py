"""Command-line interface.

Subcommands::

    estimate        run one or more optimizers from one or more starts
    rank-grid       rank-condition grid (CSV + JSON verdict)
    convexity-map   smallest Hessian eigenvalue over a grid
    replicate       canned replication recipes with pass/fail checks
    sobol-dump      write a shifted Sobol point set
    compare         several methods, including derivative-free baselines, on one model

Settings can come from a TOML file (``--config``); command-line flags win.
The default output directory is ``$MOMENTOPT_OUTPUT_DIR`` or ``./momentopt-out``.
"""

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import baselines, diagnostics, models, optimizers, quasirandom
from .errors import ConfigError, MomentOptError
from .model import Weighting, objective

OUTPUT_ENV = "MOMENTOPT_OUTPUT_DIR"
DEFAULT_OUTPUT = "momentopt-out"
MODELS = ("ma1-calibrated", "ma1", "gaussian", "cube-root")
RECIPES = ("table1", "gaussian-hessian", "rank-grids", "gamma-sweep")
BASELINE_METHODS = ("nelder-mead", "annealing", "grid")

# seeded p = 12 sample used by the rank-grid recipe
RANK_GRID_SEED = 1

CALIBRATED_GN_ITERATES = (-0.560, -0.529, -0.504, -0.484, -0.466, -0.451, -0.438, -0.427)
CALIBRATED_NR_K1 = -0.689
GAMMA_SWEEP = (0.1, 0.2, 0.4, 0.6, 0.8, 1.0)

EXIT_OK, EXIT_FAILED_CHECKS, EXIT_CONFIG = 0, 1, 2

# config keys recognised per TOML table; top-level keys are also accepted
CONFIG_KEYS = {
    "model": {"name", "p", "n", "seed", "theta_true", "theta_hat", "ybar", "weighting"},
    "optimizer": {
        "method",
        "methods",
        "gamma",
        "lm_lambda",
        "max_iter",
        "step_tol",
        "grad_tol",
        "project_to_bounds",
        "global_step",
        "global_seed",
    },
    "starts": {"theta0", "sobol", "lower", "upper", "seed"},
    "grid": {"resolution", "lower", "upper", "threshold", "convention"},
    "output": {"dir", "workers"},
}
FLAT_ALIASES = {
    ("model", "name"): "model",
    ("optimizer", "method"): "method",
    ("optimizer", "methods"): "method",
    ("optimizer", "max_iter"): "iters",
    ("starts", "sobol"): "sobol_starts",
    ("starts", "seed"): "start_seed",
    ("starts", "lower"): "start_lower",
    ("starts", "upper"): "start_upper",
    ("grid", "lower"): "grid_lower",
    ("grid", "upper"): "grid_upper",
    ("output", "dir"): "output_dir",
}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def load_config(path):
    """Read a TOML config into a flat ``{flag_name: value}`` dict."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    flat = {}
    for table, value in raw.items():
        if isinstance(value, dict):
            if table not in CONFIG_KEYS:
                raise ConfigError(f"{path}: unknown table [{table}]")
            for key, v in value.items():
                if key not in CONFIG_KEYS[table]:
                    raise ConfigError(f"{path}: unknown field {table}.{key}")
                flat[FLAT_ALIASES.get((table, key), key)] = v
        else:
            known = set().union(*CONFIG_KEYS.values()) | set(FLAT_ALIASES.values())
            if table not in known:
                raise ConfigError(f"{path}: unknown field {table}")
            flat[table] = value
    return flat


def merge_config(args, defaults):
    """Fill every flag left at ``None`` from the config file, then from ``defaults``."""
    file_cfg = load_config(args.config) if getattr(args, "config", None) else {}
    for key, value in {**defaults, **file_cfg}.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _floats(value, name):
    """Parse ``"a,b"``, a number or a list into a list of floats."""
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, str):
        value = [v for v in value.replace(";", ",").split(",") if v.strip()]
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected numbers, got {value!r}") from exc


def _starts_list(value, d):
    """Starting values from flags (list of strings) or config (list of numbers/lists)."""
    if value is None:
        return []
    out = []
    items = value if isinstance(value, (list, tuple)) else [value]
    if d == 1 and all(isinstance(v, (int, float)) for v in items):
        return [[float(v)] for v in items]
    if d > 1 and len(items) == d and all(isinstance(v, (int, float)) for v in items):
        items = [items]
    for item in items:
        x = _floats(item, "theta0")
        if len(x) != d:
            raise ConfigError(f"theta0: expected {d} values per start, got {item!r}")
        out.append(x)
    return out


def output_dir(args):
    path = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc}") from exc
    return path


def build_model(args):
    """Resolve model flags to ``(model, weighting, info)``."""
    name = args.model
    if name not in MODELS:
        raise ConfigError(f"unknown model {name!r}; choose from {', '.join(MODELS)}")
    weighting = args.weighting or "identity"
    info = {"model": name}
    if name == "ma1-calibrated":
        theta_hat = models.CALIBRATED_THETA_HAT if args.theta_hat is None else float(args.theta_hat)
        setup = models.ma1_calibrated(theta_hat)
        info["theta_hat"] = theta_hat
        return setup.model, setup.weighting, info
    if name == "ma1":
        theta_true = _floats(args.theta_true, "theta_true") or [-0.5]
        try:
            spec = models.MA1Spec(
                theta_true=theta_true[0],
                n=int(args.n if args.n is not None else 200),
                p=int(args.p if args.p is not None else 1),
                seed=int(args.seed if args.seed is not None else 0),
            )
            setup = models.ma1_moment_model(spec, weighting)
        except MomentOptError as exc:
            raise ConfigError(str(exc)) from exc
        info.update(
            p=spec.p, n=spec.n, seed=spec.seed, theta_true=spec.theta_true, weighting=weighting
        )
        info["beta_hat"] = setup.beta_hat.tolist()
        return setup.model, setup.weighting, info
    if name == "gaussian":
        theta_true = _floats(args.theta_true, "theta_true") or [0.0, 1.0]
        if len(theta_true) != 2:
            raise ConfigError("gaussian theta_true needs two values (mu, sigma2)")
        model = models.gaussian_moment_model(theta_true=theta_true)
        info["theta_true"] = theta_true
        return model, Weighting.identity(3), info
    ybar = 0.0 if args.ybar is None else float(args.ybar)
    info["ybar"] = ybar
    return models.cube_root_model(ybar), Weighting.identity(1), info


def _box(args, model, lower_key, upper_key):
    lo = _floats(getattr(args, lower_key), lower_key)
    hi = _floats(getattr(args, upper_key), upper_key)
    lo = model.lower if lo is None else np.array(lo)
    hi = model.upper if hi is None else np.array(hi)
    if len(lo) != model.param_dim or len(hi) != model.param_dim:
        raise ConfigError(f"{lower_key}/{upper_key} need {model.param_dim} values each")
    return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


def _methods(value):
    if value is None:
        return ["gn"]
    items = value if isinstance(value, (list, tuple)) else [value]
    out = []
    for item in items:
        out.extend(m.strip() for m in str(item).split(",") if m.strip())
    return out


def _starts(args, model):
    starts = _starts_list(args.theta0, model.param_dim)
    if args.sobol_starts:
        lo, hi = _box(args, model, "start_lower", "start_upper")
        seed = 0 if args.start_seed is None else int(args.start_seed)
        starts.extend(quasirandom.shifted_sobol_box(int(args.sobol_starts), lo, hi, seed).tolist())
    if not starts:
        raise ConfigError("empty start list: give --theta0 or --sobol-starts")
    return np.array(starts, dtype=float)


def _optimizer_config(args, method, model):
    global_step = None
    if args.global_step:
        global_step = optimizers.GlobalStepConfig(
            tuple(model.lower), tuple(model.upper), seed=int(args.global_seed or 0)
        )
    try:
        return optimizers.OptimizerConfig(
            method=method,
            gamma=float(args.gamma if args.gamma is not None else 0.1),
            lm_lambda=float(args.lm_lambda or 0.0),
            max_iter=int(args.iters if args.iters is not None else 100),
            step_tol=float(args.step_tol if args.step_tol is not None else 1e-10),
            grad_tol=float(args.grad_tol if args.grad_tol is not None else 1e-8),
            project_to_bounds=bool(args.project_to_bounds),
            global_step=global_step,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _run_one(model, w, theta0, cfg):
    if cfg.global_step is not None:
        return optimizers.run_global(model, w, theta0, cfg)
    return optimizers.run(model, w, theta0, cfg)


def _summaries(per_method):
    """Crash counts and average/std over successful runs, per method."""
    out = {}
    for method, traces in per_method.items():
        ok = [t for t in traces if not t.crashed]
        est = np.array([np.asarray(t.x) for t in ok]) if ok else np.empty((0, 0))
        out[method] = {
            "runs": len(traces),
            "crashes": len(traces) - len(ok),
            "avg": est.mean(axis=0).tolist() if len(ok) else None,
            "std": (
                (est.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros(est.shape[1])).tolist()
                if len(ok)
                else None
            ),
            "estimates": [np.asarray(t.x).tolist() if t.x is not None else None for t in traces],
            "final_q": [t.fun for t in traces],
            "terminations": [t.termination.value if t.termination else None for t in traces],
        }
    return out


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_estimate(args):
    model, w, info = build_model(args)
    starts = _starts(args, model)
    methods = _methods(args.method)
    cfgs = [_optimizer_config(args, m, model) for m in methods]
    out = output_dir(args)
    jobs = [(cfg, i, x0) for cfg in cfgs for i, x0 in enumerate(starts)]
    traces = _map(lambda job: _run_one(model, w, job[2], job[0]), jobs, args.workers)
    per_method = {}
    for (cfg, i, _), trace in zip(jobs, traces):
        optimizers.write_trace_csv(trace, out / f"trace_{cfg.method}_{i:03d}.csv")
        per_method.setdefault(cfg.method, []).append(trace)
    summary = {
        **info,
        "gamma": cfgs[0].gamma,
        "max_iter": cfgs[0].max_iter,
        "starts": starts.tolist(),
        "methods": _summaries(per_method),
    }
    diagnostics.write_json(summary, out / "summary.json")
    for method, s in summary["methods"].items():
        print(f"{method}: runs={s['runs']} crashes={s['crashes']} avg={s['avg']}")
    return EXIT_OK


def _grid(args, model):
    lo, hi = _box(args, model, "grid_lower", "grid_upper")
    res = int(args.resolution if args.resolution is not None else diagnostics.DEFAULT_RESOLUTION)
    if res < 1:
        raise ConfigError("resolution must be >= 1")
    return diagnostics.box_grid(lo, hi, res)


def cmd_rank_grid(args):
    model, w, info = build_model(args)
    grid = _grid(args, model)
    threshold = float(
        args.threshold if args.threshold is not None else diagnostics.DEFAULT_THRESHOLD
    )
    if args.kind == "just" or (
        args.kind is None and not model.over_identified and w.kind == "identity"
    ):
        report = diagnostics.rank_grid_just_identified(model, grid, threshold)
    else:
        report = diagnostics.rank_grid_over_identified(model, w, grid, threshold)
    out = output_dir(args)
    diagnostics.write_rank_grid_csv(report, out / "rank_grid.csv")
    diagnostics.write_json({**info, **report.summary()}, out / "rank_grid.json")
    print(
        f"rank grid ({report.kind}): min={report.min_value:.6g} verdict={report.summary()['verdict']}"
    )
    return EXIT_OK


def cmd_convexity_map(args):
    model, w, info = build_model(args)
    grid = _grid(args, model)
    cmap = diagnostics.convexity_map(model, w, grid, args.convention or "double")
    out = output_dir(args)
    diagnostics.write_convexity_csv(cmap, out / "convexity_map.csv")
    payload = {
        **info,
        "convention": cmap.convention,
        "min_lambda": float(cmap.lambda_min.min()),
        "max_lambda": float(cmap.lambda_min.max()),
        "convex_on_grid": cmap.convex_on_grid,
        "n_failed": cmap.n_failed,
    }
    diagnostics.write_json(payload, out / "convexity_map.json")
    print(
        f"convexity map: lambda_min in [{payload['min_lambda']:.6g}, {payload['max_lambda']:.6g}]"
    )
    return EXIT_OK


def cmd_sobol_dump(args):
    dim = int(args.dim)
    n = int(args.count)
    lo = _floats(args.grid_lower, "lower") or [0.0] * dim
    hi = _floats(args.grid_upper, "upper") or [1.0] * dim
    try:
        pts = quasirandom.random_shift(quasirandom.sobol(dim, n), args.seed)
        mapped = quasirandom.map_to_box(pts, lo, hi)
    except MomentOptError as exc:
        raise ConfigError(str(exc)) from exc
    out = output_dir(args)
    with open(out / "sobol.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x_{k + 1}" for k in range(dim)])
        writer.writerows([[repr(float(v)) for v in row] for row in mapped])
    diagnostics.write_json(
        {"dim": dim, "count": n, "seed": args.seed, "shift": pts.shift.tolist()}, out / "sobol.json"
    )
    print(f"wrote {n} points to {out / 'sobol.csv'}")
    return EXIT_OK


def _baseline(method, model, w, x0, args):
    def q(theta):
        return objective(model, w, theta).q

    if method == "nelder-mead":
        res = baselines.nelder_mead(
            q, baselines.Simplex.from_point(q, x0), max_iter=int(args.iters or 1000)
        )
        return res.trace
    if method == "annealing":
        schedule = baselines.AnnealingSchedule(
            iterations=int(args.iters or 1000), seed=int(args.seed or 0)
        )
        res = baselines.simulated_annealing(q, x0, schedule)
        trace = res.trace
        trace.records.append(
            optimizers.IterationRecord(
                trace.n_iter + 1, res.x.copy(), res.fun, 0.0, math.nan, "best"
            )
        )
        return trace
    res = baselines.grid_search(
        q, diagnostics.box_grid(model.lower, model.upper, 2001 if model.param_dim == 1 else 101)
    )
    trace = optimizers.IterationTrace(method="grid")
    trace.append(optimizers.IterationRecord(0, res.x.copy(), res.fun, 0.0, math.nan, "best"))
    trace.termination = optimizers.Termination.CONVERGED
    return trace


def cmd_compare(args):
    model, w, info = build_model(args)
    starts = _starts(args, model)
    methods = _methods(args.method if args.method is not None else "gd,gn,nr,lm,bfgs")
    out = output_dir(args)
    jobs = [(m, i, x0) for m in methods for i, x0 in enumerate(starts)]

    def work(job):
        m, _, x0 = job
        if m in BASELINE_METHODS:
            try:
                return _baseline(m, model, w, x0, args)
            except MomentOptError as exc:
                trace = optimizers.IterationTrace(method=m)
                trace.termination = optimizers.Termination.EVALUATION_ERROR
                trace.message = str(exc)
                return trace
        return _run_one(model, w, x0, _optimizer_config(args, m, model))

    for m in methods:
        if m not in optimizers.METHODS + BASELINE_METHODS:
            raise ConfigError(f"unknown method {m!r}")
    traces = _map(work, jobs, args.workers)
    per_method = {}
    header = None
    rows = []
    for (m, i, _), trace in zip(jobs, traces):
        trace.method = m
        per_method.setdefault(m, []).append(trace)
        if trace.records:
            h, r = optimizers.trace_rows(trace, include_method=True)
            header = header or ["start", *h]
            rows.extend([str(i), *row] for row in r)
    if header:
        with open(out / "compare_traces.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    summary = {**info, "starts": starts.tolist(), "methods": _summaries(per_method)}
    diagnostics.write_json(summary, out / "compare.json")
    for m, s in summary["methods"].items():
        print(f"{m}: runs={s['runs']} crashes={s['crashes']} avg={s['avg']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Replication recipes
# ---------------------------------------------------------------------------


def _check(name, expected, actual, tol, relation="abs"):
    """One expected-vs-actual cell. ``relation`` is ``abs``, ``le`` or ``ge``."""
    if relation == "abs":
        ok = abs(actual - expected) <= tol
    elif relation == "le":
        ok = actual <= expected
    else:
        ok = actual >= expected
    return {
        "check": name,
        "expected": expected,
        "actual": actual,
        "tol": tol,
        "relation": relation,
        "pass": bool(ok),
    }


def recipe_table1():
    setup = models.ma1_calibrated()
    gn = optimizers.run(
        setup.model, setup.weighting, [-0.6], optimizers.OptimizerConfig("gn", 0.1, max_iter=99)
    )
    nr = optimizers.run(
        setup.model, setup.weighting, [-0.6], optimizers.OptimizerConfig("nr", 0.1, max_iter=99)
    )
    th = gn.thetas[:, 0]
    checks = [
        _check(f"gn k={k}", e, float(th[k]), 2e-3)
        for k, e in enumerate(CALIBRATED_GN_ITERATES, start=1)
    ]
    checks.append(_check("gn final", models.CALIBRATED_THETA_HAT, float(gn.x[0]), 1e-3))
    checks.append(_check("nr k=1", CALIBRATED_NR_K1, float(nr.thetas[1, 0]), 2e-3))
    checks.append(_check("nr final", -0.99, float(nr.x[0]), 0.0, "le"))
    return checks


def recipe_gaussian_hessian():
    from .model import objective_hessian

    model = models.gaussian_moment_model(theta_true=(0.0, 1.0))
    w = Weighting.identity(3)
    checks = []
    for theta, expected in (((0.0, 1.0), (74.0, 2.0)), ((0.0, 0.5), (2.0, -7.0))):
        lam = np.linalg.eigvalsh(objective_hessian(model, w, theta, "double"))[::-1]
        for j, (e, a) in enumerate(zip(expected, lam)):
            checks.append(_check(f"eig{j + 1} at {theta}", e, float(a), 1e-8))
    return checks


def recipe_rank_grids():
    grid = np.linspace(-0.9, 0.9, diagnostics.DEFAULT_RESOLUTION)
    checks = []
    for weighting, want in (("identity", True), ("optimal", False)):
        setup = models.ma1_moment_model(models.MA1Spec(p=12, seed=RANK_GRID_SEED), weighting)
        rep = diagnostics.rank_grid_over_identified(setup.model, setup.weighting, grid)
        checks.append(_check(f"ma1 p=12 {weighting} verdict", float(want), float(rep.verdict), 0.0))
    gm = models.gaussian_moment_model(theta_true=(0.0, 1.0))
    rep = diagnostics.rank_grid_over_identified(
        gm, Weighting.identity(3), diagnostics.box_grid([-1.0, 0.1], [1.0, 2.0], 11)
    )
    checks.append(_check("gaussian min sigma", 1.0, rep.min_value, 1e-10))
    return checks


def recipe_gamma_sweep():
    setup = models.ma1_calibrated()
    oracle, _ = baselines.refined_grid_search(
        lambda t: objective(setup.model, setup.weighting, t).q, *models.MA1_BOUNDS
    )
    checks = []
    for gamma in GAMMA_SWEEP:
        cfg = optimizers.OptimizerConfig("gn", gamma, max_iter=2000, step_tol=1e-13, grad_tol=1e-12)
        trace = optimizers.run(setup.model, setup.weighting, [-0.6], cfg)
        checks.append(_check(f"gn gamma={gamma}", oracle, float(trace.x[0]), 1e-6))
    return checks


RECIPE_FUNCS = {
    "table1": recipe_table1,
    "gaussian-hessian": recipe_gaussian_hessian,
    "rank-grids": recipe_rank_grids,
    "gamma-sweep": recipe_gamma_sweep,
}


def cmd_replicate(args):
    if args.recipe not in RECIPE_FUNCS:
        raise ConfigError(f"unknown recipe {args.recipe!r}; choose from {', '.join(RECIPES)}")
    checks = RECIPE_FUNCS[args.recipe]()
    out = output_dir(args)
    stem = f"replicate_{args.recipe.replace('-', '_')}"
    with open(out / f"{stem}.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["check", "expected", "actual", "tol", "relation", "pass"])
        for c in checks:
            writer.writerow(
                [
                    c["check"],
                    repr(c["expected"]),
                    repr(c["actual"]),
                    repr(c["tol"]),
                    c["relation"],
                    int(c["pass"]),
                ]
            )
    passed = all(c["pass"] for c in checks)
    diagnostics.write_json(
        {"recipe": args.recipe, "pass": passed, "checks": checks}, out / f"{stem}.json"
    )
    for c in checks:
        print(
            f"{'PASS' if c['pass'] else 'FAIL'}  {c['check']}: expected {c['expected']}, got {c['actual']:.6g}"
        )
    return EXIT_OK if passed else EXIT_FAILED_CHECKS


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="TOML config file; command-line flags override it")
    p.add_argument(
        "--output-dir",
        dest="output_dir",
        help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})",
    )
    p.add_argument("--workers", type=int, default=None, help="concurrent runs (default 1)")


def _add_model(p):
    p.add_argument("--model", choices=MODELS, default=None)
    p.add_argument("--weighting", choices=("identity", "optimal"), default=None)
    p.add_argument("--p", type=int, default=None, help="AR order of the auxiliary model")
    p.add_argument("--n", type=int, default=None, help="sample size")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--theta-true", dest="theta_true", default=None, help="comma-separated")
    p.add_argument("--theta-hat", dest="theta_hat", type=float, default=None)
    p.add_argument("--ybar", type=float, default=None)


def _add_optimizer(p, default_methods):
    p.add_argument(
        "--method",
        action="append",
        default=None,
        help=f"one of {default_methods}; repeatable or comma-separated",
    )
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--lm-lambda", dest="lm_lambda", type=float, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--step-tol", dest="step_tol", type=float, default=None)
    p.add_argument("--grad-tol", dest="grad_tol", type=float, default=None)
    p.add_argument(
        "--project-to-bounds", dest="project_to_bounds", action="store_true", default=None
    )
    p.add_argument("--global-step", dest="global_step", action="store_true", default=None)
    p.add_argument("--global-seed", dest="global_seed", type=int, default=None)
    p.add_argument(
        "--theta0",
        action="append",
        default=None,
        help="start; repeatable, comma-separated per start",
    )
    p.add_argument("--sobol-starts", dest="sobol_starts", type=int, default=None)
    p.add_argument("--start-seed", dest="start_seed", type=int, default=None)
    p.add_argument("--start-lower", dest="start_lower", default=None)
    p.add_argument("--start-upper", dest="start_upper", default=None)


def _add_grid(p):
    p.add_argument("--resolution", type=int, default=None, help="nodes per axis (default 101)")
    p.add_argument("--lower", dest="grid_lower", default=None)
    p.add_argument("--upper", dest="grid_upper", default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="momentopt", description="GMM optimizers and convergence diagnostics"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="run optimizers and write traces")
    _add_common(p)
    _add_model(p)
    _add_optimizer(p, ", ".join(optimizers.METHODS))
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("rank-grid", help="rank-condition grid")
    _add_common(p)
    _add_model(p)
    _add_grid(p)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--kind", choices=("just", "over"), default=None)
    p.set_defaults(func=cmd_rank_grid)

    p = sub.add_parser("convexity-map", help="smallest Hessian eigenvalue over a grid")
    _add_common(p)
    _add_model(p)
    _add_grid(p)
    p.add_argument("--convention", choices=("half", "double"), default=None)
    p.set_defaults(func=cmd_convexity_map)

    p = sub.add_parser("replicate", help="replication recipes with pass/fail checks")
    _add_common(p)
    p.add_argument("recipe", choices=RECIPES)
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("sobol-dump", help="write a randomly shifted Sobol point set")
    _add_common(p)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lower", dest="grid_lower", default=None)
    p.add_argument("--upper", dest="grid_upper", default=None)
    p.set_defaults(func=cmd_sobol_dump)

    p = sub.add_parser("compare", help="several methods on one model")
    _add_common(p)
    _add_model(p)
    _add_optimizer(p, ", ".join(optimizers.METHODS + BASELINE_METHODS))
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        merge_config(args, {"model": "ma1-calibrated"})
        return args.func(args)
    except ConfigError as exc:
        print(f"momentopt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
