"""Derivative-free comparison baselines: Nelder-Mead, grid search,
simulated annealing and multi-start."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, List, Optional

import numpy as np
from scipy import optimize

from .errors import EvaluationError, InvalidInputError, MomentOptError
from .optimizers import IterationRecord, IterationTrace, Termination


def _value(f, x):
    try:
        v = float(f(x))
    except EvaluationError:
        raise
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise EvaluationError(f"objective failed: {exc}", theta=x) from exc
    if not math.isfinite(v):
        raise EvaluationError("non-finite objective value", theta=x)
    return v


# ---------------------------------------------------------------------------
# Nelder-Mead
# ---------------------------------------------------------------------------


@dataclass
class Simplex:
    """``d + 1`` vertices kept sorted by objective value (best first)."""

    vertices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.vertices = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        n, d = self.vertices.shape
        if n != d + 1 or self.values.size != n:
            raise InvalidInputError(f"a simplex in R^{d} needs {d + 1} vertices and values")
        self.sort()

    @classmethod
    def from_vertices(cls, f, vertices):
        V = np.atleast_2d(np.asarray(vertices, dtype=float))
        d = V.shape[1]
        if V.shape[0] != d + 1:
            raise InvalidInputError(f"need {d + 1} vertices in R^{d}")
        volume = abs(np.linalg.det(V[1:] - V[0])) / math.factorial(d)
        if not volume > 1e-14:
            raise InvalidInputError("simplex vertices are affinely dependent")
        return cls(V, np.array([_value(f, v) for v in V]))

    @classmethod
    def from_point(cls, f, theta1, rel_step=0.05):
        """``theta1`` plus ``theta1 + delta_j e_j`` with ``delta_j = rel_step * max(1, |theta1_j|)``."""
        x = np.atleast_1d(np.asarray(theta1, dtype=float))
        delta = rel_step * np.maximum(1.0, np.abs(x))
        return cls.from_vertices(f, np.vstack([x, x + np.diag(delta)]))

    @property
    def dim(self):
        return self.vertices.shape[1]

    def sort(self):
        order = np.argsort(self.values, kind="stable")
        self.vertices = self.vertices[order]
        self.values = self.values[order]

    def centroid(self):
        """Average of the best ``d`` vertices."""
        return self.vertices[:-1].mean(axis=0)

    def replace_worst(self, x, fx):
        self.vertices[-1] = x
        self.values[-1] = fx
        self.sort()

    def spread(self):
        """Population standard deviation of the vertex values."""
        return float(np.sqrt(np.mean((self.values - self.values.mean()) ** 2)))


def reflect(centroid, worst, alpha=1.0):
    return centroid + alpha * (centroid - worst)


def expand(reflected, centroid, gamma=2.0):
    return reflected + (gamma - 1.0) * (reflected - centroid)


def reduce_toward(centroid, worst, beta=0.5):
    return centroid + beta * (worst - centroid)


def contract(best, vertex, beta_prime=0.5):
    return best + beta_prime * (vertex - best)


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    simplex: Simplex
    best_values: List[float]
    n_iter: int
    converged: bool
    trace: IterationTrace


def nelder_mead(
    f, simplex0, alpha=1.0, gamma=2.0, beta=0.5, beta_prime=0.5, tol=1e-8, max_iter=5000
):
    """Nelder-Mead with reflection, expansion, reduction and contraction.

    Stops once the standard deviation of the ``d + 1`` vertex values falls
    below ``tol`` or after ``max_iter`` transformations.

    Parameters
    ----------
    f : callable
        Objective; non-finite values raise :class:`EvaluationError`.
    simplex0 : Simplex
        Initial simplex (see :meth:`Simplex.from_point`).
    alpha, gamma, beta, beta_prime : float
        Reflection, expansion, reduction and contraction coefficients.
    """
    s = Simplex(simplex0.vertices.copy(), simplex0.values.copy())
    trace = IterationTrace(method="nelder-mead")
    best_values = [float(s.values[0])]
    trace.append(
        IterationRecord(0, s.vertices[0].copy(), float(s.values[0]), 0.0, math.nan, "start")
    )
    converged = False
    k = 0
    while k < max_iter:
        if s.spread() < tol:
            converged = True
            break
        k += 1
        prev_best = s.vertices[0].copy()
        c = s.centroid()
        xr = reflect(c, s.vertices[-1], alpha)
        fr = _value(f, xr)
        if fr < s.values[0]:
            xe = expand(xr, c, gamma)
            fe = _value(f, xe)
            op = "expand"
            if fe < fr:
                s.replace_worst(xe, fe)
            else:
                s.replace_worst(xr, fr)
        elif fr <= s.values[-2]:
            s.replace_worst(xr, fr)
            op = "reflect"
        else:
            if fr < s.values[-1]:
                s.vertices[-1], s.values[-1] = xr, fr
            xs = reduce_toward(c, s.vertices[-1], beta)
            fs = _value(f, xs)
            if fs < s.values[-1]:
                s.replace_worst(xs, fs)
                op = "reduce"
            else:
                best = s.vertices[0]
                for j in range(1, s.dim + 1):
                    s.vertices[j] = contract(best, s.vertices[j], beta_prime)
                    s.values[j] = _value(f, s.vertices[j])
                s.sort()
                op = "contract"
        best_values.append(float(s.values[0]))
        trace.append(
            IterationRecord(
                k,
                s.vertices[0].copy(),
                float(s.values[0]),
                float(np.linalg.norm(s.vertices[0] - prev_best)),
                math.nan,
                op,
            )
        )
    trace.termination = Termination.CONVERGED if converged else Termination.MAX_ITER
    return NelderMeadResult(
        s.vertices[0].copy(), float(s.values[0]), s, best_values, k, converged, trace
    )


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------


@dataclass
class GridSearchResult:
    x: np.ndarray
    fun: float
    index: int
    values: np.ndarray  # nan where the evaluation failed
    n_failed: int


def grid_search(f, grid):
    """Exhaustive minimum of ``f`` over ``grid``; ties go to the lowest index."""
    pts = np.asarray(grid, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise InvalidInputError("grid is empty")
    values = np.full(pts.shape[0], np.nan)
    for i, x in enumerate(pts):
        try:
            values[i] = _value(f, x)
        except EvaluationError:
            pass
    n_failed = int(np.isnan(values).sum())
    if n_failed == pts.shape[0]:
        raise EvaluationError("every grid evaluation failed")
    i = int(np.nanargmin(values))
    return GridSearchResult(pts[i].copy(), float(values[i]), i, values, n_failed)


def refined_grid_search(f, lower, upper, n=2001, xatol=1e-12):
    """Scalar minimizer: grid search, then a bounded Brent search in the winning cell pair.

    Both stages are derivative-free. The refinement is confined to the two
    grid cells adjacent to the grid winner, so it cannot jump basins.
    Returns ``(x_refined, grid_result)``.
    """
    grid = np.linspace(lower, upper, n)
    res = grid_search(f, grid)
    i = res.index
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n - 1)]

    def scalar(t):
        try:
            return _value(f, np.array([t]))
        except EvaluationError:
            return math.inf

    opt = optimize.minimize_scalar(
        scalar, bounds=(a, b), method="bounded", options={"xatol": xatol}
    )
    x = float(opt.x) if opt.fun <= res.fun else float(res.x[0])
    return x, res


def grid_points_required(p, eps, lipschitz=1.0):
    """Packing lower bound ``(eps / L)^(-p)`` on grid size for accuracy ``eps``."""
    if p < 1 or eps <= 0.0 or lipschitz <= 0.0:
        raise InvalidInputError("need p >= 1, eps > 0 and L > 0")
    return math.ceil(round((eps / lipschitz) ** (-p), 9))


# ---------------------------------------------------------------------------
# Simulated annealing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnealingSchedule:
    """Temperatures ``T_l = t1 / log(l)`` (``rule="log"``) or ``t1 * 0.95**l``.

    The proposal covariance is ``eta_l * I`` with ``eta_l = eta_scale * T_l``.
    """

    t1: float = 1.0
    iterations: int = 1000
    rule: str = "log"
    eta_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.t1 <= 0.0 or self.eta_scale <= 0.0:
            raise InvalidInputError("t1 and eta_scale must be positive")
        if self.rule not in ("log", "geometric"):
            raise InvalidInputError(f"unknown temperature rule {self.rule!r}")
        if self.iterations < 1:
            raise InvalidInputError("need at least one iteration")

    def temperature(self, step):
        if step < 2:
            raise InvalidInputError("temperatures are defined for step >= 2")
        if self.rule == "log":
            return self.t1 / math.log(step)
        return self.t1 * 0.95**step

    def eta(self, step):
        return self.eta_scale * self.temperature(step)


def metropolis_accept(q_new, q_old, temperature, u):
    """Accept iff ``u <= exp(-(q_new - q_old) / T)``; always true when ``q`` does not rise."""
    delta = q_new - q_old
    if delta <= 0.0:
        return True
    return u <= math.exp(-delta / temperature)


@dataclass
class AnnealingResult:
    x: np.ndarray
    fun: float
    trace: IterationTrace
    n_accepted: int
    n_failed: int


def simulated_annealing(f, theta1, schedule):
    """Random-walk Metropolis annealing; returns the best point ever visited.

    Proposals whose evaluation fails count as rejections.
    """
    rng = np.random.default_rng(schedule.seed)
    x = np.atleast_1d(np.asarray(theta1, dtype=float)).copy()
    fx = _value(f, x)
    best_x, best_f = x.copy(), fx
    trace = IterationTrace(method="simulated-annealing")
    trace.append(IterationRecord(1, x.copy(), fx, 0.0, math.nan, "start"))
    n_accepted = n_failed = 0
    for step in range(2, schedule.iterations + 1):
        T = schedule.temperature(step)
        proposal = x + math.sqrt(schedule.eta(step)) * rng.standard_normal(x.size)
        u = rng.random()
        try:
            fp = _value(f, proposal)
        except EvaluationError:
            n_failed += 1
            trace.append(IterationRecord(step, x.copy(), fx, 0.0, math.nan, "failed"))
            continue
        if metropolis_accept(fp, fx, T, u):
            moved = float(np.linalg.norm(proposal - x))
            x, fx = proposal, fp
            n_accepted += 1
            status = "accepted"
            if fx < best_f:
                best_x, best_f = x.copy(), fx
        else:
            moved, status = 0.0, "rejected"
        trace.append(IterationRecord(step, x.copy(), fx, moved, math.nan, status))
    trace.termination = Termination.MAX_ITER
    return AnnealingResult(best_x, best_f, trace, n_accepted, n_failed)


# ---------------------------------------------------------------------------
# Multi-start
# ---------------------------------------------------------------------------


@dataclass
class StartOutcome:
    start: np.ndarray
    result: Any = None
    error: Optional[str] = None

    @property
    def crashed(self):
        return self.error is not None or bool(getattr(self.result, "crashed", False))


@dataclass
class MultiStartResult:
    outcomes: List[StartOutcome]
    best: Optional[StartOutcome] = None
    estimates: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    objective_values: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_crashes(self):
        return sum(o.crashed for o in self.outcomes)

    @property
    def mean(self):
        return self.estimates.mean(axis=0)

    @property
    def std(self):
        return (
            self.estimates.std(axis=0, ddof=1)
            if len(self.estimates) > 1
            else np.zeros(self.estimates.shape[1])
        )


def multi_start(inner, starts, workers=1):
    """Run ``inner(start)`` for every start and keep the best successful result.

    ``inner`` returns any object with ``x`` and ``fun`` attributes (traces and
    the baseline results qualify). A result whose ``crashed`` attribute is
    true, or an exception from ``inner``, is recorded as a crash. Results keep
    the order of ``starts`` whatever the number of workers.
    """
    pts = np.asarray(starts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise InvalidInputError("no starting values")

    def one(x):
        try:
            return StartOutcome(x.copy(), inner(x.copy()))
        except (MomentOptError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            return StartOutcome(x.copy(), None, f"{type(exc).__name__}: {exc}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, pts))
    else:
        outcomes = [one(x) for x in pts]

    ok = [o for o in outcomes if not o.crashed and o.result is not None]
    if not ok:
        raise EvaluationError(f"all {len(outcomes)} starts failed")
    estimates = np.array([np.atleast_1d(o.result.x) for o in ok])
    values = np.array([o.result.fun for o in ok])
    best = ok[int(np.argmin(values))]
    return MultiStartResult(outcomes, best, estimates, values)
