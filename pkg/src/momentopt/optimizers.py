"""Fixed-learning-rate iterations ``theta <- theta - gamma * P_k * G'Wg``.

The conditioning matrix ``P_k`` selects the method:

* ``gd``   identity (gradient descent)
* ``gn``   ``(G'WG)^{-1}`` (Gauss-Newton)
* ``nr``   inverse exact Hessian of ``Q`` (Newton-Raphson)
* ``lm``   ``(G'WG + lambda I)^{-1}`` (Levenberg-Marquardt)
* ``bfgs`` rank-two approximation of the inverse Hessian

:func:`run_global` adds a global step that compares each local iterate with
the next point of a predetermined dense sequence.
"""

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import numerics, quasirandom
from .errors import ConfigError, EvaluationError, InvalidInputError, SingularConditioningError
from .model import full_hessian, gn_matrix, objective

METHODS = ("gd", "gn", "nr", "lm", "bfgs")


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    STEP_FAILURE = "step_failure"
    EVALUATION_ERROR = "evaluation_error"
    LEFT_BOUNDS = "left_bounds"


@dataclass(frozen=True)
class GlobalStepConfig:
    """Candidate sequence for :func:`run_global`: shifted Sobol points in a box."""

    lower: tuple
    upper: tuple
    length: Optional[int] = None  # defaults to max_iter
    seed: int = 0

    def candidates(self, max_iter):
        n = self.length if self.length is not None else max_iter
        return quasirandom.shifted_sobol_box(n, self.lower, self.upper, seed=self.seed)


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "gn"
    gamma: float = 0.1
    lm_lambda: float = 0.0
    max_iter: int = 100
    step_tol: float = 1e-10
    grad_tol: float = 1e-8
    project_to_bounds: bool = False
    stop_outside_bounds: bool = False
    nr_require_pd: bool = False
    global_step: Optional[GlobalStepConfig] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"learning rate gamma must be in (0, 1], got {self.gamma}")
        if self.lm_lambda < 0.0:
            raise ConfigError("lm_lambda must be >= 0")
        if self.max_iter < 0:
            raise ConfigError("max_iter must be >= 0")
        if self.step_tol <= 0.0 or self.grad_tol <= 0.0:
            raise ConfigError("tolerances must be positive")


@dataclass(frozen=True)
class IterationRecord:
    k: int
    theta: np.ndarray
    q: float
    step_norm: float
    grad_norm: float
    status: str = "ok"
    global_accepted: bool = False
    out_of_bounds: bool = False


@dataclass
class IterationTrace:
    """Iterates of one optimizer run plus how it ended."""

    method: str
    records: List[IterationRecord] = field(default_factory=list)
    termination: Optional[Termination] = None
    message: str = ""
    left_bounds: bool = False

    def append(self, record):
        if self.records and record.k <= self.records[-1].k:
            raise InvalidInputError("iteration index must increase")
        record.theta.setflags(write=False)
        self.records.append(record)
        if record.out_of_bounds:
            self.left_bounds = True

    @property
    def thetas(self):
        return np.array([r.theta for r in self.records])

    @property
    def qs(self):
        return np.array([r.q for r in self.records])

    @property
    def x(self):
        return self.records[-1].theta if self.records else None

    @property
    def fun(self):
        return self.records[-1].q if self.records else math.nan

    @property
    def n_iter(self):
        return self.records[-1].k if self.records else 0

    @property
    def converged(self):
        return self.termination == Termination.CONVERGED

    @property
    def crashed(self):
        return self.termination == Termination.EVALUATION_ERROR

    @property
    def n_global_accepted(self):
        return sum(r.global_accepted for r in self.records)


def conditioning_matrix(method, model, w, theta, lm_lambda=0.0):
    """The matrix whose inverse is ``P_k`` for ``gd``, ``gn``, ``nr`` and ``lm``."""
    if method == "gd":
        return np.eye(model.param_dim)
    if method == "gn":
        return gn_matrix(model, w, theta)
    if method == "lm":
        if lm_lambda < 0.0:
            raise InvalidInputError("lm_lambda must be >= 0")
        return gn_matrix(model, w, theta) + lm_lambda * np.eye(model.param_dim)
    if method == "nr":
        return full_hessian(model, w, theta)
    raise InvalidInputError(f"no closed-form conditioning matrix for method {method!r}")


def bfgs_update(P, s, y, tol=1e-12):
    """Rank-two BFGS update of an inverse-Hessian approximation.

    Returns ``(P_new, updated)``. Pairs with ``s'y <= tol * |s| |y|`` (including
    negative curvature) leave ``P`` unchanged and report ``updated=False``.
    """
    P = numerics.as_matrix(P, "P")
    s = numerics.as_vector(s, "s")
    y = numerics.as_vector(y, "y")
    sy = float(s @ y)
    if sy <= tol * np.linalg.norm(s) * np.linalg.norm(y):
        return P.copy(), False
    rho = 1.0 / sy
    V = np.eye(s.size) - rho * np.outer(s, y)
    P_new = V @ P @ V.T + rho * np.outer(s, s)
    return 0.5 * (P_new + P_new.T), True


def _direction(cfg, model, w, theta, report, P):
    if cfg.method == "bfgs":
        return P @ report.grad
    if cfg.method == "gd":
        return report.grad
    A = conditioning_matrix(cfg.method, model, w, theta, cfg.lm_lambda)
    if cfg.method == "nr" and not cfg.nr_require_pd:
        return numerics.solve_symmetric(A, report.grad)
    return numerics.solve_spd(A, report.grad)


def _record(k, theta, report, step_norm, status="ok", accepted=False):
    return IterationRecord(
        k=k,
        theta=np.array(theta, dtype=float),
        q=report.q,
        step_norm=step_norm,
        grad_norm=float(np.linalg.norm(report.grad)),
        status=status,
        global_accepted=accepted,
        out_of_bounds=report.out_of_bounds,
    )


def _local_step(cfg, model, w, theta, report, P):
    step = -cfg.gamma * _direction(cfg, model, w, theta, report, P)
    new = theta + step
    status = "ok"
    if cfg.project_to_bounds and not model.in_bounds(new):
        new = np.clip(new, model.lower, model.upper)
        status = "projected"
    return new, status


def run(model, w, theta0, cfg):
    """Iterate from ``theta0`` until convergence, failure or ``max_iter``.

    Never raises for numerical trouble: evaluation errors and singular
    conditioning systems end the trace with the matching termination code.
    """
    return _iterate(model, w, theta0, cfg, candidates=None)


def run_global(model, w, theta0, cfg, candidates=None):
    """Gauss-Newton-style iteration with a global step.

    After each local step the next candidate ``candidates[k-1]`` is evaluated;
    if its weighted moment norm is strictly smaller than that of the local
    iterate, it replaces it. A failed local step (singular system or
    evaluation error) falls back to the candidate.
    """
    if candidates is None:
        if cfg.global_step is None:
            raise ConfigError("run_global needs candidates or cfg.global_step")
        candidates = cfg.global_step.candidates(cfg.max_iter)
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if candidates.shape[1] != model.param_dim:
        candidates = candidates.reshape(-1, model.param_dim)
    if candidates.shape[0] < cfg.max_iter:
        raise ConfigError(
            f"need at least max_iter={cfg.max_iter} candidates, got {candidates.shape[0]}"
        )
    return _iterate(model, w, theta0, cfg, candidates=candidates)


def _iterate(model, w, theta0, cfg, candidates):
    trace = IterationTrace(method=cfg.method if candidates is None else f"{cfg.method}+global")
    theta = np.array(theta0, dtype=float).reshape(-1)
    try:
        report = objective(model, w, theta)
    except EvaluationError as exc:
        trace.termination = Termination.EVALUATION_ERROR
        trace.message = f"k=0: {exc}"
        return trace
    trace.append(_record(0, theta, report, 0.0, status="start"))
    P = np.eye(model.param_dim)

    for k in range(1, cfg.max_iter + 1):
        if np.linalg.norm(report.grad) <= cfg.grad_tol:
            trace.termination = Termination.CONVERGED
            trace.message = "gradient below grad_tol"
            return trace

        local, local_report, status, failure = None, None, "ok", None
        try:
            local, status = _local_step(cfg, model, w, theta, report, P)
            local_report = objective(model, w, local)
        except SingularConditioningError as exc:
            failure = (Termination.STEP_FAILURE, exc)
        except EvaluationError as exc:
            failure = (Termination.EVALUATION_ERROR, exc)

        accepted = False
        if candidates is not None:
            cand = candidates[k - 1]
            try:
                cand_report = objective(model, w, cand)
            except EvaluationError as exc:
                cand_report = None
                if failure is not None:
                    failure = (Termination.EVALUATION_ERROR, exc)
            if cand_report is not None and (
                failure is not None or cand_report.weighted_norm < local_report.weighted_norm
            ):
                local, local_report, accepted, failure = cand, cand_report, True, None
                status = "global"

        if failure is not None:
            trace.termination, exc = failure
            trace.message = f"k={k}: {exc}"
            return trace

        step_norm = float(np.linalg.norm(local - theta))
        if cfg.method == "bfgs":
            P, updated = bfgs_update(P, local - theta, local_report.grad - report.grad)
            if not updated and status == "ok":
                status = "update-skipped"
        theta, report = np.array(local, dtype=float), local_report
        trace.append(_record(k, theta, report, step_norm, status, accepted))

        if report.out_of_bounds and cfg.stop_outside_bounds:
            trace.termination = Termination.LEFT_BOUNDS
            trace.message = f"k={k}: iterate left the parameter box"
            return trace
        if step_norm <= cfg.step_tol:
            trace.termination = Termination.CONVERGED
            trace.message = "step below step_tol"
            return trace

    trace.termination = Termination.MAX_ITER
    return trace


TRACE_STATUS_COLUMNS = ("Q", "step_norm", "grad_norm", "status", "global_accepted")


def trace_rows(trace, include_method=False):
    d = trace.records[0].theta.size if trace.records else 0
    header = ["k", *[f"theta_{i + 1}" for i in range(d)], *TRACE_STATUS_COLUMNS]
    if include_method:
        header.append("method")
    rows = []
    for r in trace.records:
        row = [
            str(r.k),
            *[repr(float(v)) for v in r.theta],
            repr(float(r.q)),
            repr(float(r.step_norm)),
            repr(float(r.grad_norm)),
            r.status,
            "1" if r.global_accepted else "0",
        ]
        if include_method:
            row.append(trace.method)
        rows.append(row)
    return header, rows


def write_trace_csv(trace, path, include_method=False):
    """Write ``k,theta_1..theta_d,Q,step_norm,grad_norm,status,global_accepted``."""
    header, rows = trace_rows(trace, include_method)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
