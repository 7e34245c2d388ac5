"""Numerical checks of the global-convergence theory.

Rank-condition grids, convexity maps, convergence constants, local radii,
norm equivalence and misspecification bounds. Every quantity here is
computed on a finite grid, so suprema are estimated from below and infima
from above.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import EvaluationError, InvalidInputError
from .model import objective, objective_hessian

DEFAULT_THRESHOLD = 1e-8
DEFAULT_RESOLUTION = 101


def as_grid(grid, param_dim):
    """Return grid nodes as an ``(n, d)`` array."""
    pts = np.asarray(grid, dtype=float)
    if pts.ndim <= 1:
        pts = pts.reshape(-1, 1) if param_dim == 1 else pts.reshape(1, -1)
    if pts.shape[1] != param_dim or pts.shape[0] == 0:
        raise InvalidInputError(f"grid must have shape (n, {param_dim}) with n >= 1")
    return pts


def box_grid(lower, upper, resolution=DEFAULT_RESOLUTION):
    """Tensor grid with ``resolution`` nodes per axis, first axis slowest."""
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _jacobians(model, nodes):
    """Jacobians at every node; failing nodes are dropped and counted."""
    keep, mats = [], []
    for i, theta in enumerate(nodes):
        try:
            mats.append(model.jac(theta))
            keep.append(i)
        except EvaluationError:
            pass
    if not keep:
        raise EvaluationError("Jacobian evaluation failed at every grid node")
    return np.array(keep), np.array(mats), len(nodes) - len(keep)


# ---------------------------------------------------------------------------
# Rank grids
# ---------------------------------------------------------------------------


@dataclass
class RankGridReport:
    """Grid of smallest singular values plus a positivity verdict.

    ``values`` is 1-d over nodes (just-identified) or ``n x n`` over ordered
    node pairs (over-identified). ``sign_change`` is set when the determinant
    of ``G(theta)`` or ``G(theta_i)' W G(theta_j)`` takes both signs on the
    grid: by continuity it then vanishes somewhere in between, which
    certifies failure even when no node lands on the singular set.
    """

    kind: str
    nodes: np.ndarray
    values: np.ndarray
    min_value: float
    argmin: tuple
    threshold: float = DEFAULT_THRESHOLD
    n_failed: int = 0
    sign_change: bool = False

    @property
    def verdict(self):
        return bool(self.min_value > self.threshold and not self.sign_change)

    def argmin_theta(self):
        return tuple(self.nodes[i].copy() for i in self.argmin)

    def summary(self):
        return {
            "kind": self.kind,
            "n_nodes": int(self.nodes.shape[0]),
            "param_dim": int(self.nodes.shape[1]),
            "min_value": self.min_value,
            "argmin": [self.nodes[i].tolist() for i in self.argmin],
            "threshold": self.threshold,
            "sign_change": self.sign_change,
            "n_failed": self.n_failed,
            "verdict": "holds" if self.verdict else "fails",
        }


def _finish(kind, nodes, values, threshold, n_failed, sign_change=False):
    flat = int(np.nanargmin(values))
    idx = np.unravel_index(flat, values.shape)
    return RankGridReport(
        kind=kind,
        nodes=nodes,
        values=values,
        min_value=float(values[idx]),
        argmin=tuple(int(i) for i in idx),
        threshold=threshold,
        n_failed=n_failed,
        sign_change=sign_change,
    )


def _sign_change(det):
    tol = 1e-12 * float(np.max(np.abs(det)))
    return bool(np.any(det > tol) and np.any(det < -tol))


def rank_grid_just_identified(model, grid, threshold=DEFAULT_THRESHOLD):
    """``sigma_min[G(theta)]`` at every node of ``grid`` (square Jacobian)."""
    if model.moment_dim != model.param_dim:
        raise InvalidInputError("just-identified rank grid needs moment_dim == param_dim")
    nodes = as_grid(grid, model.param_dim)
    keep, G, n_failed = _jacobians(model, nodes)
    values = np.linalg.svd(G, compute_uv=False)[:, -1]
    return _finish(
        "just_identified", nodes[keep], values, threshold, n_failed, _sign_change(np.linalg.det(G))
    )


def pair_products(G, W):
    """``A[i, j] = G_i' W G_j`` for a stack ``G`` of shape ``(n, m, d)``."""
    WG = np.einsum("ab,jbd->jad", W, G)
    return np.einsum("iac,jad->ijcd", G, WG)


def rank_grid_over_identified(model, w, grid, threshold=DEFAULT_THRESHOLD):
    """``sigma_min[G(theta_i)' W G(theta_j)]`` over all ordered node pairs."""
    nodes = as_grid(grid, model.param_dim)
    keep, G, n_failed = _jacobians(model, nodes)
    A = pair_products(G, w.matrix)
    values = np.linalg.svd(A, compute_uv=False)[..., -1]
    sign_change = _sign_change(np.linalg.det(A))
    return _finish("over_identified", nodes[keep], values, threshold, n_failed, sign_change)


# ---------------------------------------------------------------------------
# Convexity map
# ---------------------------------------------------------------------------


@dataclass
class ConvexityMap:
    nodes: np.ndarray
    lambda_min: np.ndarray
    convention: str
    n_failed: int = 0

    @property
    def convex_on_grid(self):
        return bool(np.all(self.lambda_min > 0.0))

    @property
    def both_signs(self):
        return bool(np.any(self.lambda_min > 0.0) and np.any(self.lambda_min < 0.0))


def convexity_map(model, w, grid, convention="double"):
    """Smallest Hessian eigenvalue of the objective at each node.

    ``double`` reports the Hessian of ``g'Wg``; ``half`` that of
    ``Q = g'Wg / 2``.
    """
    nodes = as_grid(grid, model.param_dim)
    keep, lam = [], []
    for i, theta in enumerate(nodes):
        try:
            H = objective_hessian(model, w, theta, convention)
        except EvaluationError:
            continue
        keep.append(i)
        lam.append(np.linalg.eigvalsh(H)[0])
    if not keep:
        raise EvaluationError("Hessian evaluation failed at every grid node")
    return ConvexityMap(nodes[keep], np.array(lam), convention, len(nodes) - len(keep))


# ---------------------------------------------------------------------------
# Constants, radii and bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceConstants:
    """Constants entering the convergence results.

    ``lambda_lower`` and ``lambda_upper`` are the extreme eigenvalues of
    ``G'WG`` over the grid (norm-equivalence constants); ``lipschitz_grad`` is
    the Lipschitz constant of the gradient of ``Q``.
    """

    sigma_lower: float
    sigma_upper: float
    lipschitz: float
    lambda_w_lower: float = 1.0
    lambda_w_upper: float = 1.0
    lambda_lower: Optional[float] = None
    lambda_upper: Optional[float] = None
    lipschitz_grad: Optional[float] = None
    n_failed: int = 0

    def __post_init__(self):
        if not 0.0 < self.sigma_lower <= self.sigma_upper:
            raise InvalidInputError("need 0 < sigma_lower <= sigma_upper")
        if self.lipschitz < 0.0:
            raise InvalidInputError("Lipschitz constant must be >= 0")
        if not 0.0 < self.lambda_w_lower <= self.lambda_w_upper:
            raise InvalidInputError("need 0 < lambda_w_lower <= lambda_w_upper")
        if (
            self.lambda_lower is not None
            and self.lambda_upper is not None
            and self.lambda_lower > self.lambda_upper
        ):
            raise InvalidInputError("need lambda_lower <= lambda_upper")

    @property
    def kappa_w(self):
        return self.lambda_w_upper / self.lambda_w_lower


def _pairwise_max_slope(nodes, values):
    """``max ||v_i - v_j|| / ||x_i - x_j||`` over node pairs (spectral norm for matrices)."""
    best = 0.0
    flat = values.ndim == 2
    for i in range(len(nodes) - 1):
        dx = np.linalg.norm(nodes[i + 1 :] - nodes[i], axis=1)
        diff = values[i + 1 :] - values[i]
        if flat:
            dv = np.linalg.norm(diff, axis=1)
        elif diff.shape[-1] == 1:
            dv = np.linalg.norm(diff[..., 0], axis=1)
        else:
            dv = np.linalg.norm(diff, ord=2, axis=(1, 2))
        ok = dx > 0.0
        if np.any(ok):
            best = max(best, float(np.max(dv[ok] / dx[ok])))
    return best


def estimate_constants(model, w, grid):
    """Grid estimates of the convergence constants.

    ``sigma_lower``/``sigma_upper`` are the grid extremes of the smallest and
    largest singular values of ``G``; ``lipschitz`` is the largest pairwise
    slope of ``G`` (spectral norm) and ``lipschitz_grad`` that of ``G'Wg``.
    Grid extremes are optimistic: the true infimum can be lower and the true
    suprema higher.
    """
    nodes = as_grid(grid, model.param_dim)
    if nodes.shape[0] < 2:
        raise InvalidInputError("need at least two grid nodes")
    keep, G, n_failed = _jacobians(model, nodes)
    nodes = nodes[keep]
    sv = np.linalg.svd(G, compute_uv=False)
    M = np.einsum("iad,ab,ibe->ide", G, w.matrix, G)
    lam = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, 1, 2)))
    grads = np.array([objective(model, w, t).grad for t in nodes])
    lw_lo, lw_hi = w.eigenvalue_bounds
    sigma_lower = float(sv[:, -1].min())
    if sigma_lower <= 0.0:
        raise InvalidInputError("Jacobian is rank deficient on the grid; no sigma_lower > 0")
    return ConvergenceConstants(
        sigma_lower=sigma_lower,
        sigma_upper=float(sv[:, 0].max()),
        lipschitz=_pairwise_max_slope(nodes, G),
        lambda_w_lower=lw_lo,
        lambda_w_upper=lw_hi,
        lambda_lower=float(lam[:, 0].min()),
        lambda_upper=float(lam[:, -1].max()),
        lipschitz_grad=_pairwise_max_slope(nodes, grads),
        n_failed=n_failed,
    )


@dataclass(frozen=True)
class LocalRadius:
    r_tilde: float
    r_n: float
    note: str = ""

    @property
    def guaranteed(self):
        return self.r_n > 0.0


def local_radius(constants, gamma, gamma_tilde, g_hat_norm, r_g=math.inf):
    """Radius of guaranteed local convergence.

    ``r_tilde = (1 - gamma_tilde/gamma) sigma sqrt(lw_lo/lw_hi) / L
    - |g_hat|_W / (sigma sqrt(lw_lo))`` and ``r_n = min(r_tilde, r_g)``. A
    non-positive value means no neighbourhood is guaranteed.
    """
    if not 0.0 < gamma_tilde <= gamma <= 1.0:
        raise InvalidInputError("need 0 < gamma_tilde <= gamma <= 1")
    if g_hat_norm < 0.0:
        raise InvalidInputError("g_hat_norm must be >= 0")
    c = constants
    penalty = g_hat_norm / (c.sigma_lower * math.sqrt(c.lambda_w_lower))
    if c.lipschitz == 0.0:
        return LocalRadius(math.inf, r_g, "L = 0 (linear moments): no local restriction")
    lead = (
        (1.0 - gamma_tilde / gamma)
        * c.sigma_lower
        * math.sqrt(c.lambda_w_lower / c.lambda_w_upper)
        / c.lipschitz
    )
    r_tilde = lead - penalty
    note = "" if r_tilde > 0.0 else "no guaranteed neighbourhood"
    return LocalRadius(r_tilde, min(r_tilde, r_g), note)


def misspecification_bound(constants):
    """Largest misspecification levels ``(phi_local, phi_global)``.

    ``phi_local = sigma^2 lw_lo / (L sqrt(lw_hi))`` and ``phi_global`` is half
    of it. Linear moments (``L = 0``) allow any level.
    """
    c = constants
    if c.lipschitz == 0.0:
        return math.inf, math.inf
    phi_local = c.sigma_lower**2 * c.lambda_w_lower / (c.lipschitz * math.sqrt(c.lambda_w_upper))
    return phi_local, phi_local / 2.0


@dataclass
class NormEquivalence:
    lambda_lower: float
    lambda_upper: float
    correction: float  # C * |g(theta_hat)|_W
    lower_bound: np.ndarray
    middle: np.ndarray
    upper_bound: np.ndarray
    violations: list = field(default_factory=list)


def norm_equivalence_check(model, w, theta_hat, grid, rel_tol=1e-10):
    """Check ``(lam_lo - C|g_hat|) d^2 <= 2[Q - Q_hat] <= (lam_hi + C|g_hat|) d^2``.

    ``d = ||theta - theta_hat||``, ``lam_lo``/``lam_hi`` are the grid extremes
    of the eigenvalues of ``G'WG`` and ``C = 2 sqrt(lw_hi) L``. Returns the
    indices of nodes that violate either side (beyond round-off).
    """
    nodes = as_grid(grid, model.param_dim)
    const = estimate_constants(model, w, nodes)
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    base = objective(model, w, theta_hat)
    C = 2.0 * math.sqrt(const.lambda_w_upper) * const.lipschitz
    corr = C * base.weighted_norm
    d2 = np.sum((nodes - theta_hat) ** 2, axis=1)
    middle = np.array([2.0 * (objective(model, w, t).q - base.q) for t in nodes])
    lower = (const.lambda_lower - corr) * d2
    upper = (const.lambda_upper + corr) * d2
    slack = rel_tol * np.maximum(1.0, np.abs(middle))
    bad = np.flatnonzero((lower > middle + slack) | (middle > upper + slack))
    return NormEquivalence(
        const.lambda_lower, const.lambda_upper, corr, lower, middle, upper, bad.tolist()
    )


# ---------------------------------------------------------------------------
# Global convergence under misspecification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeasibilityConditions:
    delta: float
    c1: float
    c2: float
    c3: float
    lhs: float
    rhs: float
    gamma_ok: bool
    misspecification_ok: bool
    inequality_ok: bool

    @property
    def feasible(self):
        return self.gamma_ok and self.misspecification_ok and self.inequality_ok


def feasibility_conditions(gamma, phi, constants, rho=1.0, eps=1e-4):
    """Evaluate the three conditions of the global result under misspecification.

    * ``gamma_ok``: ``gamma`` in (0, 1) and ``0 < gamma c1/2 - gamma^2 c2 < 1``.
    * ``misspecification_ok``: ``phi < sigma^2 lw_lo / (2 L sqrt(lw_hi))``,
      equivalently ``Delta > 0``.
    * ``inequality_ok``: the displayed quadratic inequality linking ``phi``
      and ``gamma``.

    ``constants.lipschitz_grad`` supplies ``L_Q`` (1 when unset).
    """
    if phi < 0.0:
        raise InvalidInputError("phi must be >= 0")
    if not 0.0 < eps < 1.0:
        raise InvalidInputError("eps must lie in (0, 1)")
    c = constants
    s_lo, s_hi, L = c.sigma_lower, c.sigma_upper, c.lipschitz
    lw_lo, lw_hi, kappa = c.lambda_w_lower, c.lambda_w_upper, c.kappa_w
    l_q = 1.0 if c.lipschitz_grad is None else c.lipschitz_grad

    delta = 0.5 * (s_lo**2 * lw_lo - 2.0 * L * math.sqrt(lw_hi) * phi)
    c1 = (2.0 / 3.0) * rho**2 * ((s_lo / s_hi) ** 2 / kappa) ** 2
    c2 = l_q * (s_hi * math.sqrt(lw_hi) / (s_lo**2 * lw_lo)) ** 2
    c3 = 2.0 * s_hi * math.sqrt(lw_hi)

    contraction = gamma * c1 / 2.0 - gamma**2 * c2
    gamma_ok = 0.0 < gamma < 1.0 and 0.0 < contraction < 1.0
    misspecification_ok = delta > 0.0

    if contraction != 0.0 and delta != 0.0:
        lhs = (delta * gamma**2 * c2 + 2.0 * gamma * c3**2 / c1) / (contraction * delta**2) * phi**2
    else:
        lhs = math.inf
    if L == 0.0:
        rhs = math.inf
    else:
        rhs = ((1.0 - eps) * s_lo / (L * math.sqrt(kappa)) - phi / (s_lo * math.sqrt(lw_lo))) ** 2
    return FeasibilityConditions(
        delta, c1, c2, c3, lhs, rhs, gamma_ok, misspecification_ok, bool(lhs < rhs)
    )


def theorem3_feasible(gamma, phi, constants, rho=1.0, eps=1e-4):
    """True iff every condition of :func:`feasibility_conditions` holds."""
    return feasibility_conditions(gamma, phi, constants, rho, eps).feasible


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _theta_columns(prefix, d):
    return [prefix] if d == 1 else [f"{prefix}_{k + 1}" for k in range(d)]


def write_rank_grid_csv(report, path):
    """Long format: ``theta1,theta2,sigma_min`` (pairs) or ``theta,sigma_min`` (nodes).

    Multi-dimensional nodes expand to ``theta1_1..theta1_d,theta2_1..``.
    """
    d = report.nodes.shape[1]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        if report.kind == "over_identified":
            out.writerow(_theta_columns("theta1", d) + _theta_columns("theta2", d) + ["sigma_min"])
            n = report.nodes.shape[0]
            for i in range(n):
                a = [repr(float(v)) for v in report.nodes[i]]
                for j in range(n):
                    b = [repr(float(v)) for v in report.nodes[j]]
                    out.writerow(a + b + [repr(float(report.values[i, j]))])
        else:
            out.writerow(_theta_columns("theta", d) + ["sigma_min"])
            for node, v in zip(report.nodes, report.values):
                out.writerow([repr(float(x)) for x in node] + [repr(float(v))])


def write_convexity_csv(cmap, path):
    """``theta_1..theta_d,lambda_min``."""
    d = cmap.nodes.shape[1]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow([f"theta_{k + 1}" for k in range(d)] + ["lambda_min"])
        for node, v in zip(cmap.nodes, cmap.lambda_min):
            out.writerow([repr(float(x)) for x in node] + [repr(float(v))])


def write_json(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
