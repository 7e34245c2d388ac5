"""Moment-condition models, weighting matrices and the GMM objective.

The objective carries a factor one half::

    Q(theta) = 0.5 * g(theta)' W g(theta)

so that its gradient is ``G' W g`` and its Gauss-Newton curvature is
``G' W G``. Diagnostics that need to report Hessians of ``g' W g`` (without
the half) go through :func:`objective_hessian` with ``convention="double"``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import numerics
from .errors import EvaluationError, InvalidInputError

CONVENTIONS = ("half", "double")


@dataclass(frozen=True)
class MomentModel:
    """A sample-moment map ``theta -> g(theta)`` with optional derivatives.

    Parameters
    ----------
    moments : callable
        Maps a length-``param_dim`` vector to a length-``moment_dim`` vector.
    param_dim, moment_dim : int
        Dimensions ``d`` and ``m``; ``m >= d`` is required.
    bounds : array_like, shape (d, 2)
        Closed box for the parameter space.
    jacobian : callable, optional
        Analytic ``m x d`` Jacobian. Central differences are used otherwise.
    second_derivatives : callable, optional
        Analytic ``m x d x d`` array of moment Hessians, used for the exact
        objective Hessian. Finite differences of the gradient otherwise.
    """

    moments: Callable
    param_dim: int
    moment_dim: int
    bounds: np.ndarray
    jacobian: Optional[Callable] = None
    second_derivatives: Optional[Callable] = None
    name: str = "model"

    def __post_init__(self):
        if self.param_dim < 1 or self.moment_dim < self.param_dim:
            raise InvalidInputError(
                f"need moment_dim >= param_dim >= 1, got m={self.moment_dim}, d={self.param_dim}"
            )
        b = np.asarray(self.bounds, dtype=float).reshape(self.param_dim, 2)
        if np.any(b[:, 0] >= b[:, 1]):
            raise InvalidInputError("bounds must have lower < upper in every coordinate")
        object.__setattr__(self, "bounds", b)

    @property
    def lower(self):
        return self.bounds[:, 0]

    @property
    def upper(self):
        return self.bounds[:, 1]

    @property
    def over_identified(self):
        return self.moment_dim > self.param_dim

    def in_bounds(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def _check_theta(self, theta):
        theta = numerics.as_vector(theta, "theta")
        if theta.size != self.param_dim:
            raise InvalidInputError(f"theta has length {theta.size}, expected {self.param_dim}")
        return theta

    def evaluate(self, theta):
        theta = self._check_theta(theta)
        try:
            g = np.atleast_1d(np.asarray(self.moments(theta), dtype=float))
        except EvaluationError:
            raise
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise EvaluationError(f"{self.name}: moments failed: {exc}", theta=theta) from exc
        if g.shape != (self.moment_dim,):
            raise InvalidInputError(
                f"{self.name}: moments returned shape {g.shape}, expected ({self.moment_dim},)"
            )
        if not np.all(np.isfinite(g)):
            raise EvaluationError(f"{self.name}: non-finite moments", theta=theta)
        return g

    def jac(self, theta):
        theta = self._check_theta(theta)
        if self.jacobian is None:
            return numerics.finite_diff_jacobian(self.evaluate, theta)
        try:
            G = np.asarray(self.jacobian(theta), dtype=float)
        except EvaluationError:
            raise
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise EvaluationError(f"{self.name}: jacobian failed: {exc}", theta=theta) from exc
        G = G.reshape(self.moment_dim, self.param_dim)
        if not np.all(np.isfinite(G)):
            raise EvaluationError(f"{self.name}: non-finite jacobian", theta=theta)
        return G


@dataclass(frozen=True)
class Weighting:
    """Symmetric positive definite weighting matrix ``W``."""

    kind: str
    matrix: np.ndarray
    source: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("identity", "fixed", "inverse_covariance"):
            raise InvalidInputError(f"unknown weighting kind {self.kind!r}")
        W = numerics.as_matrix(self.matrix, "W")
        if W.shape[0] != W.shape[1]:
            raise InvalidInputError(f"W must be square, got {W.shape}")
        if np.max(np.abs(W - W.T)) > 1e-10 * max(1.0, np.max(np.abs(W))):
            raise InvalidInputError("W must be symmetric")
        W = 0.5 * (W + W.T)
        if np.linalg.eigvalsh(W)[0] <= 0.0:
            raise InvalidInputError("W must be positive definite")
        object.__setattr__(self, "matrix", W)

    @classmethod
    def identity(cls, m):
        return cls("identity", np.eye(m))

    @classmethod
    def fixed(cls, W):
        return cls("fixed", W)

    @classmethod
    def inverse_covariance(cls, V):
        V = numerics.as_matrix(V, "V")
        V = 0.5 * (V + V.T)
        if np.linalg.eigvalsh(V)[0] <= 0.0:
            raise InvalidInputError("covariance V must be positive definite")
        W = np.linalg.inv(V)
        return cls("inverse_covariance", 0.5 * (W + W.T), source=V)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def eigenvalue_bounds(self):
        lam = np.linalg.eigvalsh(self.matrix)
        return float(lam[0]), float(lam[-1])

    def norm(self, g):
        g = np.asarray(g, dtype=float)
        return float(np.sqrt(max(g @ self.matrix @ g, 0.0)))


@dataclass(frozen=True)
class ObjectiveReport:
    q: float
    g: np.ndarray
    grad: np.ndarray
    weighted_norm: float
    jacobian: np.ndarray
    out_of_bounds: bool = False


def _check_weighting(model, w):
    if w.dim != model.moment_dim:
        raise InvalidInputError(
            f"W is {w.dim}x{w.dim} but the model has {model.moment_dim} moments"
        )


def objective(model, w, theta):
    """Evaluate ``Q``, the moments, and the gradient ``G' W g`` at ``theta``.

    Points outside the model's box are evaluated (the model may still refuse
    with a :class:`DomainError`) and flagged via ``out_of_bounds``.
    """
    _check_weighting(model, w)
    theta = model._check_theta(theta)
    g = model.evaluate(theta)
    G = model.jac(theta)
    if w.kind == "identity":
        wg = g
        weighted_norm = float(np.linalg.norm(g))
    else:
        wg = w.matrix @ g
        weighted_norm = float(np.sqrt(max(g @ wg, 0.0)))
    return ObjectiveReport(
        q=0.5 * weighted_norm**2,
        g=g,
        grad=G.T @ wg,
        weighted_norm=weighted_norm,
        jacobian=G,
        out_of_bounds=not model.in_bounds(theta),
    )


def gn_matrix(model, w, theta):
    """Gauss-Newton curvature ``G' W G`` (not inverted)."""
    _check_weighting(model, w)
    G = model.jac(theta)
    M = G.T @ w.matrix @ G
    return 0.5 * (M + M.T)


def full_hessian(model, w, theta):
    """Exact Hessian of ``Q = 0.5 g'Wg``.

    Uses ``G'WG + sum_i (W g)_i d2 g_i`` when the model supplies second
    derivatives, otherwise central differences of the gradient.
    """
    _check_weighting(model, w)
    theta = model._check_theta(theta)
    if model.second_derivatives is not None:
        g = model.evaluate(theta)
        G = model.jac(theta)
        D2 = np.asarray(model.second_derivatives(theta), dtype=float).reshape(
            model.moment_dim, model.param_dim, model.param_dim
        )
        H = G.T @ w.matrix @ G + np.einsum("i,ijk->jk", w.matrix @ g, D2)
    else:
        H = numerics.finite_diff_jacobian(lambda t: objective(model, w, t).grad, theta)
    return 0.5 * (H + H.T)


def objective_hessian(model, w, theta, convention="half"):
    """Hessian of ``0.5 g'Wg`` (``half``) or of ``g'Wg`` (``double``)."""
    if convention not in CONVENTIONS:
        raise InvalidInputError(f"convention must be one of {CONVENTIONS}")
    H = full_hessian(model, w, theta)
    return 2.0 * H if convention == "double" else H


def linear_reparameterization(model, scale):
    """The model in the coordinates ``vartheta = theta / scale``.

    Moments become ``g(scale * vartheta)``; derivatives pick up the chain-rule
    factors ``scale`` and ``scale**2``.
    """
    c = float(scale)
    if c == 0.0 or not np.isfinite(c):
        raise InvalidInputError("scale must be finite and non-zero")
    jac = None if model.jacobian is None else (lambda v: c * model.jac(c * v))
    d2 = None
    if model.second_derivatives is not None:
        d2 = lambda v: c * c * np.asarray(model.second_derivatives(c * v), dtype=float)
    bounds = np.sort(model.bounds / c, axis=1)
    return MomentModel(
        moments=lambda v: model.moments(c * v),
        param_dim=model.param_dim,
        moment_dim=model.moment_dim,
        bounds=bounds,
        jacobian=jac,
        second_derivatives=d2,
        name=f"{model.name}@x{c:g}",
    )
