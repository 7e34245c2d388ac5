"""Ready-made moment models: MA(1) indirect inference, Gaussian moment
matching and the cube-root counterexample."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import DomainError, InvalidInputError
from .model import MomentModel, Weighting

MA1_BOUNDS = (-0.99, 0.99)
SIGMA2_FLOOR = 1e-8
CALIBRATED_THETA_HAT = -0.339


# ---------------------------------------------------------------------------
# MA(1) with an auxiliary AR(p)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MA1Spec:
    """Simulation design for ``y_t = e_t - theta e_{t-1}``."""

    theta_true: float = -0.5
    n: int = 200
    p: int = 1
    seed: int = 0

    def __post_init__(self):
        if not abs(self.theta_true) < 1.0:
            raise InvalidInputError("theta_true must lie in (-1, 1)")
        if self.p < 1:
            raise InvalidInputError("AR order p must be >= 1")
        if self.n <= self.p + 10:
            raise InvalidInputError("sample size must exceed p + 10")


def simulate_ma1(spec, return_innovations=False):
    """Simulate an MA(1) series of length ``spec.n``.

    The pre-sample innovation ``e_0`` is drawn, so the series starts in its
    stationary distribution.
    """
    rng = np.random.default_rng(spec.seed)
    e = rng.standard_normal(spec.n + 1)
    y = e[1:] - spec.theta_true * e[:-1]
    if return_innovations:
        return y, e[1:]
    return y


@dataclass(frozen=True)
class ARFit:
    beta: np.ndarray
    residuals: np.ndarray
    sigma2: float
    cov: np.ndarray  # homoskedastic sigma2 * (X'X/n)^{-1}, i.e. n * var(beta)
    n_obs: int


def ar_design(series, p):
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or y.size <= p + 1:
        raise InvalidInputError(f"need a 1-d series longer than p + 1 = {p + 1}")
    X = np.column_stack([y[p - j - 1 : y.size - j - 1] for j in range(p)])
    return X, y[p:]


def fit_ar(series, p, full=False):
    """OLS fit of ``y_t`` on ``(y_{t-1}, ..., y_{t-p})`` without intercept.

    The first ``p`` observations are used only as lags. With ``full=True``
    returns an :class:`ARFit` carrying residuals and the scaled covariance.
    """
    X, Y = ar_design(series, p)
    XtX = X.T @ X
    lam = np.linalg.eigvalsh(XtX)
    if lam[0] <= 1e-12 * max(lam[-1], 1e-300):
        raise InvalidInputError("singular AR regressor Gram matrix")
    beta = scipy.linalg.solve(XtX, X.T @ Y, assume_a="pos")
    if not full:
        return beta
    u = Y - X @ beta
    n_obs = Y.size
    sigma2 = float(u @ u / n_obs)
    cov = sigma2 * np.linalg.inv(XtX / n_obs)
    return ARFit(beta, u, sigma2, 0.5 * (cov + cov.T), n_obs)


def _ma1_toeplitz(theta, p):
    col = np.zeros(p)
    col[0] = 1.0 + theta * theta
    if p > 1:
        col[1] = -theta
    rhs = np.zeros(p)
    rhs[0] = -theta
    return col, rhs


def _check_ma1_theta(theta):
    t = float(np.asarray(theta, dtype=float).reshape(-1)[0])
    # |theta| = 1 is kept: the autocovariance system is still non-singular there
    if not abs(t) <= 1.0:
        raise DomainError(f"MA(1) binding function undefined for |theta| > 1 (theta={t})", [t])
    return t


def ma1_binding(theta, p):
    """Population AR(p) projection coefficients of an MA(1) with parameter ``theta``.

    Solves the Yule-Walker system built from the MA(1) autocovariances
    ``gamma_0 = 1 + theta^2``, ``gamma_1 = -theta`` and zero beyond lag one.
    """
    t = _check_ma1_theta(theta)
    if p == 1:
        return np.array([-t / (1.0 + t * t)])
    col, rhs = _ma1_toeplitz(t, p)
    return scipy.linalg.solve_toeplitz(col, rhs)


def ma1_binding_derivatives(theta, p):
    """First and second derivatives of :func:`ma1_binding` in ``theta``.

    Differentiates ``T(theta) beta = r(theta)`` twice, so both are exact up to
    the linear solves.
    """
    t = _check_ma1_theta(theta)
    if p == 1:
        s = 1.0 + t * t
        return (
            np.array([-(1.0 - t * t) / s**2]),
            np.array([2.0 * t * (3.0 - t * t) / s**3]),
        )
    col, _ = _ma1_toeplitz(t, p)
    T = scipy.linalg.toeplitz(col)
    beta = ma1_binding(t, p)
    dcol = np.zeros(p)
    dcol[0] = 2.0 * t
    dcol[1] = -1.0
    dT = scipy.linalg.toeplitz(dcol)
    dr = np.zeros(p)
    dr[0] = -1.0
    lu = scipy.linalg.lu_factor(T)
    d1 = scipy.linalg.lu_solve(lu, dr - dT @ beta)
    # T'' = 2 I, r'' = 0
    d2 = scipy.linalg.lu_solve(lu, -2.0 * dT @ d1 - 2.0 * beta)
    return d1, d2


@dataclass(frozen=True)
class MA1Setup:
    """An MA(1) moment model together with the data summaries behind it."""

    model: MomentModel
    weighting: Weighting
    beta_hat: np.ndarray
    cov: Optional[np.ndarray] = None
    series: Optional[np.ndarray] = None
    spec: Optional[MA1Spec] = None


def ma1_model_from_beta(beta_hat, bounds=MA1_BOUNDS, name="ma1"):
    """Moment model ``g(theta) = beta_hat - beta(theta)``."""
    beta_hat = np.atleast_1d(np.asarray(beta_hat, dtype=float)).copy()
    p = beta_hat.size
    beta_hat.setflags(write=False)

    def moments(theta):
        return beta_hat - ma1_binding(theta[0], p)

    def jacobian(theta):
        return -ma1_binding_derivatives(theta[0], p)[0].reshape(p, 1)

    def second(theta):
        return -ma1_binding_derivatives(theta[0], p)[1].reshape(p, 1, 1)

    return MomentModel(
        moments=moments,
        param_dim=1,
        moment_dim=p,
        bounds=np.array([bounds], dtype=float),
        jacobian=jacobian,
        second_derivatives=second,
        name=name,
    )


def ma1_moment_model(spec, weighting="identity"):
    """Simulate, fit the auxiliary AR(p), and build the indirect-inference model.

    ``weighting`` is ``"identity"`` or ``"optimal"``; the latter inverts the
    homoskedastic OLS covariance of the AR coefficients (scaled by the number
    of regression observations).
    """
    y = simulate_ma1(spec)
    fit = fit_ar(y, spec.p, full=True)
    model = ma1_model_from_beta(fit.beta, name=f"ma1(p={spec.p},seed={spec.seed})")
    if weighting == "identity":
        w = Weighting.identity(spec.p)
    elif weighting == "optimal":
        w = Weighting.inverse_covariance(fit.cov)
    else:
        raise InvalidInputError(f"unknown MA(1) weighting {weighting!r}")
    return MA1Setup(model, w, fit.beta, fit.cov, y, spec)


def ma1_calibrated(theta_hat=CALIBRATED_THETA_HAT):
    """Just-identified MA(1) model whose moment has its root exactly at ``theta_hat``.

    Sets ``beta_hat_1 = -theta_hat / (1 + theta_hat^2)``; with the default this
    reproduces the published ``theta_hat = -0.339`` without the original sample.
    """
    beta1 = -theta_hat / (1.0 + theta_hat * theta_hat)
    model = ma1_model_from_beta([beta1], name="ma1-calibrated")
    return MA1Setup(model, Weighting.identity(1), np.array([beta1]))


# ---------------------------------------------------------------------------
# Gaussian mean/variance from three moments
# ---------------------------------------------------------------------------


def gaussian_sample_moments(data):
    y = np.asarray(data, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise InvalidInputError("need at least two observations")
    c = y - y.mean()
    return np.array([y.mean(), np.mean(c**2), np.mean(c**4)])


def gaussian_moment_model(theta_true=None, data=None, mu_bound=10.0, sigma2_max=10.0):
    """Match ``(mean, variance, 4th central moment)`` to ``(mu, s2, 3 s2^2)``.

    Exactly one of ``theta_true`` (population mode) or ``data`` (sample mode)
    must be given.
    """
    if (theta_true is None) == (data is None):
        raise InvalidInputError("give exactly one of theta_true or data")
    if data is None:
        mu0, s0 = np.asarray(theta_true, dtype=float)
        if s0 <= 0.0:
            raise InvalidInputError("population variance must be positive")
        target = np.array([mu0, s0, 3.0 * s0 * s0])
        name = "gaussian-population"
    else:
        target = gaussian_sample_moments(data)
        name = "gaussian-sample"
    target.setflags(write=False)

    def check(theta):
        if theta[1] <= 0.0:
            raise DomainError(f"variance must be positive (sigma2={theta[1]})", theta)

    def moments(theta):
        check(theta)
        mu, s2 = theta
        return target - np.array([mu, s2, 3.0 * s2 * s2])

    def jacobian(theta):
        check(theta)
        return np.array([[-1.0, 0.0], [0.0, -1.0], [0.0, -6.0 * theta[1]]])

    def second(theta):
        D = np.zeros((3, 2, 2))
        D[2, 1, 1] = -6.0
        return D

    return MomentModel(
        moments=moments,
        param_dim=2,
        moment_dim=3,
        bounds=np.array([[-mu_bound, mu_bound], [SIGMA2_FLOOR, sigma2_max]]),
        jacobian=jacobian,
        second_derivatives=second,
        name=name,
    )


# ---------------------------------------------------------------------------
# Cube-root counterexample
# ---------------------------------------------------------------------------


def cube_root_model(ybar, half_width=10.0):
    """``g(theta) = (ybar - theta)^3``: convex objective, rank condition fails at the root."""
    ybar = float(ybar)
    if not np.isfinite(ybar):
        raise InvalidInputError("ybar must be finite")
    return MomentModel(
        moments=lambda t: np.array([(ybar - t[0]) ** 3]),
        param_dim=1,
        moment_dim=1,
        bounds=np.array([[ybar - half_width, ybar + half_width]]),
        jacobian=lambda t: np.array([[-3.0 * (ybar - t[0]) ** 2]]),
        second_derivatives=lambda t: np.array([[[6.0 * (ybar - t[0])]]]),
        name="cube-root",
    )


def linear_model(A, b, half_width=10.0):
    """``g(theta) = A theta - b``; handy for exact-step checks."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    m, d = A.shape
    return MomentModel(
        moments=lambda t: A @ t - b,
        param_dim=d,
        moment_dim=m,
        bounds=np.tile([-half_width, half_width], (d, 1)),
        jacobian=lambda t: A,
        second_derivatives=lambda t: np.zeros((m, d, d)),
        name="linear",
    )
