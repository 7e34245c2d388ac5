"""Dense small-matrix kernels used throughout the package.

Everything here works on plain numpy arrays. Problems in this domain have a
handful of parameters, so direct (LAPACK) decompositions are used throughout.
"""

import numpy as np
import scipy.linalg

from .errors import EvaluationError, InvalidInputError, SingularConditioningError

EPS = np.finfo(float).eps
JACOBIAN_STEP = EPS ** (1.0 / 3.0)
HESSIAN_STEP = EPS ** (1.0 / 4.0)
RANK_TOL = 1e-12


def as_vector(x, name="vector"):
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return v


def as_matrix(M, name="matrix"):
    A = np.asarray(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    elif A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2 or A.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 2-d array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def _symmetric(S, name, tol=1e-10):
    A = as_matrix(S, name)
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {A.shape}")
    scale = max(1.0, np.max(np.abs(A)))
    if np.max(np.abs(A - A.T)) > tol * scale:
        raise InvalidInputError(f"{name} is not symmetric")
    return 0.5 * (A + A.T)


def singular_values(M):
    """Singular values of ``M`` in descending order."""
    return np.linalg.svd(as_matrix(M), compute_uv=False)


def min_singular_value(M):
    """Smallest singular value of a (possibly rectangular) matrix."""
    return float(singular_values(M)[-1])


def sym_eigenvalues(S):
    """Eigenvalues of a symmetric matrix, largest first.

    ``S`` is symmetrized by averaging with its transpose before the
    decomposition; asymmetry beyond 1e-10 (relative) is rejected.
    """
    A = _symmetric(S, "S")
    return np.linalg.eigvalsh(A)[::-1]


def _check_conditioning(A, rank_tol, require_pd):
    lam = np.linalg.eigvalsh(A)
    top = np.max(np.abs(lam))
    if top == 0.0:
        raise SingularConditioningError("conditioning matrix is identically zero")
    floor = rank_tol * top
    if require_pd and lam[0] <= floor:
        raise SingularConditioningError(
            f"conditioning matrix not positive definite (smallest eigenvalue {lam[0]:.3e})"
        )
    if np.min(np.abs(lam)) <= floor:
        raise SingularConditioningError(
            f"conditioning matrix is singular (|eigenvalue| {np.min(np.abs(lam)):.3e})"
        )
    return lam


def solve_spd(A, b, rank_tol=RANK_TOL):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Raises
    ------
    SingularConditioningError
        If the smallest eigenvalue of ``A`` is not above ``rank_tol * lambda_max``.
    """
    A = _symmetric(A, "A")
    b = as_vector(b, "b")
    if b.shape[0] != A.shape[0]:
        raise InvalidInputError(f"dimension mismatch: A is {A.shape}, b has {b.shape[0]}")
    _check_conditioning(A, rank_tol, require_pd=True)
    c, low = scipy.linalg.cho_factor(A)
    return scipy.linalg.cho_solve((c, low), b)


def solve_symmetric(A, b, rank_tol=RANK_TOL):
    """Solve ``A x = b`` for symmetric, possibly indefinite, non-singular ``A``."""
    A = _symmetric(A, "A")
    b = as_vector(b, "b")
    if b.shape[0] != A.shape[0]:
        raise InvalidInputError(f"dimension mismatch: A is {A.shape}, b has {b.shape[0]}")
    _check_conditioning(A, rank_tol, require_pd=False)
    return scipy.linalg.solve(A, b, assume_a="sym")


def _steps(theta, h_scale):
    return h_scale * np.maximum(1.0, np.abs(theta))


def _probe(f, x):
    try:
        y = np.atleast_1d(np.asarray(f(x), dtype=float))
    except EvaluationError as exc:
        raise EvaluationError(f"evaluation failed at probe point: {exc}", theta=x) from exc
    if not np.all(np.isfinite(y)):
        raise EvaluationError("non-finite value at probe point", theta=x)
    return y


def finite_diff_jacobian(f, theta, h_scale=JACOBIAN_STEP):
    """Central-difference Jacobian of a vector-valued map.

    Column ``j`` is ``[f(theta + h_j e_j) - f(theta - h_j e_j)] / (2 h_j)`` with
    ``h_j = h_scale * max(1, |theta_j|)``.
    """
    theta = as_vector(theta, "theta")
    h = _steps(theta, h_scale)
    cols = []
    for j in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[j] += h[j]
        down[j] -= h[j]
        cols.append((_probe(f, up) - _probe(f, down)) / (2.0 * h[j]))
    return np.column_stack(cols)


def finite_diff_hessian(q, theta, h_scale=HESSIAN_STEP):
    """Central second-difference Hessian of a scalar map, symmetrized."""
    theta = as_vector(theta, "theta")
    d = theta.size
    h = _steps(theta, h_scale)

    def val(x):
        return _probe(q, x)[0]

    q0 = val(theta)
    H = np.empty((d, d))
    for i in range(d):
        up, down = theta.copy(), theta.copy()
        up[i] += h[i]
        down[i] -= h[i]
        H[i, i] = (val(up) - 2.0 * q0 + val(down)) / h[i] ** 2
        for j in range(i + 1, d):
            corners = []
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                x = theta.copy()
                x[i] += si * h[i]
                x[j] += sj * h[j]
                corners.append(val(x))
            H[i, j] = H[j, i] = (corners[0] - corners[1] - corners[2] + corners[3]) / (
                4.0 * h[i] * h[j]
            )
    return 0.5 * (H + H.T)
