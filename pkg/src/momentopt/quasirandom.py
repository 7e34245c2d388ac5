"""Sobol point sets with a single random shift, mapped into a parameter box."""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .errors import InvalidInputError

MAX_DIM = 16


@dataclass(frozen=True)
class PointSet:
    points: np.ndarray  # (count, dim), every coordinate in [0, 1)
    shift: np.ndarray
    seed: Optional[int] = None

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def count(self):
        return self.points.shape[0]


def sobol(dim, n):
    """First ``n`` points of the unscrambled Sobol sequence (Joe-Kuo directions).

    The all-zero point at index 0 is skipped, so the first point is
    ``(0.5, ..., 0.5)``.
    """
    if not 1 <= dim <= MAX_DIM:
        raise InvalidInputError(f"Sobol dimension must be in [1, {MAX_DIM}], got {dim}")
    if n < 1:
        raise InvalidInputError("need at least one point")
    engine = qmc.Sobol(d=dim, scramble=False)
    engine.fast_forward(1)
    with warnings.catch_warnings():
        # balance properties need powers of two; arbitrary prefixes are fine here
        warnings.simplefilter("ignore", UserWarning)
        pts = engine.random(n)
    return PointSet(pts, np.zeros(dim))


def random_shift(ps, seed=None, shift=None):
    """Shift every point by one uniform vector ``u``, modulo 1.

    ``shift`` overrides the draw (useful for audits); otherwise ``u`` comes
    from ``numpy.random.default_rng(seed)``.
    """
    if shift is None:
        u = np.random.default_rng(seed).random(ps.dim)
    else:
        u = np.asarray(shift, dtype=float).reshape(ps.dim)
    pts = np.mod(ps.points + u, 1.0)
    # (s + u) mod 1 can round to exactly 1.0
    pts[pts >= 1.0] = 0.0
    return PointSet(pts, np.mod(ps.shift + u, 1.0), seed)


def map_to_box(ps, lower, upper):
    """Affine map of unit-cube points to ``[lower, upper]``."""
    points = ps.points if isinstance(ps, PointSet) else np.atleast_2d(np.asarray(ps, dtype=float))
    lo = np.asarray(lower, dtype=float).reshape(-1)
    hi = np.asarray(upper, dtype=float).reshape(-1)
    if lo.shape != hi.shape or lo.size != points.shape[1]:
        raise InvalidInputError("bounds must match the point dimension")
    if np.any(lo >= hi):
        raise InvalidInputError("need lower < upper in every coordinate")
    return np.clip(lo + points * (hi - lo), lo, hi)


def shifted_sobol_box(n, lower, upper, seed=None):
    """Convenience: ``n`` randomly shifted Sobol points inside a box."""
    lo = np.asarray(lower, dtype=float).reshape(-1)
    return map_to_box(random_shift(sobol(lo.size, n), seed), lower, upper)
