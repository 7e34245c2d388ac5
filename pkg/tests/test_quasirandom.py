import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momentopt import quasirandom as qr
from momentopt.errors import InvalidInputError

BITS = 30


def sobol_oracle(direction_m, n):
    """Gray-code Sobol points from integer direction numbers ``m_k`` (odd, < 2^k)."""
    v = [m << (BITS - k) for k, m in enumerate(direction_m, start=1)]
    out = []
    for i in range(1, n + 1):
        gray = i ^ (i >> 1)
        x = 0
        k = 0
        while gray:
            if gray & 1:
                x ^= v[k]
            gray >>= 1
            k += 1
        out.append(x / 2.0**BITS)
    return np.array(out)


def degree_one_directions(count):
    """Direction numbers for the primitive polynomial x + 1 with m_1 = 1."""
    m = [1]
    for _ in range(count - 1):
        m.append((2 * m[-1]) ^ m[-1])
    return m


def star_discrepancy_2d(points):
    """Exact star discrepancy of a 2-d point set over anchored boxes."""
    n = len(points)
    order = np.argsort(points[:, 0], kind="stable")
    pts = points[order]
    ys = np.append(np.sort(pts[:, 1]), 1.0)
    xs = np.append(pts[:, 0], 1.0)
    best = 0.0
    for i in range(n + 1):
        x = xs[i]
        inside_open = pts[pts[:, 0] < x, 1]
        inside_closed = pts[pts[:, 0] <= x, 1]
        open_counts = np.searchsorted(np.sort(inside_open), ys, side="left")
        closed_counts = np.searchsorted(np.sort(inside_closed), ys, side="right")
        vol = x * ys
        best = max(
            best, float(np.max(vol - open_counts / n)), float(np.max(closed_counts / n - vol))
        )
    return best


class TestSobol:
    def test_first_point(self):
        np.testing.assert_array_equal(qr.sobol(1, 1).points, [[0.5]])
        np.testing.assert_array_equal(qr.sobol(5, 1).points, [[0.5] * 5])

    def test_dim1_van_der_corput(self):
        np.testing.assert_array_equal(qr.sobol(1, 255).points[:, 0], sobol_oracle([1] * BITS, 255))

    def test_dim2_direction_numbers(self):
        m = degree_one_directions(BITS)
        assert m[:6] == [1, 3, 5, 15, 17, 51]
        np.testing.assert_array_equal(qr.sobol(2, 511).points[:, 1], sobol_oracle(m, 511))

    @pytest.mark.parametrize("n", [1, 7, 100])
    def test_unit_interval(self, n):
        pts = qr.sobol(4, n).points
        assert pts.shape == (n, 4)
        assert np.all((pts >= 0.0) & (pts < 1.0))

    @pytest.mark.parametrize("dim", [0, 17])
    def test_dim_range(self, dim):
        with pytest.raises(InvalidInputError):
            qr.sobol(dim, 4)

    def test_deterministic(self):
        np.testing.assert_array_equal(qr.sobol(3, 50).points, qr.sobol(3, 50).points)

    def test_discrepancy_beats_random(self):
        n = 1024
        d_sobol = star_discrepancy_2d(qr.sobol(2, n).points)
        rng = np.random.default_rng(2024)
        d_random = [star_discrepancy_2d(rng.random((n, 2))) for _ in range(20)]
        assert d_sobol < min(d_random)

    def test_discrepancy_oracle_small_case(self):
        # one point at (0.5, 0.5): sup is attained by the closed box [0,0.5]^2 (1 - 0.25)
        assert star_discrepancy_2d(np.array([[0.5, 0.5]])) == pytest.approx(0.75)


class TestRandomShift:
    def test_zero_shift(self):
        ps = qr.sobol(2, 16)
        np.testing.assert_array_equal(qr.random_shift(ps, shift=[0.0, 0.0]).points, ps.points)

    def test_wrap(self):
        ps = qr.PointSet(np.array([[0.9]]), np.zeros(1))
        np.testing.assert_allclose(qr.random_shift(ps, shift=[0.3]).points, [[0.2]])

    def test_seeds_differ(self):
        ps = qr.sobol(2, 8)
        a, b = qr.random_shift(ps, seed=1), qr.random_shift(ps, seed=2)
        assert not np.allclose(a.shift, b.shift)

    def test_seeded_shift_is_default_rng(self):
        ps = qr.sobol(3, 4)
        np.testing.assert_array_equal(
            qr.random_shift(ps, seed=9).shift, np.random.default_rng(9).random(3)
        )

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_differences_preserved_mod_one(self, seed):
        ps = qr.sobol(2, 32)
        sh = qr.random_shift(ps, seed=seed)
        d0 = np.mod(ps.points[:, None, :] - ps.points[None, :, :], 1.0)
        d1 = np.mod(sh.points[:, None, :] - sh.points[None, :, :], 1.0)
        circ = np.minimum(np.abs(d0 - d1), 1.0 - np.abs(d0 - d1))
        assert np.max(circ) < 1e-12
        assert np.all((sh.points >= 0.0) & (sh.points < 1.0))


class TestMapToBox:
    def test_unit_box(self):
        ps = qr.sobol(2, 8)
        np.testing.assert_array_equal(qr.map_to_box(ps, [0, 0], [1, 1]), ps.points)

    def test_values(self):
        np.testing.assert_allclose(qr.map_to_box([[0.5]], [-10], [10]), [[0.0]])
        np.testing.assert_allclose(qr.map_to_box([[0.25]], [-1], [1]), [[-0.5]])

    def test_inverted(self):
        with pytest.raises(InvalidInputError):
            qr.map_to_box([[0.5]], [1.0], [0.0])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 1000), lo=st.floats(-100, 0), width=st.floats(1e-3, 100))
    def test_inside_closed_box(self, seed, lo, width):
        pts = qr.shifted_sobol_box(64, [lo, lo], [lo + width, lo + width], seed=seed)
        assert np.all((pts >= lo) & (pts <= lo + width))
