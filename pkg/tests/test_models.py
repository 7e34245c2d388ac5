import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from momentopt import models
from momentopt.errors import DomainError, EvaluationError, InvalidInputError
from momentopt.model import Weighting, objective


def projection_oracle(theta, p, lags=400):
    """Brute-force AR(p) projection from the MA(1) autocovariance matrix.

    Builds the (p+1)x(p+1) covariance of (y_t, y_{t-1}, ..., y_{t-p}) entry
    by entry and applies the normal equations with a generic dense solve.
    """
    acov = {0: 1.0 + theta**2, 1: -theta}
    C = np.array([[acov.get(abs(i - j), 0.0) for j in range(p + 1)] for i in range(p + 1)])
    return np.linalg.solve(C[1:, 1:], C[1:, 0])


class TestMA1Spec:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            models.MA1Spec(theta_true=1.0)
        with pytest.raises(InvalidInputError):
            models.MA1Spec(p=0)
        with pytest.raises(InvalidInputError):
            models.MA1Spec(n=12, p=2)


class TestSimulation:
    def test_zero_theta_is_innovations(self):
        y, e = models.simulate_ma1(models.MA1Spec(theta_true=0.0, n=50), return_innovations=True)
        np.testing.assert_array_equal(y, e)

    def test_deterministic(self):
        spec = models.MA1Spec(seed=7)
        np.testing.assert_array_equal(models.simulate_ma1(spec), models.simulate_ma1(spec))

    @pytest.mark.parametrize("theta", [-0.5, 0.3])
    def test_moments_long_sample(self, theta):
        n = 100_000
        y = models.simulate_ma1(models.MA1Spec(theta_true=theta, n=n, seed=11))
        var = 1 + theta**2
        # Var of sample variance of an MA(1): 2 * sum of squared autocovariances / n
        se_var = np.sqrt(2 * (var**2 + 2 * theta**2) / n)
        assert abs(np.mean(y**2) - var) < 3 * se_var
        se_cov = np.sqrt((var**2 + 2 * theta**2) / n) * 1.5
        assert abs(np.mean(y[1:] * y[:-1]) + theta) < 3 * se_cov


class TestARFit:
    def test_exact_ar1(self):
        y = 3.0 * 0.5 ** np.arange(30)
        np.testing.assert_allclose(models.fit_ar(y, 1), [0.5], rtol=1e-12)

    def test_residuals_orthogonal(self):
        y = models.simulate_ma1(models.MA1Spec(n=500, p=3))
        fit = models.fit_ar(y, 3, full=True)
        X, _ = models.ar_design(y, 3)
        np.testing.assert_allclose(X.T @ fit.residuals, 0.0, atol=1e-8)

    def test_singular_gram(self):
        with pytest.raises(InvalidInputError):
            models.fit_ar(np.zeros(20), 2)

    def test_design_lags(self):
        X, Y = models.ar_design(np.arange(6.0), 2)
        np.testing.assert_array_equal(X, [[1, 0], [2, 1], [3, 2], [4, 3]])
        np.testing.assert_array_equal(Y, [2, 3, 4, 5])

    def test_covariance_scaling(self):
        y = models.simulate_ma1(models.MA1Spec(n=300, p=2))
        fit = models.fit_ar(y, 2, full=True)
        X, _ = models.ar_design(y, 2)
        np.testing.assert_allclose(
            fit.cov, fit.n_obs * fit.sigma2 * np.linalg.inv(X.T @ X), rtol=1e-10
        )

    @pytest.mark.parametrize(
        "theta,p", [(-0.5, 1), (0.3, 1), (-0.5, 4), (0.3, 4), (-0.5, 12), (0.3, 12)]
    )
    def test_long_sample_matches_binding(self, theta, p):
        n = 1_000_000
        fit = models.fit_ar(
            models.simulate_ma1(models.MA1Spec(theta_true=theta, n=n, p=p, seed=3)), p, full=True
        )
        se = np.sqrt(np.diag(fit.cov) / fit.n_obs)
        assert np.all(np.abs(fit.beta - models.ma1_binding(theta, p)) < 3 * se + 1e-12)


class TestBinding:
    def test_p1_closed_form(self):
        assert models.ma1_binding(-0.5, 1)[0] == pytest.approx(0.4)

    def test_zero(self):
        for p in (1, 2, 7):
            np.testing.assert_array_equal(models.ma1_binding(0.0, p), np.zeros(p))

    def test_domain(self):
        with pytest.raises(DomainError):
            models.ma1_binding(1.01, 3)
        with pytest.raises(DomainError):
            models.ma1_binding_derivatives(-1.2, 1)

    def test_p1_toeplitz_agrees(self):
        for theta in np.linspace(-0.98, 0.98, 100):
            col, rhs = np.array([1 + theta**2]), np.array([-theta])
            np.testing.assert_allclose(
                scipy.linalg.solve_toeplitz(col, rhs), models.ma1_binding(theta, 1), atol=1e-12
            )

    @pytest.mark.parametrize("p", [2, 5, 12])
    def test_projection_oracle(self, p):
        for theta in (-0.5, 0.3, 0.9):
            np.testing.assert_allclose(
                models.ma1_binding(theta, p), projection_oracle(theta, p), atol=1e-12
            )

    def test_unit_boundary(self):
        np.testing.assert_allclose(models.ma1_binding(-1.0, 1), [0.5])
        np.testing.assert_allclose(models.ma1_binding_derivatives(1.0, 1)[0], [0.0], atol=1e-15)
        assert np.all(np.isfinite(models.ma1_binding(1.0, 12)))

    def test_p2_value(self):
        # [[1.25, 0.5], [0.5, 1.25]] beta = [0.5, 0]
        np.testing.assert_allclose(
            models.ma1_binding(-0.5, 2), [0.5 * 1.25 / 1.3125, -0.25 / 1.3125]
        )

    @settings(max_examples=40, deadline=None)
    @given(theta=st.floats(-0.95, 0.95), p=st.integers(1, 12))
    def test_derivatives_match_fd(self, theta, p):
        d1, d2 = models.ma1_binding_derivatives(theta, p)
        h = 1e-5
        fd1 = (models.ma1_binding(theta + h, p) - models.ma1_binding(theta - h, p)) / (2 * h)
        fd2 = (
            models.ma1_binding(theta + h, p)
            - 2 * models.ma1_binding(theta, p)
            + models.ma1_binding(theta - h, p)
        ) / h**2
        np.testing.assert_allclose(d1, fd1, atol=1e-8)
        np.testing.assert_allclose(d2, fd2, atol=2e-4)


class TestMA1Model:
    def test_calibrated_root(self, calibrated):
        np.testing.assert_allclose(calibrated.model.evaluate([-0.339]), [0.0], atol=1e-15)
        np.testing.assert_allclose(calibrated.beta_hat, [0.339 / (1 + 0.339**2)])
        assert calibrated.beta_hat[0] == pytest.approx(0.30406, abs=1e-5)

    def test_jacobian_closed_form(self, calibrated):
        for theta in (-0.6, 0.0, 0.5):
            np.testing.assert_allclose(
                calibrated.model.jac([theta]), [[(1 - theta**2) / (1 + theta**2) ** 2]], rtol=1e-14
            )

    def test_p12_over_identified(self, p12_identity):
        model = p12_identity.model
        assert model.over_identified and model.moment_dim == 12
        assert objective(model, p12_identity.weighting, [-0.5]).q > 0.0

    def test_optimal_weighting_is_inverse_cov(self, p12_optimal):
        np.testing.assert_allclose(
            p12_optimal.weighting.matrix @ p12_optimal.cov, np.eye(12), atol=1e-8
        )

    def test_unknown_weighting(self):
        with pytest.raises(InvalidInputError):
            models.ma1_moment_model(models.MA1Spec(), "bogus")

    def test_domain_error_outside_unit_interval(self, calibrated):
        with pytest.raises(EvaluationError):
            calibrated.model.evaluate([1.2])

    def test_oracle_unique_on_grid(self, p12_identity):
        grid = np.linspace(-0.99, 0.99, 2001)
        q = np.array([objective(p12_identity.model, p12_identity.weighting, [t]).q for t in grid])
        i = int(np.argmin(q))
        assert np.all(np.delete(q, i) > q[i])


class TestGaussianModel:
    def test_population_root(self, gaussian):
        model, _ = gaussian
        np.testing.assert_allclose(model.evaluate([0.0, 1.0]), 0.0)

    def test_jacobian_display(self, gaussian):
        model, _ = gaussian
        np.testing.assert_array_equal(model.jac([0.0, 0.5]).T, [[-1, 0, 0], [0, -1, -3]])

    def test_cross_product(self, gaussian):
        model, _ = gaussian
        for s1, s2 in ((1.0, 1.0), (0.3, 2.0), (1e-3, 5.0)):
            P = model.jac([0.0, s1]).T @ model.jac([0.0, s2])
            np.testing.assert_allclose(P, np.diag([1.0, 1.0 + 36 * s1 * s2]), rtol=1e-14)

    def test_variance_domain(self, gaussian):
        model, _ = gaussian
        with pytest.raises(DomainError):
            model.evaluate([0.0, 0.0])
        assert model.lower[1] == models.SIGMA2_FLOOR

    def test_sample_mode(self, rng):
        data = rng.normal(1.0, 2.0, size=1000)
        model = models.gaussian_moment_model(data=data)
        m = models.gaussian_sample_moments(data)
        np.testing.assert_allclose(model.evaluate([0.0, 1.0]), m - [0.0, 1.0, 3.0])

    def test_mode_exclusive(self):
        with pytest.raises(InvalidInputError):
            models.gaussian_moment_model()
        with pytest.raises(InvalidInputError):
            models.gaussian_moment_model(theta_true=(0, 1), data=np.ones(3))

    def test_jacobian_vs_fd(self, gaussian, rng):
        from momentopt.numerics import finite_diff_jacobian

        model, _ = gaussian
        for _ in range(20):
            theta = np.array([rng.uniform(-5, 5), rng.uniform(0.1, 5)])
            np.testing.assert_allclose(
                finite_diff_jacobian(model.evaluate, theta), model.jac(theta), atol=1e-7
            )


class TestCubeRoot:
    def test_root(self):
        model = models.cube_root_model(1.5)
        assert model.evaluate([1.5])[0] == 0.0
        assert model.jac([1.5])[0, 0] == 0.0

    @settings(max_examples=50, deadline=None)
    @given(ybar=st.floats(-5, 5), delta=st.floats(-3, 3))
    def test_objective_sixth_power(self, ybar, delta):
        model = models.cube_root_model(ybar)
        theta = ybar + delta
        q = objective(model, Weighting.identity(1), [theta]).q
        assert q == pytest.approx(0.5 * (ybar - theta) ** 6, rel=1e-12, abs=1e-300)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            models.cube_root_model(np.nan)
