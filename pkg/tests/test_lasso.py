import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dipw.data import standardize
from dipw.lasso import (
    PenaltySpec,
    cv_lasso,
    fit_lasso,
    lambda_max,
    lambda_path,
    penalized_objective,
)


def random_problem(seed, n=80, p=6, snr=1.0):
    rng = np.random.default_rng(seed)
    x, _ = standardize(rng.normal(size=(n, p)))
    beta = rng.normal(size=p) * snr
    y = 1.3 + x @ beta + rng.normal(size=n)
    return x, y


def kkt_violation(design, response, fit, lam):
    """Max violation of the stationarity conditions, from raw arrays."""
    n = design.shape[0]
    resid = response - fit.intercept - design @ fit.coef
    grad = design.T @ resid / n
    worst = abs(float(np.mean(resid)))  # intercept coordinate
    for j in range(design.shape[1]):
        if not fit.penalized_mask[j]:
            worst = max(worst, abs(grad[j]))
        elif fit.coef[j] != 0.0:
            worst = max(worst, abs(grad[j] - lam * np.sign(fit.coef[j])))
        else:
            worst = max(worst, max(0.0, abs(grad[j]) - lam))
    return worst


class TestFitLasso:
    def test_ols_limit(self):
        x, y = random_problem(0)
        fit = fit_lasso(x, y, np.ones(x.shape[1], bool), 0.0, tolerance=1e-12)
        design = np.hstack([np.ones((len(y), 1)), x])
        expected, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert fit.converged
        np.testing.assert_allclose(fit.intercept, expected[0], atol=1e-8)
        np.testing.assert_allclose(fit.coef, expected[1:], atol=1e-8)

    def test_exact_zeros_at_lambda_max(self):
        x, y = random_problem(1)
        mask = np.ones(x.shape[1], bool)
        lam_max = lambda_max(x, y, mask)
        for lam in (lam_max, 1.5 * lam_max):
            fit = fit_lasso(x, y, mask, lam)
            assert (fit.coef == 0.0).all()
            assert fit.intercept == pytest.approx(y.mean(), abs=1e-10)

    @given(st.integers(0, 10_000), st.floats(0.0, 3.0))
    def test_soft_threshold_oracle_single_column(self, seed, lam):
        # Closed form: sign(b) * max(|b| - lam, 0) with b the OLS slope.
        rng = np.random.default_rng(seed)
        x, _ = standardize(rng.normal(size=(30, 1)))
        y = rng.normal(size=30) * 2.0 + 1.0
        fit = fit_lasso(x, y, np.array([True]), lam, tolerance=1e-12)
        b = float(x[:, 0] @ (y - y.mean())) / 30.0
        expected = np.sign(b) * max(abs(b) - lam, 0.0)
        assert fit.coef[0] == pytest.approx(expected, abs=1e-8)

    def test_warm_start_reaches_same_solution(self):
        x, y = random_problem(2)
        mask = np.ones(x.shape[1], bool)
        lam = 0.4 * lambda_max(x, y, mask)
        cold = fit_lasso(x, y, mask, lam)
        warm = fit_lasso(x, y, mask, lam, warm_start=cold.coef + 0.05)
        np.testing.assert_allclose(warm.coef, cold.coef, atol=1e-6)

    def test_unpenalized_columns_solve_normal_equations(self):
        rng = np.random.default_rng(3)
        x, _ = standardize(rng.normal(size=(90, 5)))
        extra = rng.normal(size=(90, 2)) * 3.0
        design = np.hstack([x, extra])
        y = x[:, 0] + extra @ [0.5, -0.2] + rng.normal(size=90)
        mask = np.array([True] * 5 + [False] * 2)
        lam = 0.5 * lambda_max(design, y, mask)
        fit = fit_lasso(design, y, mask, lam, tolerance=1e-9)
        assert kkt_violation(design, y, fit, lam) <= 10 * 1e-9

    def test_non_finite_rejected(self):
        x = np.array([[1.0], [np.inf]])
        with pytest.raises(ValueError, match="finite"):
            fit_lasso(x, np.array([1.0, 2.0]), np.array([True]), 0.1)

    def test_negative_lambda_rejected(self):
        x, y = random_problem(4)
        with pytest.raises(ValueError):
            fit_lasso(x, y, np.ones(x.shape[1], bool), -0.1)

    def test_non_convergence_is_flagged_not_raised(self):
        x, y = random_problem(5)
        mask = np.ones(x.shape[1], bool)
        lam = 0.01 * lambda_max(x, y, mask)
        fit = fit_lasso(x, y, mask, lam, max_iterations=1)
        assert not fit.converged

    def test_constant_column_gets_zero_weight(self):
        rng = np.random.default_rng(6)
        x, _ = standardize(rng.normal(size=(60, 3)))
        design = np.hstack([x, np.full((60, 1), 7.0)])  # constant, collinear with intercept
        y = x[:, 0] + rng.normal(size=60)
        mask = np.ones(4, bool)
        fit = fit_lasso(design, y, mask, 0.05)
        assert fit.coef[3] == 0.0


class TestKktInvariant:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_random_problems(self, seed):
        rng = np.random.default_rng(seed)
        x, _ = standardize(rng.normal(size=(70, 8)))
        y = x @ rng.normal(size=8) + rng.normal(size=70) * 2
        mask = rng.random(8) < 0.8
        if not mask.any():
            mask[0] = True
        lam_max = lambda_max(x, y, mask)
        tol = 1e-8
        for frac in (0.7, 0.3, 0.05):
            fit = fit_lasso(x, y, mask, frac * lam_max, tolerance=tol)
            assert fit.converged
            assert kkt_violation(x, y, fit, frac * lam_max) <= 10 * tol


class TestObjective:
    def test_monotone_in_sweeps(self):
        x, y = random_problem(7, n=60, p=8)
        mask = np.ones(8, bool)
        lam = 0.1 * lambda_max(x, y, mask)
        values = []
        for sweeps in range(1, 12):
            fit = fit_lasso(x, y, mask, lam, max_iterations=sweeps)
            values.append(penalized_objective(x, y, mask, fit.coef, fit.intercept, lam))
        diffs = np.diff(values)
        assert (diffs <= 1e-12).all()


class TestLambdaPath:
    def test_geometric_grid(self):
        # lambda_max is exactly 1 when the response equals a standardized column.
        rng = np.random.default_rng(8)
        x, _ = standardize(rng.normal(size=(50, 1)))
        y = x[:, 0].copy()
        spec = PenaltySpec(grid_size=3, lambda_min_ratio=0.01)
        path = lambda_path(x, y, np.array([True]), spec)
        np.testing.assert_allclose(path, [1.0, 0.1, 0.01], rtol=1e-12)

    def test_orthogonal_response_degenerate(self):
        rng = np.random.default_rng(9)
        x, _ = standardize(rng.normal(size=(40, 2)))
        y = np.full(40, 3.0)  # residualizes to zero on the intercept
        with pytest.raises(ValueError, match="degenerate"):
            lambda_path(x, y, np.array([True, True]), PenaltySpec())

    def test_all_unpenalized_rejected(self):
        x, y = random_problem(10)
        with pytest.raises(ValueError, match="penalized"):
            lambda_path(x, y, np.zeros(x.shape[1], bool), PenaltySpec())

    @pytest.mark.parametrize("seed", range(4))
    def test_strictly_decreasing(self, seed):
        x, y = random_problem(seed, n=50, p=4)
        path = lambda_path(x, y, np.ones(4, bool), PenaltySpec(grid_size=25))
        assert (np.diff(path) < 0).all()

    def test_path_starts_with_exact_zeros(self):
        x, y = random_problem(11)
        mask = np.ones(x.shape[1], bool)
        fit = cv_lasso(x, y, mask, PenaltySpec(grid_size=12, cv_folds=4), seed=0)
        assert (fit.path_coefs[0] == 0.0).all()
        assert (np.diff(fit.path_lambdas) < 0).all()

    def test_no_sign_flip_without_zero_on_dense_grid(self):
        # Coefficients may cross zero only through an exactly-zero grid point.
        rng = np.random.default_rng(12)
        x, _ = standardize(rng.normal(size=(60, 5)))
        y = x @ np.array([2.0, -1.0, 0.5, 0.0, 0.0]) + rng.normal(size=60)
        fit = cv_lasso(x, y, np.ones(5, bool),
                       PenaltySpec(grid_size=200, lambda_min_ratio=1e-4, cv_folds=4), seed=1)
        signs = np.sign(fit.path_coefs)
        product = signs[:-1] * signs[1:]
        assert (product >= 0).all()


class TestCvLasso:
    def test_deterministic(self):
        x, y = random_problem(13, n=100, p=10)
        spec = PenaltySpec(grid_size=30, cv_folds=5)
        a = cv_lasso(x, y, np.ones(10, bool), spec, seed=42)
        b = cv_lasso(x, y, np.ones(10, bool), spec, seed=42)
        assert a.lam == b.lam
        np.testing.assert_array_equal(a.coef, b.coef)

    def test_pure_noise_mostly_exact_zeros(self):
        # beta = 0 truth; across seeds the chosen fits stay >= 90% sparse.
        fractions = []
        spec = PenaltySpec(grid_size=40, cv_folds=5)
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            x, _ = standardize(rng.normal(size=(500, 50)))
            y = rng.normal(size=500)
            fit = cv_lasso(x, y, np.ones(50, bool), spec, seed=seed)
            fractions.append(np.mean(fit.coef == 0.0))
        assert np.mean(fractions) >= 0.90

    def test_strong_signal_survives(self):
        rng = np.random.default_rng(14)
        x, _ = standardize(rng.normal(size=(200, 10)))
        y = 10.0 * x[:, 3] + rng.normal(size=200)
        fit = cv_lasso(x, y, np.ones(10, bool), PenaltySpec(grid_size=40, cv_folds=5), seed=0)
        assert fit.coef[3] != 0.0

    def test_one_se_picks_larger_lambda(self):
        x, y = random_problem(15, n=120, p=12)
        mask = np.ones(12, bool)
        min_mse = cv_lasso(x, y, mask, PenaltySpec(cv_folds=5), seed=3)
        one_se = cv_lasso(x, y, mask, PenaltySpec(cv_folds=5, selection_rule="one-se"), seed=3)
        assert one_se.lam >= min_mse.lam

    def test_cv_record_shape(self):
        x, y = random_problem(16)
        spec = PenaltySpec(grid_size=17, cv_folds=4)
        fit = cv_lasso(x, y, np.ones(x.shape[1], bool), spec, seed=0)
        assert fit.cv.lambdas.shape == (17,)
        assert fit.cv.mean_mse.shape == (17,)
        assert fit.cv.se_mse.shape == (17,)
        assert fit.lam == fit.cv.lambdas[fit.cv.selected_index]

    def test_needs_enough_rows(self):
        x, y = random_problem(17, n=5)
        with pytest.raises(ValueError, match="cv_folds"):
            cv_lasso(x, y, np.ones(x.shape[1], bool), PenaltySpec(cv_folds=10), seed=0)
