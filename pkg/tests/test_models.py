import numpy as np
import pytest

from pilotmatch import models
from pilotmatch.models import (ScoreModel, default_lambda_grid, fit_lasso,
                               fit_logistic, fit_ols, kkt_violation,
                               log_likelihood, logistic_score, predict_linear)


def _logistic_data(n=4000, p=3, seed=0, beta0=-1.0, beta=(0.8, -0.5, 0.0)):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    eta = beta0 + X @ np.array(beta)
    T = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(np.int64)
    return X, T


class TestLogistic:
    def test_recovers_coefficients(self):
        X, T = _logistic_data(n=20000)
        m = fit_logistic(X, T)
        assert m.converged
        assert m.intercept == pytest.approx(-1.0, abs=0.1)
        np.testing.assert_allclose(m.coef, [0.8, -0.5, 0.0], atol=0.1)

    def test_gradient_matches_finite_differences(self):
        X, T = _logistic_data(n=200)
        beta = np.array([0.3, -0.2, 0.5, 0.1])  # intercept first
        g = logistic_score(beta, X, T)
        eps = 1e-6
        for j in range(beta.size):
            b1, b2 = beta.copy(), beta.copy()
            b1[j] += eps
            b2[j] -= eps
            fd = (log_likelihood(b1, X, T) - log_likelihood(b2, X, T)) / (2 * eps)
            assert g[j] == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_degenerate_design_falls_back_to_ridge(self):
        # exactly collinear columns make the unpenalized IRLS system
        # singular; the ridge refit keeps the fit finite but unconverged
        rng = np.random.default_rng(10)
        a = rng.normal(size=80)
        X = np.column_stack([a, 2.0 * a])
        T = (a + rng.normal(size=80) > 0).astype(np.int64)
        m = fit_logistic(X, T)
        assert not m.converged
        assert np.all(np.isfinite(m.coef))

    def test_prediction_is_linear_predictor(self):
        m = ScoreModel(kind="logistic", intercept=1.0,
                       coef=np.array([2.0, -1.0]), lam=None, converged=True,
                       iterations=1)
        eta = predict_linear(m, np.array([[1.0, 1.0]]))
        assert eta[0] == pytest.approx(2.0)

    def test_dimension_check(self):
        m = fit_logistic(*_logistic_data(n=500))
        with pytest.raises(ValueError):
            predict_linear(m, np.zeros((4, 7)))


class TestOls:
    def test_exact_recovery_on_noiseless_data(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(50, 4))
        Y = 2.5 + X @ np.array([1.0, -2.0, 0.5, 0.0])
        m = fit_ols(X, Y)
        assert m.intercept == pytest.approx(2.5, abs=1e-10)
        np.testing.assert_allclose(m.coef, [1.0, -2.0, 0.5, 0.0], atol=1e-10)

    def test_rank_deficiency_rejected(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(30, 2))
        X = np.column_stack([X, X[:, 0] + X[:, 1]])
        with pytest.raises(ValueError, match="rank"):
            fit_ols(X, rng.normal(size=30))


class TestLasso:
    def _sparse_data(self, n=300, p=12, seed=3, noise=0.5):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, p))
        beta = np.zeros(p)
        beta[:3] = [2.0, -1.5, 1.0]
        Y = 1.0 + X @ beta + noise * rng.normal(size=n)
        return X, Y, beta

    def test_gaussian_selects_signal(self):
        X, Y, beta = self._sparse_data()
        m = fit_lasso(X, Y, family="gaussian")
        assert m.kind == "lasso_gaussian"
        assert m.lam > 0
        # signal coefficients survive, most noise coefficients shrink away
        assert np.all(np.abs(m.coef[:3] - beta[:3]) < 0.3)
        assert np.sum(np.abs(m.coef[3:]) > 0.2) == 0

    def test_gaussian_kkt_certificate(self):
        X, Y, _ = self._sparse_data(seed=4)
        m = fit_lasso(X, Y, family="gaussian")
        assert kkt_violation(m, X, Y) < 1e-6

    def test_binomial_fit_and_kkt(self):
        X, T = _logistic_data(n=800, p=5, beta=(1.0, -1.0, 0.0, 0.0, 0.0))
        m = fit_lasso(X, T.astype(float), family="binomial")
        assert m.kind == "lasso_binomial"
        assert kkt_violation(m, X, T.astype(float)) < 1e-4
        assert m.coef[0] > 0 > m.coef[1]

    def test_lambda_grid_zeroes_everything_at_max(self):
        X, Y, _ = self._sparse_data(seed=5)
        Xs = (X - X.mean(0)) / X.std(0)
        grid = default_lambda_grid(Xs, Y - Y.mean(), "gaussian")
        assert grid[0] == max(grid)
        m = fit_lasso(X, Y, family="gaussian", lambda_grid=[grid[0]])
        np.testing.assert_allclose(m.coef, 0.0, atol=1e-10)

    def test_unknown_family(self):
        X, Y, _ = self._sparse_data()
        with pytest.raises(ValueError, match="family"):
            fit_lasso(X, Y, family="poisson")
