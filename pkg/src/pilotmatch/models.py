"""Score models: logistic (IRLS), least squares, and lasso variants.

The "score" consumed downstream is always the linear predictor, so
predict_linear never applies a sigmoid for logistic kinds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IRLS_MAX_ITER = 100
IRLS_TOL = 1e-8
RIDGE_FALLBACK = 1e-4
CD_TOL = 1e-10
CD_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class ScoreModel:
    """Fitted linear score model (coefficients on the original scale)."""

    kind: str  # logistic | ols | lasso_binomial | lasso_gaussian
    intercept: float
    coef: np.ndarray
    lam: float | None = None
    converged: bool = True
    iterations: int = 0

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "intercept": self.intercept,
            "coef": [float(c) for c in self.coef],
            "converged": self.converged,
            "iterations": self.iterations,
        }
        if self.lam is not None:
            d["lambda"] = self.lam
        return d


def predict_linear(model: ScoreModel, X: np.ndarray) -> np.ndarray:
    """Linear predictor intercept + X @ coef (logit scale for logistic kinds)."""
    if X.shape[1] != model.coef.shape[0]:
        raise ValueError(
            f"design has {X.shape[1]} columns, model has {model.coef.shape[0]} coefficients"
        )
    return model.intercept + X @ model.coef


def _sigmoid(eta):
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ez = np.exp(eta[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_score(beta: np.ndarray, X: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Gradient of the Bernoulli log-likelihood at beta (intercept first)."""
    Xd = np.column_stack([np.ones(X.shape[0]), X])
    return Xd.T @ (T - _sigmoid(Xd @ beta))


def log_likelihood(beta: np.ndarray, X: np.ndarray, T: np.ndarray) -> float:
    Xd = np.column_stack([np.ones(X.shape[0]), X])
    eta = Xd @ beta
    # log(1 + e^eta) computed stably
    return float(T @ eta - np.sum(np.logaddexp(0.0, eta)))


def fit_logistic(X: np.ndarray, T: np.ndarray) -> ScoreModel:
    """Maximum-likelihood logistic fit by IRLS.

    Falls back to a ridge-stabilized refit (penalty on slopes only) when
    the score equations fail to converge, e.g. under quasi-separation;
    such fits carry converged=False.
    """
    n, p = X.shape
    if n <= p + 1:
        raise ValueError(f"need n > p+1 (n={n}, p={p})")
    classes = np.unique(T)
    if classes.size != 2:
        raise ValueError("treatment vector must contain both classes")

    beta, iters, ok = _irls(X, T, ridge=0.0)
    if ok:
        return ScoreModel("logistic", float(beta[0]), beta[1:].copy(),
                          converged=True, iterations=iters)
    beta, iters2, _ = _irls(X, T, ridge=RIDGE_FALLBACK)
    if not np.all(np.isfinite(beta)):
        raise np.linalg.LinAlgError("logistic fit singular even after ridge fallback")
    return ScoreModel("logistic", float(beta[0]), beta[1:].copy(),
                      converged=False, iterations=iters + iters2)


def _irls(X, T, ridge):
    n, p = X.shape
    Xd = np.column_stack([np.ones(n), X])
    beta = np.zeros(p + 1)
    pen = np.zeros(p + 1)
    pen[1:] = ridge  # intercept unpenalized
    for it in range(1, IRLS_MAX_ITER + 1):
        eta = Xd @ beta
        mu = _sigmoid(eta)
        score = Xd.T @ (T - mu) - pen * beta
        if np.max(np.abs(score)) < IRLS_TOL:
            return beta, it, True
        w = np.clip(mu * (1.0 - mu), 1e-12, None)
        H = (Xd * w[:, None]).T @ Xd + np.diag(pen)
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            return beta, it, False
        # Dampen oversized Newton steps to keep quasi-separated fits finite.
        norm = np.max(np.abs(step))
        if norm > 10.0:
            step *= 10.0 / norm
        beta = beta + step
        if not np.all(np.isfinite(beta)):
            return beta, it, False
    return beta, IRLS_MAX_ITER, False


def fit_ols(X: np.ndarray, Y: np.ndarray) -> ScoreModel:
    """Least squares via QR; raises on rank deficiency."""
    n, p = X.shape
    if n <= p + 1:
        raise ValueError(f"need n > p+1 (n={n}, p={p})")
    Xd = np.column_stack([np.ones(n), X])
    beta, _, rank, _ = np.linalg.lstsq(Xd, Y, rcond=None)
    if rank < p + 1:
        raise np.linalg.LinAlgError(
            f"design is rank deficient (rank {rank} < {p + 1})"
        )
    return ScoreModel("ols", float(beta[0]), beta[1:].copy(), converged=True,
                      iterations=1)


def _soft_threshold(z, g):
    return np.sign(z) * max(abs(z) - g, 0.0)


def _cd_gaussian(Xs, r, b, lam, weights=None):
    """One full coordinate-descent sweep; returns max coefficient change.

    Xs columns are standardized; r is the running residual (updated in place).
    """
    n = Xs.shape[0]
    if weights is None:
        denom = (Xs * Xs).sum(axis=0) / n
    else:
        denom = (Xs * Xs * weights[:, None]).sum(axis=0) / n
    denom = np.clip(denom, 1e-12, None)
    delta = 0.0
    for j in range(Xs.shape[1]):
        xj = Xs[:, j]
        if weights is None:
            z = denom[j] * b[j] + xj @ r / n
        else:
            z = denom[j] * b[j] + xj @ (weights * r) / n
        bj_new = _soft_threshold(z, lam) / denom[j]
        if bj_new != b[j]:
            r -= (bj_new - b[j]) * xj
            delta = max(delta, abs(bj_new - b[j]))
            b[j] = bj_new
    return delta


def _lasso_gaussian_path(Xs, yc, lambdas):
    """Coordinate descent over a decreasing lambda path with warm starts."""
    b = np.zeros(Xs.shape[1])
    path = []
    total_sweeps = 0
    for lam in lambdas:
        r = yc - Xs @ b
        for _ in range(CD_MAX_SWEEPS):
            total_sweeps += 1
            if _cd_gaussian(Xs, r, b, lam) < CD_TOL:
                break
        path.append(b.copy())
    return path, total_sweeps


def _lasso_binomial_fit(Xs, t, lam, b0, b):
    """Penalized logistic via IRLS with weighted coordinate descent inner loop."""
    n = Xs.shape[0]
    sweeps = 0
    for _ in range(50):
        eta = b0 + Xs @ b
        mu = _sigmoid(eta)
        w = np.clip(mu * (1.0 - mu), 1e-5, None)
        z = eta + (t - mu) / w  # working response
        b_old = b.copy()
        b0_old = b0
        for _ in range(CD_MAX_SWEEPS):
            sweeps += 1
            r = z - b0 - Xs @ b
            b0 = b0 + (w * r).sum() / w.sum()
            r = z - b0 - Xs @ b
            if _cd_gaussian(Xs, r, b, lam, weights=w) < CD_TOL:
                break
        if max(abs(b0 - b0_old), np.max(np.abs(b - b_old), initial=0.0)) < 1e-9:
            break
    return b0, b, sweeps


def default_lambda_grid(Xs, target, family, n_lambda=50, ratio=1e-3):
    n = Xs.shape[0]
    center = target.mean()
    lam_max = np.max(np.abs(Xs.T @ (target - center))) / n
    lam_max = max(lam_max, 1e-10)
    return np.geomspace(lam_max, lam_max * ratio, n_lambda)


def fit_lasso(X: np.ndarray, target: np.ndarray, family: str = "gaussian",
              lambda_grid=None, n_folds: int = 10) -> ScoreModel:
    """Lasso fit with lambda chosen by cross-validated deviance.

    Predictors are standardized internally; reported coefficients are on
    the original scale. The returned lambda refers to the standardized
    problem with the 1/(2n) loss convention.
    """
    if family not in ("gaussian", "binomial"):
        raise ValueError(f"unknown family {family!r}")
    n, p = X.shape
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Xs = (X - mean) / sd

    if lambda_grid is None:
        lambda_grid = default_lambda_grid(Xs, target, family)
    lambdas = np.sort(np.asarray(lambda_grid, dtype=float))[::-1]
    if lambdas.size == 0:
        raise ValueError("empty lambda grid")

    if lambdas.size > 1:
        best_lam = _cv_choose_lambda(Xs, target, family, lambdas, n_folds)
    else:
        best_lam = float(lambdas[0])

    # Final fit on the full data at the chosen lambda (warm-started path).
    if family == "gaussian":
        yc = target - target.mean()
        fit_lams = [lam for lam in lambdas if lam >= best_lam]
        path, sweeps = _lasso_gaussian_path(Xs, yc, fit_lams)
        b_std = path[-1]
        b0_std = target.mean()
        kind = "lasso_gaussian"
    else:
        b0_std, b_std = 0.0, np.zeros(p)
        sweeps = 0
        for lam in [lam for lam in lambdas if lam >= best_lam]:
            b0_std, b_std, s = _lasso_binomial_fit(Xs, target, lam, b0_std, b_std)
            sweeps += s
        kind = "lasso_binomial"

    coef = b_std / sd
    intercept = float(b0_std - (coef * mean).sum())
    return ScoreModel(kind, intercept, coef, lam=float(best_lam),
                      converged=True, iterations=sweeps)


def _fold_ids(n, n_folds):
    return np.arange(n) % n_folds


def _cv_choose_lambda(Xs, target, family, lambdas, n_folds):
    n = Xs.shape[0]
    folds = _fold_ids(n, n_folds)
    deviance = np.zeros(lambdas.size)
    for f in range(n_folds):
        test = folds == f
        train = ~test
        if family == "binomial":
            if np.unique(target[train]).size < 2 or not test.any():
                raise ValueError(f"degenerate fold {f}: a class is missing")
        Xtr, Xte = Xs[train], Xs[test]
        ytr, yte = target[train], target[test]
        if family == "gaussian":
            path, _ = _lasso_gaussian_path(Xtr, ytr - ytr.mean(), lambdas)
            for li, b in enumerate(path):
                pred = ytr.mean() + Xte @ b
                deviance[li] += np.sum((yte - pred) ** 2)
        else:
            b0, b = 0.0, np.zeros(Xs.shape[1])
            for li, lam in enumerate(lambdas):
                b0, b, _ = _lasso_binomial_fit(Xtr, ytr, lam, b0, b)
                eta = b0 + Xte @ b
                deviance[li] += 2.0 * np.sum(np.logaddexp(0.0, eta) - yte * eta)
    return float(lambdas[int(np.argmin(deviance))])


def kkt_violation(model: ScoreModel, X: np.ndarray, target: np.ndarray) -> float:
    """Max KKT residual of a lasso fit on its standardized problem.

    Zero coefficients require |gradient| <= lambda; active ones require
    gradient = lambda * sign(coef). Returns the largest violation.
    """
    if model.lam is None:
        raise ValueError("model carries no lasso penalty")
    n = X.shape[0]
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Xs = (X - mean) / sd
    b_std = model.coef * sd
    eta = model.intercept + X @ model.coef
    if model.kind == "lasso_gaussian":
        grad = Xs.T @ (target - eta) / n
    else:
        grad = Xs.T @ (target - _sigmoid(eta)) / n
    worst = 0.0
    for j in range(Xs.shape[1]):
        if b_std[j] == 0.0:
            worst = max(worst, abs(grad[j]) - model.lam)
        else:
            worst = max(worst, abs(grad[j] - model.lam * np.sign(b_std[j])))
    return worst
