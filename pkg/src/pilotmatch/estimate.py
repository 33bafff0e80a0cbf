"""SATT estimators and the closed-form moment formulas for pair matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, Matching
from .matching import nn_with_replacement


@dataclass(frozen=True)
class EstimateResult:
    tau_hat: float
    n_sets: int
    estimator: str  # pair_mean | one_to_k | full_weighted | tau_theta


def satt_1k(matching: Matching, Y: np.ndarray) -> EstimateResult:
    """Mean within-set treated-minus-mean-control difference."""
    if not matching.sets:
        raise ValueError("empty matching")
    diffs = [
        Y[s.treated] - np.mean([Y[c] for c in s.controls])
        for s in matching.sets
    ]
    name = "pair_mean" if matching.k == 1 else "one_to_k"
    return EstimateResult(tau_hat=float(np.mean(diffs)),
                          n_sets=len(matching.sets), estimator=name)


def satt_full(matching: Matching, Y: np.ndarray) -> EstimateResult:
    """Treated-count-weighted mean of within-set differences (SATT weights)."""
    if not matching.sets:
        raise ValueError("empty matching")
    num = 0.0
    denom = 0.0
    for s in matching.sets:
        if not s.controls:
            raise ValueError("full matching set missing a control arm")
        w = 1.0  # one treated unit per set
        diff = Y[s.treated] - np.mean([Y[c] for c in s.controls])
        num += w * diff
        denom += w
    return EstimateResult(tau_hat=float(num / denom),
                          n_sets=len(matching.sets), estimator="full_weighted")


def tau_theta(dataset: Dataset, Z: np.ndarray, M: int,
              inv_cov: np.ndarray) -> EstimateResult:
    """With-replacement matching estimator over all units.

    Every unit is matched to its M nearest opposite-arm neighbors in the
    score space Z and contributes (2T - 1) * (Y - mean of matched Y).
    """
    J = nn_with_replacement(Z, dataset.T, M, inv_cov)
    sign = 2.0 * dataset.T - 1.0
    contrib = sign * (dataset.Y - dataset.Y[J].mean(axis=1))
    return EstimateResult(tau_hat=float(contrib.mean()),
                          n_sets=dataset.n, estimator="tau_theta")


def theorem1_moments(sigma: float, delta_psi_mean: float,
                     delta_psi_var: float, n_T: int):
    """Closed-form (variance, bias, MSE, MSE bound) of the pair-difference
    estimator in terms of the within-pair prognostic score gap.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if n_T < 1:
        raise ValueError("n_T must be at least 1")
    if delta_psi_var < 0:
        raise ValueError("delta_psi_var must be nonnegative")
    var = 4.0 * sigma**2 / n_T + delta_psi_var / n_T
    bias = delta_psi_mean
    mse = var + bias**2
    bound = 4.0 * sigma**2 / n_T + (delta_psi_var + delta_psi_mean**2)
    return var, bias, mse, bound
