"""Covariance estimation and treated-control distance matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PROPENSITY_SCALAR, RAW_COVARIATES, SCORE_2D, Dataset

COND_LIMIT = 1e12
RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class Covariance:
    matrix: np.ndarray
    inverse: np.ndarray
    ridged: bool


@dataclass(frozen=True)
class DistanceMatrix:
    """Treated-by-control distance matrix in a chosen feature space."""

    rows: np.ndarray  # treated unit indices
    cols: np.ndarray  # control unit indices
    d: np.ndarray
    space: str


def sample_covariance(F: np.ndarray) -> Covariance:
    """Unbiased sample covariance with inverse; ridges near-singular cases."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    m, q = F.shape
    if m < 2:
        raise ValueError(f"need at least 2 rows to estimate covariance (got {m})")
    cov = np.cov(F, rowvar=False, ddof=1).reshape(q, q)
    ridged = False
    cond = np.linalg.cond(cov)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        cov = cov + np.eye(q) * (RIDGE_SCALE * np.trace(cov) / q + RIDGE_SCALE)
        ridged = True
    inv = np.linalg.inv(cov)
    return Covariance(matrix=cov, inverse=inv, ridged=ridged)


def mahalanobis(u: np.ndarray, v: np.ndarray, inv_cov: np.ndarray) -> float:
    """sqrt((u-v)' inv_cov (u-v))."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or inv_cov.shape != (u.size, u.size):
        raise ValueError("dimension mismatch")
    diff = u - v
    q = float(diff @ inv_cov @ diff)
    if q < -1e-10:
        raise ValueError(f"negative quadratic form ({q}); inverse covariance is broken")
    return float(np.sqrt(max(q, 0.0)))


def pairwise_mahalanobis(A: np.ndarray, B: np.ndarray, inv_cov: np.ndarray) -> np.ndarray:
    """All-pairs Mahalanobis distances between rows of A and rows of B."""
    # Cholesky-whiten, then plain Euclidean distances.
    L = np.linalg.cholesky(inv_cov)
    Aw = A @ L
    Bw = B @ L
    aa = (Aw * Aw).sum(axis=1)[:, None]
    bb = (Bw * Bw).sum(axis=1)[None, :]
    sq = aa + bb - 2.0 * (Aw @ Bw.T)
    return np.sqrt(np.clip(sq, 0.0, None))


def build_distances(dataset: Dataset, space: str, features: np.ndarray,
                    cov_subset: np.ndarray | None = None) -> DistanceMatrix:
    """Treated-by-control distances in the requested feature space.

    features supplies the per-unit vectors: rows of X for raw_covariates,
    the fitted logit for propensity_scalar, or (phi_hat, psi_hat) columns
    for score_2d. cov_subset optionally restricts the units used for
    covariance estimation (e.g. the analysis set in pilot matching).
    """
    feats = np.asarray(features, dtype=float)
    if feats.ndim == 1:
        feats = feats[:, None]
    if feats.shape[0] != dataset.n:
        raise ValueError("feature rows must match dataset size")
    treated = dataset.treated_indices()
    controls = dataset.control_indices()

    if space == PROPENSITY_SCALAR:
        if feats.shape[1] != 1:
            raise ValueError("propensity_scalar expects one feature column")
        d = np.abs(feats[treated, 0][:, None] - feats[controls, 0][None, :])
    elif space in (RAW_COVARIATES, SCORE_2D):
        if space == SCORE_2D and feats.shape[1] != 2:
            raise ValueError("score_2d expects two feature columns")
        base = feats if cov_subset is None else feats[cov_subset]
        cov = sample_covariance(base)
        d = pairwise_mahalanobis(feats[treated], feats[controls], cov.inverse)
    else:
        raise ValueError(f"unknown space {space!r}")
    return DistanceMatrix(rows=treated, cols=controls, d=d, space=space)


def export_csv(dm: DistanceMatrix, path) -> None:
    """Debug export: rows are treated ids, columns are control ids (1-based)."""
    header = "treated," + ",".join(str(c + 1) for c in dm.cols)
    body = np.column_stack([dm.rows + 1, dm.d])
    np.savetxt(path, body, delimiter=",", header=header, comments="",
               fmt=["%d"] + ["%.17g"] * len(dm.cols))
