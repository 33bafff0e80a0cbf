"""Pilot-set allocation and the joint-score matching pipeline.

Pipeline: fit the propensity model on the full sample, carve out a pilot
set of controls via a preliminary 1:2 Mahalanobis matching (one control
of each pair chosen at random), fit the prognostic model on the pilot
controls only, then optimally match the analysis set on the estimated
(propensity, prognostic) score pair. Outcomes of the analysis set are
never read before the matching is fixed: matching code receives no Y.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import core, models
from .core import (RAW_COVARIATES, SCORE_2D, Dataset, InfeasibleMatchError,
                   Matching, MatchedSet, PilotSplit)
from .datagen import derive_seed, rng_for
from .distance import build_distances
from .matching import full_match, optimal_k_match

FULL_MATCH = "full"


@dataclass(frozen=True)
class ModelOptions:
    """How the score models are specified and fit."""

    specification: str = "over_specified"  # or "correct"
    lasso: bool = False

    def design(self, X: np.ndarray) -> np.ndarray:
        if self.specification == "correct":
            return X[:, :2]
        if self.specification == "over_specified":
            return X
        raise ValueError(f"unknown specification {self.specification!r}")


@dataclass(frozen=True)
class PilotResult:
    matching: Matching
    phi_model: models.ScoreModel
    psi_model: models.ScoreModel
    split: PilotSplit
    phi_hat: np.ndarray
    psi_hat: np.ndarray

    def audit_record(self, seed: int) -> dict:
        return {
            "seed": seed,
            "pilot_indices": [int(i) + 1 for i in self.split.pilot],
            "propensity_model": self.phi_model.to_dict(),
            "prognostic_model": self.psi_model.to_dict(),
            "n_matched_sets": len(self.matching.sets),
        }

    def write_audit(self, path, seed: int) -> None:
        with open(path, "w") as fh:
            json.dump(self.audit_record(seed), fh, indent=2)


def select_pilot(dataset: Dataset, seed: int) -> PilotSplit:
    """Allocate the pilot set via an optimal 1:2 Mahalanobis matching.

    From each treated unit's matched control pair, one control is chosen
    uniformly at random into the pilot set P; everything else forms the
    analysis set. |P| equals the number of treated units.
    """
    n_t = dataset.n_treated
    n_c = dataset.n - n_t
    if n_c < 2 * n_t:
        raise InfeasibleMatchError(
            f"pilot selection needs {2 * n_t} controls for a 1:2 match, have {n_c}"
        )
    dm = build_distances(dataset, RAW_COVARIATES, dataset.X)
    prelim = optimal_k_match(dm, 2)
    rng = rng_for(derive_seed(seed, "pilot-choice"))
    picks = rng.integers(0, 2, size=len(prelim.sets))
    pilot = np.sort(np.array(
        [s.controls[picks[i]] for i, s in enumerate(prelim.sets)], dtype=np.int64
    ))
    mask = np.ones(dataset.n, dtype=bool)
    mask[pilot] = False
    return PilotSplit(pilot=pilot, analysis=np.flatnonzero(mask))


def _fit_prognostic(Xp: np.ndarray, Yp: np.ndarray, opts: ModelOptions) -> models.ScoreModel:
    n, p = Xp.shape
    if opts.lasso:
        return models.fit_lasso(Xp, Yp, family="gaussian")
    if n <= p + 1:
        raise ValueError(
            f"pilot set too small for unpenalized least squares "
            f"({n} units, {p} covariates); use lasso model options"
        )
    return models.fit_ols(Xp, Yp)


def run_pilot_pipeline(dataset: Dataset, k, seed: int,
                       model_opts: ModelOptions | None = None) -> PilotResult:
    """Algorithm: propensity on all data, prognostic on the pilot controls,
    optimal joint-score matching of the analysis set.

    k is a positive integer for fixed-ratio matching or the string "full"
    for full matching.
    """
    opts = model_opts or ModelOptions()
    Xm = opts.design(dataset.X)

    if opts.lasso:
        phi_model = models.fit_lasso(Xm, dataset.T.astype(float), family="binomial")
    else:
        phi_model = models.fit_logistic(Xm, dataset.T)

    split = select_pilot(dataset, seed)
    psi_model = _fit_prognostic(Xm[split.pilot], dataset.Y[split.pilot], opts)

    phi_hat = models.predict_linear(phi_model, Xm)
    psi_hat = models.predict_linear(psi_model, Xm)

    analysis = split.analysis
    sub = Dataset(X=dataset.X[analysis], T=dataset.T[analysis],
                  Y=dataset.Y[analysis])
    feats = np.column_stack([phi_hat[analysis], psi_hat[analysis]])
    dm = build_distances(sub, SCORE_2D, feats)
    if k == FULL_MATCH:
        local = full_match(dm)
    else:
        local = optimal_k_match(dm, int(k))
    matching = remap_matching(local, analysis)
    return PilotResult(matching=matching, phi_model=phi_model,
                       psi_model=psi_model, split=split,
                       phi_hat=phi_hat, psi_hat=psi_hat)


def remap_matching(local: Matching, index_map: np.ndarray) -> Matching:
    """Translate a matching on a row subset back to parent-dataset indices."""
    sets = tuple(
        MatchedSet(
            treated=int(index_map[s.treated]),
            controls=tuple(int(index_map[c]) for c in s.controls),
            set_distance=s.set_distance,
        )
        for s in local.sets
    )
    return Matching(sets=sets, space=local.space,
                    replacement=local.replacement, k=local.k)
