"""Shared domain types, dataset validation, and CSV persistence."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """A dataset or matching violated a structural invariant."""


class InfeasibleMatchError(RuntimeError):
    """The requested matching cannot be constructed from the available units."""


RAW_COVARIATES = "raw_covariates"
PROPENSITY_SCALAR = "propensity_scalar"
SCORE_2D = "score_2d"

TRUTH_COLUMNS = ("phi", "psi", "tau_i", "epsilon", "u")


@dataclass(frozen=True)
class TruthRecord:
    """Simulation ground truth: true scores, unit effects, and noise."""

    phi: np.ndarray
    psi: np.ndarray
    tau_i: np.ndarray
    epsilon: np.ndarray
    u: np.ndarray | None = None


@dataclass(frozen=True)
class Dataset:
    """An observational sample: covariates X, treatment T, outcome Y."""

    X: np.ndarray
    T: np.ndarray
    Y: np.ndarray
    truth: TruthRecord | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_treated(self) -> int:
        return int(self.T.sum())

    def treated_indices(self) -> np.ndarray:
        return np.flatnonzero(self.T == 1)

    def control_indices(self) -> np.ndarray:
        return np.flatnonzero(self.T == 0)


@dataclass(frozen=True)
class MatchedSet:
    """One treated unit with its matched controls."""

    treated: int
    controls: tuple[int, ...]
    set_distance: float = 0.0


@dataclass(frozen=True)
class Matching:
    """A collection of matched sets plus how they were built."""

    sets: tuple[MatchedSet, ...]
    space: str
    replacement: str = "without"
    k: int | None = None

    def total_distance(self) -> float:
        return float(sum(s.set_distance for s in self.sets))

    def matched_units(self) -> np.ndarray:
        out = []
        for s in self.sets:
            out.append(s.treated)
            out.extend(s.controls)
        return np.asarray(sorted(out), dtype=np.int64)


@dataclass(frozen=True)
class PilotSplit:
    """Disjoint partition of unit indices into pilot and analysis sets."""

    pilot: np.ndarray
    analysis: np.ndarray


def validate(dataset: Dataset) -> None:
    """Raise ValidationError on the first violated dataset invariant."""
    X, T, Y = dataset.X, dataset.T, dataset.Y
    if X.ndim != 2:
        raise ValidationError("X must be a 2-d matrix")
    n = X.shape[0]
    if T.shape != (n,) or Y.shape != (n,):
        raise ValidationError(
            f"dimension mismatch: X has {n} rows, T has {T.shape[0]}, Y has {Y.shape[0]}"
        )
    if not np.all(np.isin(T, (0, 1))):
        raise ValidationError("non-binary treatment")
    n_t = int(T.sum())
    if n_t == 0:
        raise ValidationError("empty treatment arm")
    if n_t == n:
        raise ValidationError("empty control arm")
    if not np.all(np.isfinite(X)):
        raise ValidationError("non-finite value in X")
    if not np.all(np.isfinite(Y)):
        raise ValidationError("non-finite value in Y")
    if dataset.truth is not None:
        tr = dataset.truth
        for name in ("phi", "psi", "tau_i", "epsilon"):
            v = getattr(tr, name)
            if v.shape != (n,):
                raise ValidationError(f"truth column {name} has wrong length")
        if tr.u is not None and tr.u.shape != (n,):
            raise ValidationError("truth column u has wrong length")


def validate_matching(matching: Matching, dataset: Dataset) -> None:
    """Check matched-set invariants against a dataset."""
    seen: set[int] = set()
    for s in matching.sets:
        if dataset.T[s.treated] != 1:
            raise ValidationError(f"set treated unit {s.treated} is not treated")
        if len(s.controls) < 1:
            raise ValidationError("matched set with no controls")
        if len(set(s.controls)) != len(s.controls):
            raise ValidationError("duplicate control within a set")
        for c in s.controls:
            if dataset.T[c] != 0:
                raise ValidationError(f"set control unit {c} is not a control")
        if matching.k is not None and len(s.controls) != matching.k:
            raise ValidationError(
                f"set has {len(s.controls)} controls, expected k={matching.k}"
            )
        if matching.replacement == "without":
            members = [s.treated, *s.controls]
            for m in members:
                if m in seen:
                    raise ValidationError(f"unit {m} reused in without-replacement matching")
                seen.add(m)


def write_csv(dataset: Dataset, path) -> None:
    """Write a dataset as CSV; values round-trip via shortest repr."""
    header = [f"x{j + 1}" for j in range(dataset.p)] + ["t", "y"]
    truth_cols: list[tuple[str, np.ndarray]] = []
    if dataset.truth is not None:
        tr = dataset.truth
        truth_cols = [("phi", tr.phi), ("psi", tr.psi), ("tau_i", tr.tau_i),
                      ("epsilon", tr.epsilon)]
        if tr.u is not None:
            truth_cols.append(("u", tr.u))
        header += [name for name, _ in truth_cols]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.X[i]]
            row.append(str(int(dataset.T[i])))
            row.append(repr(float(dataset.Y[i])))
            row.extend(repr(float(col[i])) for _, col in truth_cols)
            w.writerow(row)


def read_csv(path) -> Dataset:
    """Read a dataset written by write_csv; validates before returning."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        rows = list(reader)

    col_idx = {name: j for j, name in enumerate(header)}
    p = sum(1 for name in header if name.startswith("x") and name[1:].isdigit())
    for j in range(p):
        if f"x{j + 1}" not in col_idx:
            raise ValidationError(f"missing required column x{j + 1}")
    if p == 0:
        raise ValidationError("missing required column x1")
    for required in ("t", "y"):
        if required not in col_idx:
            raise ValidationError(f"missing required column {required}")

    n = len(rows)
    X = np.empty((n, p))
    T = np.empty(n, dtype=np.int64)
    Y = np.empty(n)
    truth_present = [name for name in TRUTH_COLUMNS if name in col_idx]

    def cell(i, name):
        raw = rows[i][col_idx[name]]
        try:
            v = float(raw)
        except ValueError:
            raise ValidationError(f"unparseable cell at row {i + 2}, column {name}: {raw!r}") from None
        if not np.isfinite(v):
            raise ValidationError(f"non-finite value at row {i + 2}, column {name}")
        return v

    for i in range(n):
        if len(rows[i]) != len(header):
            raise ValidationError(f"row {i + 2} has {len(rows[i])} cells, expected {len(header)}")
        for j in range(p):
            X[i, j] = cell(i, f"x{j + 1}")
        t = rows[i][col_idx["t"]]
        if t not in ("0", "1"):
            raise ValidationError(f"non-binary treatment at row {i + 2}: {t!r}")
        T[i] = int(t)
        Y[i] = cell(i, "y")

    truth = None
    if truth_present:
        cols = {}
        for name in truth_present:
            cols[name] = np.array([cell(i, name) for i in range(n)])
        truth = TruthRecord(
            phi=cols.get("phi", np.zeros(n)),
            psi=cols.get("psi", np.zeros(n)),
            tau_i=cols.get("tau_i", np.zeros(n)),
            epsilon=cols.get("epsilon", np.zeros(n)),
            u=cols.get("u"),
        )
    ds = Dataset(X=X, T=T, Y=Y, truth=truth)
    validate(ds)
    return ds


def write_matching_csv(matching: Matching, path) -> None:
    """Export a matching as (set_id, role, unit_id) rows; unit ids 1-based."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["set_id", "role", "unit_id"])
        for sid, s in enumerate(matching.sets, start=1):
            w.writerow([sid, "treated", s.treated + 1])
            for c in s.controls:
                w.writerow([sid, "control", c + 1])


def read_matching_csv(path, space: str = RAW_COVARIATES,
                      replacement: str = "without") -> Matching:
    """Read a matching exported by write_matching_csv (ids back to 0-based)."""
    sets: dict[int, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            sid = int(row["set_id"])
            entry = sets.setdefault(sid, {"treated": None, "controls": []})
            unit = int(row["unit_id"]) - 1
            if row["role"] == "treated":
                entry["treated"] = unit
            else:
                entry["controls"].append(unit)
    matched = []
    for sid in sorted(sets):
        entry = sets[sid]
        if entry["treated"] is None:
            raise ValidationError(f"set {sid} has no treated unit")
        matched.append(MatchedSet(treated=entry["treated"],
                                  controls=tuple(entry["controls"])))
    ks = {len(s.controls) for s in matched}
    k = ks.pop() if len(ks) == 1 else None
    return Matching(sets=tuple(matched), space=space, replacement=replacement, k=k)
