"""Optimal matching: fixed-ratio 1:k, full matching, with-replacement
nearest neighbors, and a brute-force oracle for small instances.

Distances are scaled by 1e6 and rounded to integers before hitting the
flow solver, so optimality is exact for the rounded costs and rounding
perturbs totals by less than 1e-6 per arc used.
"""

from __future__ import annotations

import itertools

import numpy as np

from .core import InfeasibleMatchError, MatchedSet, Matching
from .distance import DistanceMatrix, pairwise_mahalanobis
from .flow import MinCostFlow

COST_SCALE = 1_000_000

BRUTE_MAX_TREATED = 6
BRUTE_MAX_CONTROLS = 12


def scale_costs(d: np.ndarray) -> np.ndarray:
    return np.rint(d * COST_SCALE).astype(np.int64)


# Above this many treated-control pairs, the solver starts from a sparse
# candidate arc set and proves optimality by pricing the omitted arcs.
DENSE_PAIR_LIMIT = 40_000
_PRICING_ROUNDS = 60


def _candidate_mask(cost, q, r=0):
    """Per-row q cheapest pairs (plus per-column r cheapest when r > 0)."""
    nt, nc = cost.shape
    mask = np.zeros((nt, nc), dtype=bool)
    q = min(q, nc)
    idx = np.argpartition(cost, q - 1, axis=1)[:, :q]
    mask[np.arange(nt)[:, None], idx] = True
    if r > 0:
        r = min(r, nt)
        idx = np.argpartition(cost, r - 1, axis=0)[:r, :]
        mask[idx, np.arange(nc)[None, :]] = True
    return mask


def _solve_pairs_pruned(cost, build_and_solve, q0, r0=0):
    """Run build_and_solve on growing candidate arc sets until the dual
    potentials certify optimality over every omitted pair.

    build_and_solve(pairs_i, pairs_j) must return (feasible, used_mask,
    pot_t, pot_c): flags, the nt x nc usage for the candidate pairs, and
    node potentials for treated rows and control columns.
    """
    nt, nc = cost.shape
    q, r = q0, r0
    mask = _candidate_mask(cost, q, r)
    for _ in range(_PRICING_ROUNDS):
        pi, pj = np.nonzero(mask)
        feasible, used, pot_t, pot_c = build_and_solve(pi, pj)
        if not feasible:
            if q >= nc and (r0 == 0 or r >= nt):
                return False, used
            q = min(nc, q * 2)
            if r0 > 0:
                r = min(nt, r * 2)
            mask = _candidate_mask(cost, q, r)
            continue
        reduced = cost + pot_t[:, None] - pot_c[None, :]
        violated = (reduced < 0) & ~mask
        if not violated.any():
            return True, used
        mask |= violated
    # Fallback: all arcs (pricing failed to settle; should not happen).
    pi, pj = np.nonzero(np.ones((nt, nc), dtype=bool))
    feasible, used, _, _ = build_and_solve(pi, pj)
    return feasible, used


def optimal_k_match(dm: DistanceMatrix, k: int) -> Matching:
    """Minimum-total-distance 1:k matching without replacement."""
    nt, nc = dm.d.shape
    if k < 1:
        raise ValueError("k must be at least 1")
    if k * nt > nc:
        raise InfeasibleMatchError(
            f"need {k * nt} controls for 1:{k} matching of {nt} treated, have {nc}"
        )
    cost = scale_costs(dm.d)

    # nodes: 0 source | 1..nt treated | nt+1..nt+nc controls | sink
    source = 0
    sink = nt + nc + 1
    t_nodes = 1 + np.arange(nt)
    c_nodes = 1 + nt + np.arange(nc)

    def build_and_solve(pi, pj):
        mcf = MinCostFlow(sink + 1)
        mcf.add_arcs(np.full(nt, source), t_nodes, k, 0)
        pair_ids = mcf.add_arcs(t_nodes[pi], c_nodes[pj], 1, cost[pi, pj])
        mcf.add_arcs(c_nodes, np.full(nc, sink), 1, 0)
        sent, _ = mcf.solve(source, sink, k * nt)
        used = np.zeros((nt, nc), dtype=bool)
        if sent < k * nt:
            return False, used, None, None
        used[pi, pj] = mcf.flows(pair_ids) > 0
        pot = mcf._potential
        return True, used, pot[t_nodes], pot[c_nodes]

    if nt * nc <= DENSE_PAIR_LIMIT:
        pi, pj = np.nonzero(np.ones((nt, nc), dtype=bool))
        feasible, used, _, _ = build_and_solve(pi, pj)
    else:
        feasible, used = _solve_pairs_pruned(cost, build_and_solve,
                                             q0=max(4 * k, 32))
    if not feasible:
        raise InfeasibleMatchError(
            f"flow infeasible for 1:{k} matching of {nt} treated to {nc} controls"
        )
    sets = []
    for i in range(nt):
        controls = np.flatnonzero(used[i])
        sets.append(MatchedSet(
            treated=int(dm.rows[i]),
            controls=tuple(int(dm.cols[j]) for j in controls),
            set_distance=float(dm.d[i, controls].sum()),
        ))
    return Matching(sets=tuple(sets), space=dm.space, replacement="without", k=k)


def brute_force_match(dm: DistanceMatrix, k: int) -> Matching:
    """Exhaustive-enumeration oracle for optimal_k_match on tiny instances.

    Minimizes the same integer-scaled total; ties broken by lexicographic
    control-index order across treated units.
    """
    nt, nc = dm.d.shape
    if nt > BRUTE_MAX_TREATED or nc > BRUTE_MAX_CONTROLS:
        raise ValueError(
            f"instance too large for brute force ({nt}x{nc}); "
            f"guard is {BRUTE_MAX_TREATED}x{BRUTE_MAX_CONTROLS}"
        )
    if k * nt > nc:
        raise InfeasibleMatchError(
            f"need {k * nt} controls for 1:{k} matching of {nt} treated, have {nc}"
        )
    cost = scale_costs(dm.d)
    best_total = None
    best_assign = None

    def recurse(i, available, total, acc):
        nonlocal best_total, best_assign
        if best_total is not None and total > best_total:
            return
        if i == nt:
            if best_total is None or total < best_total:
                best_total = total
                best_assign = list(acc)
            return
        for combo in itertools.combinations(sorted(available), k):
            recurse(i + 1, available - set(combo),
                    total + int(cost[i, list(combo)].sum()), acc + [combo])

    recurse(0, set(range(nc)), 0, [])
    sets = []
    for i, combo in enumerate(best_assign):
        sets.append(MatchedSet(
            treated=int(dm.rows[i]),
            controls=tuple(int(dm.cols[j]) for j in combo),
            set_distance=float(dm.d[i, list(combo)].sum()),
        ))
    return Matching(sets=tuple(sets), space=dm.space, replacement="without", k=k)


def full_match(dm: DistanceMatrix, min_ratio: int = 1,
               max_ratio: int | None = None) -> Matching:
    """Optimal full matching: every unit in exactly one set.

    Each set holds one treated unit and between min_ratio and max_ratio
    controls; every control is used exactly once. max_ratio=None leaves
    the ratio unrestricted (any feasible set size), which lets treated
    units in control-dense regions absorb many controls while others
    keep close small sets. Requires at least as many controls as treated
    units (one treated per set).
    """
    nt, nc = dm.d.shape
    if nt == 0 or nc == 0:
        raise InfeasibleMatchError("both arms must be nonempty")
    if nc < nt:
        raise InfeasibleMatchError(
            "full matching with multiple treated units per set is not supported; "
            f"need controls >= treated ({nc} < {nt})"
        )
    if max_ratio is None:
        max_ratio = nc - (nt - 1) * int(min_ratio)
    if not 0 < min_ratio <= max_ratio:
        raise ValueError("require 0 < min_ratio <= max_ratio")
    if nc < nt * min_ratio or nc > nt * max_ratio:
        raise InfeasibleMatchError(
            f"{nc} controls cannot be split over {nt} sets with "
            f"{min_ratio}..{max_ratio} controls each"
        )
    lo, hi = int(min_ratio), int(max_ratio)
    cost = scale_costs(dm.d)

    # Lower bounds removed via a super source/sink pair:
    # nodes: 0 SS | 1 TT | 2 S | 3 T | 4.. treated | 4+nt.. controls
    ss, tt, s, t = 0, 1, 2, 3
    t_nodes = 4 + np.arange(nt)
    c_nodes = 4 + nt + np.arange(nc)
    target = nt * lo + nc

    def build_and_solve(pi, pj):
        mcf = MinCostFlow(4 + nt + nc)
        mcf.add_arcs(np.full(nt, ss), t_nodes, lo, 0)  # forced intake
        mcf.add_arc(ss, t, nc, 0)
        if hi > lo:
            mcf.add_arcs(np.full(nt, s), t_nodes, hi - lo, 0)
        pair_ids = mcf.add_arcs(t_nodes[pi], c_nodes[pj], 1, cost[pi, pj])
        mcf.add_arcs(c_nodes, np.full(nc, tt), 1, 0)
        mcf.add_arc(s, tt, nt * lo, 0)
        mcf.add_arc(t, s, nc + nt * lo, 0)
        sent, _ = mcf.solve(ss, tt, target)
        used = np.zeros((nt, nc), dtype=bool)
        if sent < target:
            return False, used, None, None
        used[pi, pj] = mcf.flows(pair_ids) > 0
        pot = mcf._potential
        return True, used, pot[t_nodes], pot[c_nodes]

    if nt * nc <= DENSE_PAIR_LIMIT:
        pi, pj = np.nonzero(np.ones((nt, nc), dtype=bool))
        feasible, used, _, _ = build_and_solve(pi, pj)
    else:
        feasible, used = _solve_pairs_pruned(cost, build_and_solve,
                                             q0=max(4 * hi, 32), r0=8)
    if not feasible:
        raise InfeasibleMatchError(
            f"full matching infeasible: could not route all {target} units"
        )
    sets = []
    for i in range(nt):
        controls = np.flatnonzero(used[i])
        sets.append(MatchedSet(
            treated=int(dm.rows[i]),
            controls=tuple(int(dm.cols[j]) for j in controls),
            set_distance=float(dm.d[i, controls].sum()),
        ))
    return Matching(sets=tuple(sets), space=dm.space, replacement="without", k=None)


def nn_with_replacement(Z: np.ndarray, T: np.ndarray, M: int,
                        inv_cov: np.ndarray) -> np.ndarray:
    """M nearest opposite-arm units for every unit, with replacement.

    Returns an (n, M) index matrix: row i holds the M opposite-treatment
    units closest to Z_i in Mahalanobis distance, nearest first, ties
    broken by lower unit index.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    T = np.asarray(T)
    n = Z.shape[0]
    treated = np.flatnonzero(T == 1)
    controls = np.flatnonzero(T == 0)
    if min(treated.size, controls.size) < M:
        raise InfeasibleMatchError(
            f"both arms need at least M={M} units "
            f"(treated={treated.size}, controls={controls.size})"
        )
    out = np.empty((n, M), dtype=np.int64)
    d_tc = pairwise_mahalanobis(Z[treated], Z[controls], inv_cov)
    order = np.argsort(d_tc, axis=1, kind="stable")[:, :M]
    out[treated] = controls[order]
    order = np.argsort(d_tc.T, axis=1, kind="stable")[:, :M]
    out[controls] = treated[order]
    return out
