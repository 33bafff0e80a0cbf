import itertools

import numpy as np
import pytest
from scipy.special import ndtr

from pilotmatch.core import MatchedSet, Matching, SCORE_2D
from pilotmatch.sensitivity import (DegenerateStatisticError, aligned_sets,
                                    gamma_pvalue_bound, max_gamma,
                                    worst_case_moments)


def _matching(n_sets, k):
    sets = tuple(
        MatchedSet(treated=i, controls=tuple(n_sets + i * k + j for j in range(k)))
        for i in range(n_sets)
    )
    return Matching(sets=sets, space=SCORE_2D, replacement="without", k=k)


def _effectful_y(n_sets, k, effect=1.0, seed=0):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=n_sets * (1 + k))
    Y[:n_sets] += effect
    return Y


class TestAlignedSets:
    def test_centered_treated_first(self):
        m = _matching(1, 2)
        Y = np.array([5.0, 2.0, 2.0])
        (q,) = aligned_sets(m, Y)
        np.testing.assert_allclose(q, [2.0, -1.0, -1.0])
        assert q.sum() == pytest.approx(0.0)

    def test_location_invariance(self):
        m = _matching(3, 1)
        Y = _effectful_y(3, 1)
        shifted = aligned_sets(m, Y + 100.0)
        for a, b in zip(aligned_sets(m, Y), shifted):
            np.testing.assert_allclose(a, b, atol=1e-10)


class TestWorstCaseMoments:
    def test_hand_pair(self):
        # pair q = (+1, -1) at gamma 3: worst-case P(+1)=3/4
        mu, var = worst_case_moments([np.array([1.0, -1.0])], 3.0)
        assert mu == pytest.approx(0.5)
        assert var == pytest.approx(0.75)

    def test_gamma_one_is_uniform(self):
        q = np.array([2.0, -0.5, -1.5])
        mu, var = worst_case_moments([q], 1.0)
        assert mu == pytest.approx(q.mean())
        assert var == pytest.approx(q.var())

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_exhaustive_weight_patterns(self, seed):
        rng = np.random.default_rng(seed)
        gamma = float(rng.uniform(1.0, 8.0))
        q_sets = []
        for _ in range(rng.integers(1, 5)):
            q = rng.normal(size=rng.integers(2, 5))
            q_sets.append(q - q.mean())
        mu, var = worst_case_moments(q_sets, gamma)
        bmu = bvar = 0.0
        for q in q_sets:
            best = (-np.inf, 0.0)
            for pat in itertools.product([1.0, gamma], repeat=q.size):
                w = np.array(pat)
                m1 = float(w @ q / w.sum())
                v = float(w @ (q * q) / w.sum() - m1 * m1)
                if m1 > best[0] + 1e-12 or (abs(m1 - best[0]) <= 1e-12 and v > best[1]):
                    best = (m1, v)
            bmu += best[0]
            bvar += best[1]
        assert mu == pytest.approx(bmu, abs=1e-9)
        assert var == pytest.approx(bvar, abs=1e-9)


class TestPvalueBound:
    def test_gamma_one_matches_classical_z(self):
        m = _matching(20, 1)
        Y = _effectful_y(20, 1, effect=1.5)
        q_sets = aligned_sets(m, Y)
        stat = sum(q[0] for q in q_sets)
        var = sum(float(np.mean(q**2)) for q in q_sets)
        expected = float(ndtr(-stat / np.sqrt(var)))
        assert gamma_pvalue_bound(m, Y, 1.0) == pytest.approx(expected, abs=1e-10)

    def test_monotone_in_gamma(self):
        m = _matching(15, 2)
        Y = _effectful_y(15, 2, effect=1.0, seed=3)
        ps = [gamma_pvalue_bound(m, Y, g) for g in (1.0, 1.5, 2.0, 4.0, 8.0)]
        assert all(a <= b + 1e-12 for a, b in zip(ps, ps[1:]))

    def test_negative_effect_uses_other_tail(self):
        m = _matching(20, 1)
        Y = _effectful_y(20, 1, effect=-2.0)
        p = gamma_pvalue_bound(m, Y, 1.0)
        assert p < 0.05  # significant in the negative direction

    def test_gamma_below_one_rejected(self):
        m = _matching(2, 1)
        with pytest.raises(ValueError):
            gamma_pvalue_bound(m, np.ones(4), 0.5)

    def test_degenerate_sets(self):
        m = _matching(3, 1)
        with pytest.raises(DegenerateStatisticError):
            gamma_pvalue_bound(m, np.zeros(6), 2.0)


class TestMaxGamma:
    def test_not_significant_flag(self):
        rng = np.random.default_rng(5)
        m = _matching(10, 1)
        Y = rng.normal(size=20)  # no effect
        res = max_gamma(m, Y)
        if not res.significant_at_one:
            assert res.gamma_star == 1.0

    def test_bracket_property(self):
        m = _matching(40, 1)
        Y = _effectful_y(40, 1, effect=2.0, seed=7)
        res = max_gamma(m, Y, alpha=0.05, tol=0.01)
        assert res.significant_at_one and not res.at_ceiling
        assert gamma_pvalue_bound(m, Y, res.gamma_star) <= 0.05
        assert gamma_pvalue_bound(m, Y, res.gamma_star + 0.011) > 0.05

    def test_probed_curve_nondecreasing(self):
        m = _matching(40, 1)
        Y = _effectful_y(40, 1, effect=2.0, seed=8)
        res = max_gamma(m, Y)
        curve = sorted(res.p_at_gamma)
        ps = [p for _, p in curve]
        assert all(a <= b + 1e-12 for a, b in zip(ps, ps[1:]))

    def test_ceiling_flag(self):
        # overwhelming effect relative to noise drives gamma* to the ceiling
        m = _matching(200, 1)
        rng = np.random.default_rng(9)
        Y = np.concatenate([np.full(200, 50.0) + rng.normal(scale=0.01, size=200),
                            rng.normal(scale=0.01, size=200)])
        res = max_gamma(m, Y)
        assert res.at_ceiling and res.gamma_star == 50.0

    def test_alpha_validation(self):
        m = _matching(2, 1)
        with pytest.raises(ValueError):
            max_gamma(m, np.arange(4.0), alpha=0.0)
