"""
Occupancy Tests
Exact occupancy probabilities, the joint pmf and the ball-redistribution coupling
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from errors import InvalidInputError, ResourceLimitError
from occupancy import (OccupancyModel, multinomial_table, occupancy_coupler, occupancy_exact_pmf,
                       occupancy_indicator_model, occupancy_pair_probability, occupancy_palm_law, occupancy_pi,
                       sample_occupancy)
from trials import bits_of, pmf_marginals


@pytest.fixture
def small():
    return OccupancyModel(3, 4, 1, [0.2, 0.3, 0.5])


# =========================================================================
# EXACT PROBABILITIES
# =========================================================================

class TestProbabilities:

    def test_two_balls_one_allowed(self):
        assert occupancy_pi(2, 0.5, 1) == pytest.approx(0.75)

    def test_threshold_above_ball_count(self):
        assert occupancy_pi(3, np.array([0.2, 0.8]), 5).tolist() == [1.0, 1.0]

    def test_acceptance_urn_probability(self):
        om = OccupancyModel.uniform(100, 460, 0)
        assert om.pi[0] == pytest.approx(0.009820, rel=1e-3)
        assert om.mu == pytest.approx(0.98203, rel=1e-4)

    def test_pair_probability_single_ball(self):
        assert occupancy_pair_probability(1, 1 / 3, 1 / 3, 0)[0] == pytest.approx(1 / 3)

    def test_pair_probability_no_room_left(self):
        assert occupancy_pair_probability(2, 0.5, 0.5, 0)[0] == 0.0

    @given(st.integers(1, 12), st.floats(0.01, 0.99), st.integers(0, 4))
    @settings(max_examples=50)
    def test_pi_matches_direct_sum(self, s, p, m):
        direct = math.fsum(math.comb(s, j) * p ** j * (1 - p) ** (s - j) for j in range(min(m, s) + 1))
        assert occupancy_pi(s, p, m) == pytest.approx(direct, rel=1e-9, abs=1e-14)

    def test_invalid_urn_probabilities(self):
        with pytest.raises(InvalidInputError):
            OccupancyModel(2, 3, 0, [0.6, 0.6])

    def test_negative_threshold(self):
        with pytest.raises(InvalidInputError):
            OccupancyModel.uniform(2, 3, -1)


class TestExactLaws:

    def test_multinomial_table_sums_to_one(self):
        rows, probs = multinomial_table(4, [0.2, 0.3, 0.5])
        assert rows.shape == (15, 3)
        assert (rows.sum(axis=1) == 4).all()
        assert math.fsum(probs) == pytest.approx(1.0)

    def test_multinomial_table_limit(self):
        with pytest.raises(ResourceLimitError):
            multinomial_table(30, [0.25] * 4, limit=100)

    def test_exact_pmf_marginals(self, small):
        assert pmf_marginals(occupancy_exact_pmf(small), 3) == pytest.approx(small.pi)

    def test_palm_law_is_a_probability_law(self, small):
        probs, base, palm = occupancy_palm_law(small, 1)
        assert math.fsum(probs) == pytest.approx(1.0)
        assert ((palm >> 1) & 1 == 1).all()

    def test_palm_law_marginal_is_conditional_law(self, small):
        probs, base, palm = occupancy_palm_law(small, 0)
        pmf = occupancy_exact_pmf(small)
        codes = np.arange(pmf.size)
        conditional = np.where(codes & 1, pmf, 0.0) / small.pi[0]
        marginal = np.bincount(palm, weights=probs, minlength=pmf.size)
        assert marginal == pytest.approx(conditional, abs=1e-12)

    def test_palm_law_is_negatively_related(self, small):
        _, base, palm = occupancy_palm_law(small, 2)
        others = bits_of(np.array([0b011]), 3)[0]
        b, p = bits_of(base, 3), bits_of(palm, 3)
        assert not np.any(p[:, others] & ~b[:, others])


# =========================================================================
# SAMPLING AND COUPLING
# =========================================================================

class TestSampling:

    def test_ball_count_is_preserved(self, small, rng):
        x, indicators, xi = sample_occupancy(small, rng)
        assert x.sum() == 4
        assert indicators.tolist() == (x <= 1).tolist()
        assert xi.size == indicators.sum()

    def test_coupler_sets_focal_and_only_removes(self, small, rng):
        coupler = occupancy_coupler(small)
        for _ in range(200):
            base, palm = coupler(0, rng)
            assert palm[0]
            assert not np.any(palm[1:] & ~base[1:])

    def test_indicator_model(self, small):
        im = occupancy_indicator_model(small)
        assert im.relation == "negative"
        assert im.exact_pmf is not None
        assert im.palm_law is not None
        assert im.lam == pytest.approx(small.mu)

    def test_large_model_has_no_exact_pmf(self):
        im = occupancy_indicator_model(OccupancyModel.uniform(100, 460, 0))
        assert im.exact_pmf is None
        assert im.palm_law is None
