"""
Process Tests
Poisson, immigration-death and Matérn samplers and their mean measures
"""

import math

import numpy as np
import pytest
from scipy.stats import poisson

from carrier import Carrier, PointConfig, Real1D
from errors import InvalidInputError
from metrics import count_pmf, tv_distance
from processes import (BoxDensity, DiscreteAtoms, ball_box_volume, hard_core_survivors, immigration_death_path,
                       matern_intensity, matern_mean_measure, sample_immigration_death, sample_matern,
                       sample_poisson_process)


# =========================================================================
# MEAN MEASURES
# =========================================================================

class TestMeanMeasures:

    def test_atoms_on_grid(self):
        atoms = DiscreteAtoms.on_grid([0.5, 0.0, 1.5])
        assert atoms.total_mass == pytest.approx(2.0)
        assert [p.x for p in atoms.points.points] == [pytest.approx(1 / 3), pytest.approx(1.0)]

    def test_atoms_need_positive_weights(self):
        with pytest.raises(InvalidInputError):
            DiscreteAtoms([(Real1D(0.5), -1.0)])

    def test_constant_density_mass(self):
        assert BoxDensity(2, 3.5).total_mass == 3.5

    def test_variable_density_quadrature(self):
        mm = BoxDensity(1, lambda x: 2.0 * x[:, 0], grid=200)
        nodes, weights = mm.quadrature()
        assert mm.total_mass == pytest.approx(1.0, abs=1e-9)
        assert math.fsum(weights) == pytest.approx(mm.total_mass)
        assert nodes.size == 200

    def test_variable_density_sampling_follows_density(self, rng):
        mm = BoxDensity(1, lambda x: 2.0 * x[:, 0])
        xs = mm.sample_points(20000, rng).coords[:, 0]
        assert xs.mean() == pytest.approx(2 / 3, abs=0.01)

    def test_poisson_count_mean(self, rng):
        mm = BoxDensity(1, 4.0)
        counts = [sample_poisson_process(mm, rng).size for _ in range(4000)]
        assert np.mean(counts) == pytest.approx(4.0, abs=5 * 2.0 / math.sqrt(4000))


# =========================================================================
# IMMIGRATION-DEATH
# =========================================================================

class TestImmigrationDeath:

    def test_time_zero_returns_start(self, rng):
        xi0 = PointConfig(Carrier.real(1), [0.2, 0.7])
        assert sample_immigration_death(xi0, BoxDensity(1, 2.0), 0.0, rng) == xi0

    def test_negative_time(self, rng):
        with pytest.raises(InvalidInputError):
            sample_immigration_death(PointConfig.empty(Carrier.real(1)), BoxDensity(1, 2.0), -1.0, rng)

    def test_carrier_mismatch(self, rng):
        with pytest.raises(InvalidInputError):
            sample_immigration_death(PointConfig.empty(Carrier.real(2)), BoxDensity(1, 2.0), 1.0, rng)

    def test_empty_start_count_law(self, rng):
        lam, t = 2.0, 5.0
        counts = [sample_immigration_death(PointConfig.empty(Carrier.real(1)), BoxDensity(1, lam), t, rng).size
                  for _ in range(5000)]
        assert tv_distance(count_pmf(counts), poisson(lam * -math.expm1(-t))) < 0.04

    def test_path_and_lifetime_constructions_agree(self, rng):
        mm = BoxDensity(1, 3.0)
        xi0 = PointConfig(Carrier.real(1), [0.1, 0.4, 0.9])
        path = [immigration_death_path(xi0, mm, 1.0, rng)[1].size for _ in range(3000)]
        direct = [sample_immigration_death(xi0, mm, 1.0, rng).size for _ in range(3000)]
        expected = 3 * math.exp(-1.0) + 3.0 * -math.expm1(-1.0)
        for counts in (path, direct):
            se = np.std(counts) / math.sqrt(len(counts))
            assert abs(np.mean(counts) - expected) <= 5 * se

    def test_path_events_are_ordered(self, rng):
        events, final = immigration_death_path(PointConfig.empty(Carrier.real(1)), BoxDensity(1, 5.0), 2.0, rng)
        times = [e[0] for e in events]
        assert times == sorted(times)
        births = sum(e[1] == "immigration" for e in events)
        assert final.size == births - (len(events) - births)


# =========================================================================
# MATERN HARD-CORE
# =========================================================================

class TestMatern:

    def test_survivors_respect_hard_core(self, rng):
        z, xi = sample_matern(200.0, 0.03, 2, "torus", rng)
        diff = np.abs(xi.coords[:, None, :] - xi.coords[None, :, :])
        diff = np.minimum(diff, 1.0 - diff)
        dist = np.sqrt((diff ** 2).sum(axis=2))
        np.fill_diagonal(dist, np.inf)
        assert xi.size <= z.size
        assert xi.size == 0 or dist.min() >= 0.03

    def test_zero_radius_keeps_everything(self, rng):
        z, xi = sample_matern(50.0, 0.0, 2, "box", rng)
        assert z == xi

    def test_pair_closer_than_r_both_removed(self):
        coords = np.array([[0.1, 0.1], [0.12, 0.1], [0.8, 0.8]])
        assert hard_core_survivors(coords, 0.05).tolist() == [False, False, True]

    @pytest.mark.parametrize("geometry", ["box", "torus"])
    def test_pair_exactly_r_apart_both_survive(self, geometry):
        coords = np.array([[0.25, 0.5], [0.5, 0.5]])
        assert hard_core_survivors(coords, 0.25, geometry).tolist() == [True, True]

    def test_torus_pair_across_the_seam(self):
        coords = np.array([[0.01, 0.5], [0.99, 0.5]])
        assert not hard_core_survivors(coords, 0.05, "torus").any()
        assert hard_core_survivors(coords, 0.05, "box").all()

    def test_torus_intensity(self):
        assert matern_intensity(100.0, 0.005, 2) == pytest.approx(100.0 * math.exp(-100.0 * math.pi * 0.005 ** 2))

    def test_torus_intensity_matches_simulation(self, rng):
        mu, r = 100.0, 0.03
        counts = [sample_matern(mu, r, 2, "torus", rng)[1].size for _ in range(2000)]
        se = np.std(counts) / math.sqrt(len(counts))
        assert abs(np.mean(counts) - matern_intensity(mu, r, 2)) <= 5 * se

    def test_box_mean_measure_below_torus(self):
        box = matern_mean_measure(100.0, 0.05, 2, "box")
        torus = matern_mean_measure(100.0, 0.05, 2, "torus")
        assert torus.total_mass < box.total_mass < 100.0

    def test_ball_volume_interior_and_corner(self):
        vol = ball_box_volume(np.array([[0.5, 0.5], [0.0, 0.0]]), 0.1)
        assert vol[0] == pytest.approx(math.pi * 0.01)
        assert vol[1] == pytest.approx(math.pi * 0.01 / 4, rel=1e-6)

    def test_ball_volume_one_dimension(self):
        assert ball_box_volume(np.array([[0.05]]), 0.1)[0] == pytest.approx(0.15)

    def test_torus_radius_limit(self):
        with pytest.raises(InvalidInputError):
            matern_mean_measure(10.0, 0.6, 2, "torus")

    @pytest.mark.parametrize("kwargs", [{"mu": -1.0, "r": 0.1}, {"mu": 10.0, "r": -0.1}])
    def test_invalid_parameters(self, rng, kwargs):
        with pytest.raises(InvalidInputError):
            sample_matern(d=2, geometry="box", rng=rng, **kwargs)

    @pytest.mark.slow
    def test_immigration_death_acceptance(self):
        rng = np.random.default_rng(5)
        for lam in (2.0, 10.0):
            counts = [sample_immigration_death(PointConfig.empty(Carrier.real(1)), BoxDensity(1, lam), 5.0, rng).size
                      for _ in range(100_000)]
            assert tv_distance(count_pmf(counts), poisson(lam * -math.expm1(-5.0))) < 0.01
