"""
Carrier Tests
Points, configurations, restriction and ground pseudometrics
"""

import pytest
from hypothesis import given, settings, strategies as st

from carrier import (Carrier, CappedEuclidean, DiscreteIndex, Lifted, LiftedMark, PointConfig, Real1D,
                     RealVec, ZeroPseudo, add_point, box_region, config_from_json, remove_point, restrict,
                     rho0)
from errors import InvalidInputError

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
configs_1d = st.lists(unit, max_size=8).map(lambda xs: PointConfig(Carrier.real(1), xs))


def line(*xs):
    return PointConfig(Carrier.real(1), list(xs))


# =========================================================================
# POINTS AND CARRIERS
# =========================================================================

class TestPoints:

    def test_real_point_outside_unit_interval_rejected(self):
        with pytest.raises(InvalidInputError):
            Real1D(1.5)

    def test_discrete_index_starts_at_one(self):
        with pytest.raises(InvalidInputError):
            DiscreteIndex(0)

    def test_lifted_mark_cannot_nest(self):
        with pytest.raises(InvalidInputError):
            Lifted(Lifted(Real1D(0.5), 1), 2)

    def test_realvec_dimension_limit(self):
        with pytest.raises(InvalidInputError):
            RealVec((0.1, 0.2, 0.3, 0.4))

    def test_carrier_of_lifted_point(self):
        carrier = Carrier.of(Lifted(RealVec((0.1, 0.2)), 3))
        assert carrier.kind == "lifted"
        assert carrier.mark == Carrier.real(2)


class TestPointConfig:

    def test_size_counts_multiplicity(self):
        xi = PointConfig.from_points([Real1D(0.5), Real1D(0.5), Real1D(0.1)])
        assert xi.size == 3

    def test_equality_is_multiset_equality(self):
        assert line(0.1, 0.5, 0.5) == line(0.5, 0.1, 0.5)
        assert line(0.1, 0.5) != line(0.1, 0.5, 0.5)

    def test_mixed_carriers_rejected(self):
        with pytest.raises(InvalidInputError):
            PointConfig.from_points([Real1D(0.5), DiscreteIndex(2)])

    def test_coordinates_are_immutable(self):
        xi = line(0.2, 0.4)
        with pytest.raises(ValueError):
            xi.coords[0, 0] = 0.9

    def test_lifted_configuration_needs_trials(self):
        with pytest.raises(InvalidInputError):
            PointConfig(Carrier.lifted(Carrier.real(1)), [[0.5]])

    def test_marks_drop_trial_labels(self):
        xi = PointConfig(Carrier.lifted(Carrier.real(1)), [[0.5], [0.25]], [1, 4])
        assert xi.marks() == line(0.5, 0.25)


# =========================================================================
# RESTRICT / ADD / REMOVE
# =========================================================================

class TestConfigurationOps:

    def test_restrict_to_interval(self):
        assert restrict(line(0.1, 0.5, 0.9), box_region(0.0, 0.6)) == line(0.1, 0.5)

    def test_restrict_whole_carrier_is_identity(self):
        xi = line(0.1, 0.5, 0.9)
        assert restrict(xi, lambda p: True) == xi

    def test_restrict_empty(self):
        empty = PointConfig.empty(Carrier.real(1))
        assert restrict(empty, box_region(0.0, 0.5)).size == 0

    def test_restrict_leaves_input_unchanged(self):
        xi = line(0.1, 0.5, 0.9)
        restrict(xi, box_region(0.0, 0.2))
        assert xi.size == 3

    def test_box_region_tests_lifted_marks(self):
        region = box_region(0.0, 0.5)
        assert region(Lifted(Real1D(0.25), 7))
        assert not region(Lifted(Real1D(0.75), 1))

    def test_right_open_box(self):
        region = box_region(0.0, 0.5, include_upper=False)
        assert not region(Real1D(0.5))

    def test_add_to_empty(self):
        xi = add_point(PointConfig.empty(Carrier.real(1)), Real1D(0.3))
        assert xi == line(0.3)

    def test_remove_one_copy(self):
        assert remove_point(line(0.4, 0.4), Real1D(0.4)) == line(0.4)

    def test_remove_absent_point_raises(self):
        with pytest.raises(InvalidInputError):
            remove_point(line(0.4), Real1D(0.5))

    def test_remove_lifted_matches_trial(self):
        carrier = Carrier.lifted(Carrier.real(1))
        xi = PointConfig(carrier, [[0.5], [0.5]], [1, 2])
        left = remove_point(xi, Lifted(Real1D(0.5), 2))
        assert left.trials.tolist() == [1]

    @given(configs_1d, st.floats(min_value=0.0, max_value=1.0))
    @settings(max_examples=60)
    def test_restrict_partitions_the_configuration(self, xi, cut):
        inside = restrict(xi, box_region(0.0, cut))
        outside = restrict(xi, lambda p: not box_region(0.0, cut)(p))
        assert inside.concat(outside) == xi

    @given(configs_1d, unit)
    @settings(max_examples=60)
    def test_add_then_remove_is_identity(self, xi, x):
        grown = add_point(xi, Real1D(x))
        assert grown.size == xi.size + 1
        assert remove_point(grown, Real1D(x)) == xi


# =========================================================================
# GROUND PSEUDOMETRICS
# =========================================================================

class TestGroundDistances:

    def test_zero_pseudometric(self):
        assert rho0(ZeroPseudo(), Real1D(0.1), Real1D(0.9)) == 0.0

    def test_capped_euclidean_box(self):
        assert rho0(CappedEuclidean("box"), Real1D(0.2), Real1D(0.9)) == pytest.approx(0.7)

    def test_torus_wraps_around(self):
        assert rho0(CappedEuclidean("torus"), Real1D(0.05), Real1D(0.95)) == pytest.approx(0.1)

    def test_cap_applies_in_higher_dimensions(self):
        assert rho0(CappedEuclidean("box"), RealVec((0.0, 0.0, 0.0)), RealVec((1.0, 1.0, 1.0))) == 1.0

    def test_lifted_mark_ignores_trial(self):
        g = LiftedMark()
        assert g(Lifted(Real1D(0.2), 1), Lifted(Real1D(0.5), 9)) == pytest.approx(0.3)

    def test_carrier_mismatch(self):
        with pytest.raises(InvalidInputError):
            rho0(CappedEuclidean(), Real1D(0.2), DiscreteIndex(1))

    def test_unknown_geometry(self):
        with pytest.raises(InvalidInputError):
            CappedEuclidean("sphere")

    @pytest.mark.parametrize("g", [ZeroPseudo(), CappedEuclidean("box"), CappedEuclidean("torus")])
    @given(x=st.tuples(unit, unit), y=st.tuples(unit, unit), z=st.tuples(unit, unit))
    @settings(max_examples=100)
    def test_metric_axioms(self, g, x, y, z):
        x, y, z = RealVec(x), RealVec(y), RealVec(z)
        assert g(x, z) <= g(x, y) + g(y, z) + 1e-12
        assert g(x, y) == pytest.approx(g(y, x))
        assert g(x, x) == 0.0
        assert 0.0 <= g(x, y) <= 1.0


# =========================================================================
# JSON FORMAT
# =========================================================================

class TestConfigJson:

    def test_numbers_are_interval_points(self):
        assert config_from_json([0.2, 0.8]) == line(0.2, 0.8)

    def test_lifted_entries(self):
        xi = config_from_json([{"mark": 0.5, "trial": 2}, {"mark": [0.25], "trial": 1}])
        assert xi.carrier == Carrier.lifted(Carrier.real(1))
        assert sorted(xi.trials.tolist()) == [1, 2]

    def test_empty_array_with_carrier(self):
        xi = config_from_json([], Carrier.real(2))
        assert xi.size == 0 and xi.carrier == Carrier.real(2)

    def test_rejects_objects(self):
        with pytest.raises(InvalidInputError):
            config_from_json({"points": []})
