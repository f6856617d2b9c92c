import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gridprice as gp
from gridprice.demand import (CrossElasticitySpec, DemandModelError,
                              DemandSegment, check_concavity,
                              cross_elastic_terms, _segments)

PWL = gp.default_pwl()
LINEAR = gp.LinearDemand(2000.0, 20.0)
VOLL = gp.Voll(2000.0, 100.0)


class TestInverseDemand:
    def test_linear_evaluation(self):
        assert gp.inverse_demand(LINEAR, 95.0) == pytest.approx(100.0)

    def test_linear_intercept(self):
        assert gp.inverse_demand(LINEAR, 0.0) == pytest.approx(2000.0)

    def test_pwl_at_demand_105(self):
        # aggregate curve: 95 + 5 from the two steep tranches, the gentle
        # tranche contributes 5 MW at 100 EUR/MWh
        assert gp.inverse_demand(PWL, 105.0) == pytest.approx(100.0, abs=1e-6)

    def test_pwl_kink_continuity(self):
        assert gp.inverse_demand(PWL, 100.0) == pytest.approx(200.0, abs=1e-6)
        assert gp.inverse_demand(PWL, 95.0) == pytest.approx(400.0, abs=1e-6)

    def test_voll_step(self):
        assert gp.inverse_demand(VOLL, 50.0) == 2000.0
        assert gp.inverse_demand(VOLL, 100.0) == 0.0

    def test_perfectly_inelastic_undefined(self):
        with pytest.raises(DemandModelError):
            gp.inverse_demand(gp.PerfectlyInelastic(100.0), 50.0)

    def test_domain_errors(self):
        with pytest.raises(DemandModelError):
            gp.inverse_demand(VOLL, 101.0)
        with pytest.raises(DemandModelError):
            gp.inverse_demand(PWL, 111.0)

    def test_pwl_monotone_non_increasing(self):
        grid = np.linspace(0.0, 110.0, 441)
        values = [gp.inverse_demand(PWL, d) for d in grid]
        assert all(a >= b - 1e-9 for a, b in zip(values, values[1:]))


class TestUtility:
    def test_voll_value(self):
        assert gp.utility(VOLL, 100.0) == pytest.approx(200000.0)

    def test_linear_zero(self):
        assert gp.utility(LINEAR, 0.0) == 0.0

    def test_linear_closed_form(self):
        assert gp.utility(LINEAR, 100.0) == pytest.approx(2000 * 100 - 10 * 100 ** 2)

    @given(st.floats(min_value=0.01, max_value=109.9))
    @settings(max_examples=60, deadline=None)
    def test_pwl_derivative_matches_inverse_demand(self, d):
        # finite differences away from the kinks at 95, 100
        if min(abs(d - 95.0), abs(d - 100.0)) < 0.05:
            return
        eps = 1e-4
        deriv = (gp.utility(PWL, d + eps) - gp.utility(PWL, d - eps)) / (2 * eps)
        p = gp.inverse_demand(PWL, d)
        assert abs(deriv - p) <= 1e-6 * max(1.0, abs(p)) + 1e-4

    @given(st.floats(min_value=0.0, max_value=99.0), st.floats(min_value=0.0, max_value=10.0))
    @settings(max_examples=60, deadline=None)
    def test_pwl_concave(self, d, step):
        u = gp.utility
        if d + 2 * step > 110.0 or step == 0.0:
            return
        mid = u(PWL, d + step)
        assert 2 * mid >= u(PWL, d) + u(PWL, d + 2 * step) - 1e-6


class TestPointElasticity:
    def test_linear_at_100(self):
        got = gp.point_elasticity(LINEAR, 100.0)
        assert got == pytest.approx(-100.0 / (20.0 * 95.0), abs=1e-4)
        assert got == pytest.approx(-0.0526, abs=1e-4)

    def test_default_pwl_near_minus_5_percent(self):
        got = gp.point_elasticity(PWL, 100.0)
        assert -0.055 <= got <= -0.045

    def test_halved_coefficients_double_elasticity(self):
        got = gp.point_elasticity(gp.default_pwl(scale=0.5), 100.0)
        assert got == pytest.approx(-0.10, abs=0.01)

    def test_doubled_coefficients_halve_elasticity(self):
        got = gp.point_elasticity(gp.default_pwl(scale=2.0), 100.0)
        assert got == pytest.approx(-0.025, abs=0.005)

    def test_voll_rejected(self):
        with pytest.raises(DemandModelError):
            gp.point_elasticity(VOLL, 100.0)

    def test_inelastic_stretch_rejected(self):
        # between tranche price ranges nothing responds: above the top intercept
        with pytest.raises(DemandModelError):
            gp.point_elasticity(PWL, 9000.0)


class TestLoadSheddingForm:
    def test_voll_form(self):
        form = gp.to_load_shedding_form(VOLL)
        assert form.fixed_demand == 100.0
        (shedder,) = form.shedders
        assert (shedder.capacity, shedder.linear_cost, shedder.quadratic_cost) == \
            (100.0, 2000.0, 0.0)
        assert form.constant_per_hour == pytest.approx(2000.0 * 100.0)

    def test_linear_form(self):
        form = gp.to_load_shedding_form(LINEAR)
        assert form.fixed_demand == pytest.approx(100.0)
        (shedder,) = form.shedders
        assert shedder.linear_cost == pytest.approx(0.0)
        assert shedder.quadratic_cost == pytest.approx(10.0)
        assert form.constant_per_hour == pytest.approx(2000.0 ** 2 / (2 * 20.0))

    def test_pwl_segment_form(self):
        seg = DemandSegment(8000.0, 80.0, 95.0)
        form = gp.to_load_shedding_form(seg)
        (shedder,) = form.shedders
        assert shedder.capacity == 95.0
        assert shedder.linear_cost == pytest.approx(400.0)   # 8000 - 80*95
        assert shedder.quadratic_cost == pytest.approx(40.0)  # 80/2

    def test_pwl_constant(self):
        form = gp.to_load_shedding_form(PWL)
        expected = sum(a * d - b * d * d / 2 for a, b, d in
                       ((8000, 80, 95), (400, 40, 5), (200, 20, 10)))
        assert form.constant_per_hour == pytest.approx(expected)
        assert form.fixed_demand == pytest.approx(110.0)

    def test_inelastic_has_no_substitution(self):
        with pytest.raises(DemandModelError):
            gp.to_load_shedding_form(gp.PerfectlyInelastic(100.0))


class TestCrossElasticity:
    def test_gamma_from_fraction(self):
        spec = CrossElasticitySpec(gamma_fraction=1 / 16, window_hours=4)
        terms = cross_elastic_terms(spec, _segments(PWL), np.arange(24))
        assert terms.gammas[0] == pytest.approx(80.0 / 16)  # = 5

    def test_zero_window_has_no_pairs(self):
        spec = CrossElasticitySpec(gamma_fraction=1 / 16, window_hours=0)
        terms = cross_elastic_terms(spec, _segments(PWL), np.arange(24))
        assert terms.pairs == ()

    def test_three_snapshot_window_enumeration(self):
        spec = CrossElasticitySpec(gamma_fraction=1 / 16, window_hours=4)
        terms = cross_elastic_terms(spec, _segments(PWL), np.arange(3))
        assert terms.pairs == ((0, 1), (0, 2), (1, 2))

    def test_linear_cost_counts_neighbours(self):
        spec = CrossElasticitySpec(gamma_fraction=1 / 16, window_hours=1)
        segs = _segments(gp.LinearDemand(100.0, 16.0))
        terms = cross_elastic_terms(spec, segs, np.arange(3))
        gamma = 1.0  # 16/16
        width = 100.0 / 16.0
        assert np.allclose(terms.linear_cost[0], gamma * width * np.array([1, 2, 1]))

    def test_concavity_guard_default(self):
        spec = CrossElasticitySpec(gamma_fraction=1 / 16, window_hours=4)
        assert check_concavity(_segments(PWL), spec, 24) >= -1e-8

    def test_concavity_guard_rejects_large_gamma(self):
        spec = CrossElasticitySpec(gamma_fraction=0.5, window_hours=4)
        with pytest.raises(ValueError):
            cross_elastic_terms(spec, _segments(PWL), np.arange(24))

    def test_dropped_constant(self):
        spec = CrossElasticitySpec(gamma_fraction=1 / 16, window_hours=4)
        segs = _segments(PWL)
        terms = cross_elastic_terms(spec, segs, np.arange(3))
        # 3 pairs; per segment gamma_c * D_c^2 per pair
        expected = sum((s.slope / 16) * s.width ** 2 * 3 for s in segs)
        assert terms.total_dropped_constant == pytest.approx(expected)


class TestSegmentValidation:
    def test_positive_parameters_required(self):
        with pytest.raises(ValueError):
            DemandSegment(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            DemandSegment(100.0, -1.0, 1.0)

    def test_willingness_to_pay_stays_nonnegative(self):
        with pytest.raises(ValueError):
            DemandSegment(100.0, 20.0, 10.0)   # 100 - 200 < 0

    def test_pwl_ordering_enforced(self):
        with pytest.raises(ValueError):
            gp.PiecewiseLinearDemand((DemandSegment(200.0, 20.0, 10.0),
                                      DemandSegment(8000.0, 80.0, 95.0)))
