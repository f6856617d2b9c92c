import math

import numpy as np
import pytest

import gridprice as gp
from gridprice.metrics import (analytic_constant, baseload_stats, cost_recovery,
                               curtailment, duration_curve, market_value,
                               price_share, revenue_by_price_band,
                               standard_metrics, utility_of_series)


class TestDurationCurve:
    def test_simple_sort(self):
        dc = duration_curve([0.0, 50.0, 100.0], [1.0, 1.0, 1.0])
        assert list(dc.values) == [100.0, 50.0, 0.0]
        assert list(dc.cumulative_hours) == [1.0, 2.0, 3.0]

    def test_single_weighted_step(self):
        dc = duration_curve([10.0], [5.0])
        assert dc.total_hours == 5.0
        assert dc.cumulative_hours[-1] == 5.0

    def test_ties_preserve_input_order_and_area(self):
        values = np.array([5.0, 7.0, 5.0, 1.0])
        weights = np.array([2.0, 1.0, 3.0, 1.0])
        dc = duration_curve(values, weights)
        assert list(dc.values) == [7.0, 5.0, 5.0, 1.0]
        assert list(dc.cumulative_hours) == [1.0, 3.0, 6.0, 7.0]
        # area under the curve equals weighted mean times total hours
        area = float(np.sum(dc.values * np.diff(np.concatenate([[0.0], dc.cumulative_hours]))))
        mean = float(np.sum(values * weights) / weights.sum())
        assert area == pytest.approx(mean * dc.total_hours, rel=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            duration_curve([], [])

    def test_voll_scarcity_run_plateaus_at_voll(self, make_config):
        # any shedding hour pins the top of the price duration curve
        cfg = make_config(gp.Voll(), n_weeks=4)
        lt = gp.run_lt(cfg)
        tight = gp.apply_capacity_perturbation(lt.capacities, -0.05)
        st = gp.run_st_perfect(cfg, capacities=tight)
        assert (st.shed_total() > 1e-3).any()
        dc = duration_curve(st.prices, st.weights)
        assert dc.values[0] == pytest.approx(2000.0, abs=1e-3)


class TestPriceShare:
    def test_all_zero(self):
        assert price_share(np.zeros(5), np.ones(5)) == 1.0

    def test_above_threshold_count(self):
        got = price_share(np.array([0.0, 100.0, 500.0, 2000.0]), np.ones(4),
                          threshold=400.0)
        assert got == 0.5

    def test_zero_uses_tolerance(self):
        got = price_share(np.array([5e-4, 2e-3]), np.ones(2))
        assert got == 0.5


class TestBaseloadStats:
    def test_constant_series(self):
        years = np.array([2001] * 4 + [2002] * 4)
        months = np.array([1, 1, 2, 2] * 2)
        stats = baseload_stats(np.full(8, 100.0), np.ones(8), years, months)
        assert all(v == 100.0 for v in stats.annual_means.values())
        assert stats.std_annual == 0.0

    def test_two_year_population_convention(self):
        years = np.array([2001, 2002])
        months = np.ones(2, dtype=int)
        stats = baseload_stats(np.array([50.0, 150.0]), np.ones(2), years, months)
        assert stats.mean == 100.0
        assert stats.std_annual == 50.0   # population, not sample
        assert stats.annual_means == {2001: 50.0, 2002: 150.0}

    def test_monthly_grouping(self):
        years = np.array([2001, 2001, 2001])
        months = np.array([1, 1, 2])
        stats = baseload_stats(np.array([10.0, 30.0, 7.0]),
                               np.array([1.0, 3.0, 1.0]), years, months)
        assert stats.monthly_means[(2001, 1)] == pytest.approx(25.0)
        assert stats.monthly_means[(2001, 2)] == 7.0

    def test_elasticity_damps_hourly_price_dispersion(self, make_config):
        # prices cluster tighter under the elastic curve; the annual-mean
        # version of this claim needs multi-decade samples and is out of desk
        # scale, the hourly standard deviation carries the direction here
        runs = {}
        for label, demand in (("voll", gp.Voll()), ("pwl", gp.default_pwl())):
            cfg = make_config(demand, n_weeks=4)
            runs[label] = gp.run_lt(cfg)
        assert runs["pwl"].metrics["STD electricity price (€/MWh)"] < \
            runs["voll"].metrics["STD electricity price (€/MWh)"]


class TestMarketValue:
    def test_constant_price(self):
        assert market_value(np.full(4, 80.0), np.array([1, 5, 0, 2.0]),
                            np.ones(4)) == pytest.approx(80.0)

    def test_dispatch_only_at_zero_price(self):
        prices = np.array([0.0, 200.0])
        dispatch = np.array([50.0, 0.0])
        assert market_value(prices, dispatch, np.ones(2)) == 0.0

    def test_two_hour_toy(self):
        assert market_value(np.array([0.0, 200.0]), np.array([50.0, 50.0]),
                            np.ones(2)) == pytest.approx(100.0)

    def test_zero_dispatch_is_nan(self):
        assert math.isnan(market_value(np.ones(3), np.zeros(3), np.ones(3)))


class TestCurtailment:
    def test_full_use_is_zero(self):
        avail = np.array([0.5, 1.0])
        assert curtailment(avail, 100.0, avail * 100.0, np.ones(2)) == pytest.approx(0.0)

    def test_half_used(self):
        avail = np.array([0.5, 1.0])
        assert curtailment(avail, 100.0, avail * 50.0, np.ones(2)) == pytest.approx(0.5)

    def test_zero_available_rejected(self):
        with pytest.raises(ValueError):
            curtailment(np.zeros(2), 100.0, np.zeros(2), np.ones(2))

    def test_lt_run_matches_energy_balance_audit(self, make_config):
        cfg = make_config(gp.default_pwl(), n_weeks=1)
        run = gp.run_lt(cfg)
        w = run.weights
        available = dispatched = 0.0
        for g in cfg.generators:
            avail = g.availability_series(len(cfg.grid))
            available += float(np.sum(w * avail)) * run.capacities[g.name]
            dispatched += float(np.sum(w * run.generation[g.name]))
        expected = 1.0 - dispatched / available
        assert 0.0 < expected < 1.0
        assert run.metrics["curtailment (%)"] == pytest.approx(100 * expected)


class TestRevenueBands:
    def test_single_band_totals(self):
        prices = np.array([10.0, 20.0])
        pos = np.array([1.0, 2.0])
        bands = revenue_by_price_band(prices, pos, np.ones(2), [])
        assert len(bands) == 1
        assert bands[0][2] == pytest.approx(50.0)

    def test_all_in_middle_band(self):
        prices = np.full(3, 150.0)
        bands = revenue_by_price_band(prices, np.ones(3), np.ones(3),
                                      [0.0, 100.0, 200.0])
        totals = [b[2] for b in bands]
        assert totals[2] == pytest.approx(450.0)
        assert sum(totals) == pytest.approx(450.0)

    def test_partition_sums_to_total(self):
        rng = np.random.default_rng(5)
        prices = rng.uniform(-50, 2100, 200)
        pos = rng.normal(size=200)
        w = rng.uniform(0.5, 2.0, 200)
        bands = revenue_by_price_band(prices, pos, w, [0.0, 100.0, 1000.0, 2000.0])
        assert sum(b[2] for b in bands) == pytest.approx(
            float(np.sum(w * prices * pos)), rel=1e-9)

    def test_edges_must_ascend(self):
        with pytest.raises(ValueError):
            revenue_by_price_band(np.ones(2), np.ones(2), np.ones(2), [10.0, 10.0])


class TestCostRecovery:
    def test_zero_price_asset_ratio_zero(self):
        # flat availability generator dispatched only at zero prices
        import pandas as pd

        grid = gp.TimeGrid(pd.date_range("2001-01-01", periods=2, freq="h"),
                           np.ones(2))
        cfg = gp.SystemConfig(
            grid=grid, generators=(gp.GeneratorTech("wind", 1000.0, 0.0, 20),),
            demand=gp.PerfectlyInelastic(10.0))
        run = gp.run_st_perfect(cfg, capacities=gp.CapacitySet({"wind": 50.0}))
        assert np.allclose(run.prices, 0.0, atol=1e-6)
        (row,) = cost_recovery(run)
        assert row.ratio == pytest.approx(0.0, abs=1e-6)

    def test_must_run_market_value_equals_mean_price(self, make_config):
        cfg = make_config(gp.default_pwl(), n_weeks=1)
        run = gp.run_lt(cfg)
        w = run.weights
        flat = np.full(len(cfg.grid), 5.0)
        mv = market_value(run.prices, flat, w)
        assert mv == pytest.approx(float(np.sum(w * run.prices) / w.sum()), rel=1e-12)

    def test_zero_profit_telescopes_to_welfare(self, make_config):
        # sum of (revenue - variable - fixed) over assets vanishes at the LT
        # optimum, so producer surplus drops out and welfare telescopes to
        # consumer surplus = utility - payments at market prices
        cfg = make_config(gp.default_pwl(), n_weeks=2)
        run = gp.run_lt(cfg)
        rows = cost_recovery(run)
        net = sum(r.revenue - r.variable_cost - r.fixed_cost for r in rows)
        gross = sum(abs(r.fixed_cost) for r in rows)
        assert abs(net) <= 0.01 * gross
        w = run.weights
        consumer_surplus = run.welfare.utility - float(
            np.sum(w * run.prices * run.demand_served))
        assert abs(run.welfare.welfare - consumer_surplus) <= 0.01 * abs(
            run.welfare.welfare)

    def test_overcapacity_undercuts_power_component_recovery(self, make_config):
        # +5% capacities: every power-like component falls short of recovery;
        # the cavern's energy component is excluded, its fixed cost is so
        # small that a few desk-scale medium-scarcity hours swamp it
        cfg = make_config(gp.default_pwl(), n_weeks=4)
        lt = gp.run_lt(cfg)
        up = gp.run_st_perfect(
            cfg, capacities=gp.apply_capacity_perturbation(lt.capacities, 0.05))
        rows = {r.asset: r.ratio for r in cost_recovery(up)}
        for asset in ("wind", "battery", "electrolyser", "fuel cell"):
            assert rows[asset] < 1.0, (asset, rows[asset])

    def test_top_price_band_dominates_under_voll(self, make_config):
        # scarcity revenue concentrates in the (1000, 2000] band under a step
        # demand curve but spreads out under the elastic curve
        edges = [0.0, 100.0, 400.0, 1000.0, 2000.0]
        shares = {}
        for label, demand in (("voll", gp.Voll()), ("pwl", gp.default_pwl())):
            cfg = make_config(demand, n_weeks=4)
            lt = gp.run_lt(cfg)
            tight = gp.apply_capacity_perturbation(lt.capacities, -0.05)
            st = gp.run_st_perfect(cfg, capacities=tight)
            bands = revenue_by_price_band(st.prices, st.generation["wind"],
                                          st.weights, edges)
            total = sum(b[2] for b in bands)
            shares[label] = next(b[2] for b in bands if b[0] == 1000.0) / total
        assert shares["voll"] > shares["pwl"]


class TestWelfare:
    def test_utility_none_for_inelastic(self):
        assert utility_of_series(gp.PerfectlyInelastic(10.0), None, np.ones(3)) is None

    def test_voll_utility_closed_form(self):
        served = np.array([[100.0, 90.0]])
        got = utility_of_series(gp.Voll(2000.0, 100.0), served, np.ones(2))
        assert got == pytest.approx(2000.0 * 190.0)

    def test_analytic_constants(self):
        w = np.ones(5)
        assert analytic_constant(gp.Voll(2000.0, 100.0), w) == pytest.approx(5 * 200000.0)
        assert analytic_constant(gp.LinearDemand(2000.0, 20.0), w) == pytest.approx(
            5 * 2000.0 ** 2 / 40.0)
        assert analytic_constant(gp.PerfectlyInelastic(50.0), w) == 0.0

    def test_myopic_welfare_not_above_perfect(self, weather_slice):
        grid, wind, solar = weather_slice(6, 1)
        cfg = gp.SystemConfig(grid=grid,
                              generators=(gp.default_wind(wind),
                                          gp.default_solar(solar)),
                              storages=(gp.default_battery(),
                                        gp.default_hydrogen()),
                              demand=gp.default_pwl())
        lt = gp.run_lt(cfg)
        policy = gp.MyopicPolicy(msv_bar=gp.default_msv_bar(lt))
        myopic = gp.run_st_myopic(cfg, capacities=lt.capacities, policy=policy)
        initial = {s.name: policy.initial_soc_fraction * lt.capacities[s.energy_key]
                   for s in cfg.storages}
        perfect = gp.run_st_perfect(cfg, capacities=lt.capacities,
                                    initial_soc=initial)
        assert myopic.welfare.welfare <= perfect.welfare.welfare + 1e-6 * abs(
            perfect.welfare.welfare)


class TestStandardMetrics:
    def test_recompute_is_bit_identical(self, make_config):
        cfg = make_config(gp.default_pwl(), n_weeks=1)
        run = gp.run_lt(cfg)
        again = standard_metrics(run)
        assert again == run.metrics

    def test_table_keys_present(self, make_config):
        cfg = make_config(gp.Voll(), n_weeks=1)
        run = gp.run_lt(cfg)
        for key in ("system costs (€/period)", "welfare (€/period)",
                    "average load served (MW)", "peak load shedding (MW)",
                    "wind market value (€/MWh)", "solar capacity factor (%)",
                    "curtailment (%)", "hydrogen consumed (MWh/period)",
                    "battery inverter capacity (MW)",
                    "battery storage capacity (MWh)",
                    "electrolyser capacity (MW)", "fuel cell capacity (MW)",
                    "hydrogen storage capacity (MWh)",
                    "mean electricity price (€/MWh)",
                    "STD electricity price (€/MWh)",
                    "mean hydrogen price (€/MWh)", "mean hydrogen MSV (€/MWh)",
                    "mean battery MSV (€/MWh)"):
            assert key in run.metrics, key

    def test_hydrogen_price_aliases_msv(self, make_config):
        cfg = make_config(gp.Voll(), n_weeks=1)
        run = gp.run_lt(cfg)
        assert run.metrics["mean hydrogen price (€/MWh)"] == \
            run.metrics["mean hydrogen MSV (€/MWh)"]
