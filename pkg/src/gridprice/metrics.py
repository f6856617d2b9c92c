"""Diagnostics: duration curves, price statistics, market values, cost recovery.

Every metric is a pure function of run series, so re-computation from exported
CSVs reproduces stored values bit for bit. Standard deviations use the
population convention throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import demand as dm
from .problems import fixed_cost_block

ZERO_PRICE_TOL = 1e-3


@dataclass(frozen=True)
class DurationCurve:
    """Values sorted descending against cumulative weighted hours."""

    values: np.ndarray
    cumulative_hours: np.ndarray
    total_hours: float


def duration_curve(series, weights) -> DurationCurve:
    series = np.asarray(series, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if series.size == 0:
        raise ValueError("cannot build a duration curve from an empty series")
    if series.shape != weights.shape:
        raise ValueError("series and weights must have equal length")
    order = np.argsort(-series, kind="stable")   # ties keep input order
    values = series[order]
    cum = np.cumsum(weights[order])
    return DurationCurve(values, cum, float(cum[-1]))


def price_share(series, weights, threshold: float | None = None,
                zero_tol: float = ZERO_PRICE_TOL) -> float:
    """Weighted fraction of hours with zero price (default) or above a threshold."""
    series = np.asarray(series, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if threshold is None:
        mask = np.abs(series) <= zero_tol
    else:
        mask = series > threshold
    total = weights.sum()
    return float(weights[mask].sum() / total) if total else 0.0


@dataclass(frozen=True)
class BaseloadStats:
    annual_means: dict
    monthly_means: dict
    mean: float
    std_annual: float    # over annual means, population convention
    std_hourly: float    # over hourly prices, weighted population convention


def baseload_stats(prices, weights, years, months) -> BaseloadStats:
    prices = np.asarray(prices, dtype=float)
    weights = np.asarray(weights, dtype=float)
    years = np.asarray(years)
    months = np.asarray(months)
    if not (len(prices) == len(weights) == len(years) == len(months)):
        raise ValueError("prices, weights and calendar must have equal length")

    def group_mean(keys):
        out = {}
        for key in sorted(set(map(tuple, keys)) if keys.ndim > 1 else set(keys.tolist())):
            mask = (keys == key).all(axis=1) if keys.ndim > 1 else keys == key
            out[key] = float(np.sum(prices[mask] * weights[mask]) / weights[mask].sum())
        return out

    annual = group_mean(years)
    monthly = group_mean(np.column_stack([years, months]))
    mean = float(np.sum(prices * weights) / weights.sum())
    ann_values = np.array(list(annual.values()))
    std_annual = float(np.sqrt(np.mean((ann_values - ann_values.mean()) ** 2)))
    std_hourly = float(np.sqrt(np.sum(weights * (prices - mean) ** 2) / weights.sum()))
    return BaseloadStats(annual, monthly, mean, std_annual, std_hourly)


def market_value(prices, dispatch, weights) -> float:
    """Dispatch-weighted average price; NaN marks zero total dispatch."""
    prices = np.asarray(prices, dtype=float)
    dispatch = np.asarray(dispatch, dtype=float)
    weights = np.asarray(weights, dtype=float)
    energy = float(np.sum(weights * dispatch))
    if energy <= 0.0:
        return math.nan
    return float(np.sum(weights * prices * dispatch) / energy)


def curtailment(availability, capacity, dispatch, weights) -> float:
    """Fraction of available energy not dispatched."""
    availability = np.asarray(availability, dtype=float)
    dispatch = np.asarray(dispatch, dtype=float)
    weights = np.asarray(weights, dtype=float)
    available = float(np.sum(weights * availability * capacity))
    if available <= 0.0:
        raise ValueError("no available energy; curtailment undefined")
    return 1.0 - float(np.sum(weights * dispatch)) / available


def revenue_by_price_band(prices, position, weights, band_edges) -> list:
    """Partition revenue sum(w * price * position) into price bands.

    Bands are (-inf, e0], (e0, e1], ..., (en, inf) for ascending edges; the
    band totals sum to the total revenue exactly.
    """
    prices = np.asarray(prices, dtype=float)
    position = np.asarray(position, dtype=float)
    weights = np.asarray(weights, dtype=float)
    edges = list(band_edges)
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("band edges must be strictly ascending")
    bounds = [-math.inf] + edges + [math.inf]
    revenue = weights * prices * position
    out = []
    for lo, hi in zip(bounds, bounds[1:]):
        mask = (prices > lo) & (prices <= hi)
        out.append((lo, hi, float(revenue[mask].sum())))
    return out


@dataclass(frozen=True)
class CostRecoveryRow:
    asset: str
    revenue: float
    variable_cost: float
    fixed_cost: float

    @property
    def ratio(self) -> float:
        return (self.revenue - self.variable_cost) / self.fixed_cost


def cost_recovery(run, config=None) -> list:
    """Component-level market revenue against annualized fixed cost.

    Hydrogen-chain components settle internally at the medium's marginal
    storage value: the charger buys electricity at the market price and sells
    medium at the storage value, the discharger does the reverse, and the
    store arbitrages the medium price. Shared-coupling storages are one
    component. Unbuilt components (capacity <= 1e-3) and components with zero
    fixed cost are skipped.
    """
    config = config or run.config
    w = config.grid.weight_hours
    rate = config.discount_rate
    scale = run.fixed_cost_scale
    caps = run.capacities
    prices = run.prices
    rows = []
    for g in config.generators:
        cap = caps[g.name]
        fixed = g.annualized_cost(rate) * cap * scale
        if cap <= 1e-3 or fixed <= 0.0:
            continue
        gen = run.generation[g.name]
        rows.append(CostRecoveryRow(
            g.name,
            revenue=float(np.sum(w * prices * gen)),
            variable_cost=float(np.sum(w * g.marginal_cost * gen)),
            fixed_cost=fixed))
    for s in config.storages:
        f = run.discharge[s.name]
        h = run.charge[s.name]
        lam_s = run.msv[s.name]
        if s.shared:
            p_cap, e_cap = caps[s.power_key], caps[s.energy_key]
            fixed = (s.cost_charge.annualized(rate) * p_cap
                     + s.cost_energy.annualized(rate) * e_cap) * scale
            if max(p_cap, e_cap) <= 1e-3 or fixed <= 0.0:
                continue
            rows.append(CostRecoveryRow(
                s.name, revenue=float(np.sum(w * prices * (f - h))),
                variable_cost=0.0, fixed_cost=fixed))
            continue
        components = (
            (s.component_label(s.charge_key), caps[s.charge_key],
             s.cost_charge.annualized(rate),
             float(np.sum(w * (lam_s * s.charge_efficiency * h - prices * h)))),
            (s.component_label(s.discharge_key), caps[s.discharge_key],
             s.cost_discharge.annualized(rate),
             float(np.sum(w * (prices * f - lam_s * f / s.discharge_efficiency)))),
            (s.component_label(s.energy_key), caps[s.energy_key],
             s.cost_energy.annualized(rate),
             float(np.sum(w * lam_s * (f / s.discharge_efficiency
                                       - s.charge_efficiency * h)))),
        )
        for label, cap, annual, revenue in components:
            fixed = annual * cap * scale
            if cap <= 1e-3 or fixed <= 0.0:
                continue
            rows.append(CostRecoveryRow(label, revenue, 0.0, fixed))
    return rows


@dataclass(frozen=True)
class WelfareBreakdown:
    utility: float | None
    variable_cost: float
    fixed_cost: float
    welfare: float | None
    objective_constant: float


def utility_of_series(demand, served_by_segment, weights) -> float | None:
    """Total utility of served demand; None for perfectly inelastic demand."""
    if served_by_segment is None or isinstance(demand, dm.PerfectlyInelastic):
        return None
    w = np.asarray(weights, dtype=float)
    if isinstance(demand, dm.Voll):
        return float(np.sum(w * demand.value_of_lost_load * served_by_segment[0]))
    segments = dm._segments(demand)
    total = 0.0
    for c, seg in enumerate(segments):
        d = served_by_segment[c]
        total += float(np.sum(w * (seg.intercept * d - 0.5 * seg.slope * d * d)))
    spec = getattr(demand, "cross_elasticity", None)
    if spec is not None:
        n = len(w)
        pairs = [(t, k) for t in range(n)
                 for k in range(t + 1, min(n, t + spec.window_hours + 1))]
        for c, seg in enumerate(segments):
            gamma = spec.gamma_fraction * seg.slope
            d = served_by_segment[c]
            total += gamma * float(sum(d[t] * d[k] for t, k in pairs))
    return total


def analytic_constant(demand, weights) -> float:
    """Objective constant dropped by the load-shedding substitution."""
    if isinstance(demand, dm.PerfectlyInelastic):
        return 0.0
    w = np.asarray(weights, dtype=float)
    form = dm.to_load_shedding_form(demand)
    const = form.constant_per_hour * float(w.sum())
    spec = getattr(demand, "cross_elasticity", None)
    if spec is not None:
        terms = dm.cross_elastic_terms(spec, dm._segments(demand), w)
        const += terms.total_dropped_constant
    return const


def welfare_decomposition(run) -> WelfareBreakdown:
    """{utility, variable_cost, fixed_cost, welfare} for one run.

    Welfare is utility minus total (variable plus annualized fixed) cost;
    both are reported even for short-term runs, whose solver objective simply
    omits the fixed block. Perfectly inelastic runs have no utility, so their
    welfare is undefined and reported as None.
    """
    config = run.config
    w = config.grid.weight_hours
    var_cost = sum(
        float(np.sum(w * g.marginal_cost * run.generation[g.name]))
        for g in config.generators)
    fixed = fixed_cost_block(config, run.capacities, run.fixed_cost_scale)
    util = utility_of_series(run.demand, run.served_by_segment, w)
    welfare = None if util is None else util - var_cost - fixed
    return WelfareBreakdown(util, var_cost, fixed, welfare, run.objective_constant)


def standard_metrics(run) -> dict:
    """Per-run metrics table (desk-scale absolute units)."""
    config = run.config
    w = config.grid.weight_hours
    total_h = float(w.sum())
    prices = run.prices
    welfare = run.welfare if run.welfare is not None else welfare_decomposition(run)
    served_energy = float(np.sum(w * run.demand_served))

    m: dict = {}
    system_costs = welfare.variable_cost + welfare.fixed_cost
    m["system costs (€/period)"] = system_costs
    m["utility (€/period)"] = welfare.utility
    m["welfare (€/period)"] = welfare.welfare
    m["average system costs (€/MWh)"] = system_costs / served_energy if served_energy else math.nan
    m["average load served (MW)"] = served_energy / total_h
    m["peak load shedding (MW)"] = float(run.shed_total().max(initial=0.0))

    energy_by_gen = {g.name: float(np.sum(w * run.generation[g.name]))
                     for g in config.generators}
    primary = sum(energy_by_gen.values())
    m["primary energy (MWh/period)"] = primary
    for g in config.generators:
        m[f"{g.name} share (%)"] = 100.0 * energy_by_gen[g.name] / primary if primary else math.nan
        m[f"{g.name} market value (€/MWh)"] = market_value(
            prices, run.generation[g.name], w)
        avail = g.availability_series(len(config.grid))
        m[f"{g.name} capacity factor (%)"] = 100.0 * float(np.sum(w * avail) / total_h)
        m[f"{g.name} capacity (MW)"] = run.capacities[g.name]

    vre = [g for g in config.generators if g.marginal_cost == 0.0]
    available = sum(
        float(np.sum(w * g.availability_series(len(config.grid)))) * run.capacities[g.name]
        for g in vre)
    dispatched = sum(energy_by_gen[g.name] for g in vre)
    m["curtailment (%)"] = (100.0 * (1.0 - dispatched / available)
                            if available > 0 else math.nan)

    for s in config.storages:
        if not s.shared:
            m[f"{s.name} consumed (MWh/period)"] = float(
                np.sum(w * run.discharge[s.name] / s.discharge_efficiency))
        for key in s.capacity_keys():
            label = s.component_label(key)
            unit = "MWh" if key == s.energy_key else "MW"
            m[f"{label} capacity ({unit})"] = run.capacities[key]

    mean_price = float(np.sum(w * prices) / total_h)
    m["mean electricity price (€/MWh)"] = mean_price
    m["STD electricity price (€/MWh)"] = float(
        np.sqrt(np.sum(w * (prices - mean_price) ** 2) / total_h))
    for s in config.storages:
        lam_s = run.msv[s.name]
        mean_s = float(np.sum(w * lam_s) / total_h)
        std_s = float(np.sqrt(np.sum(w * (lam_s - mean_s) ** 2) / total_h))
        m[f"mean {s.name} MSV (€/MWh)"] = mean_s
        m[f"STD {s.name} MSV (€/MWh)"] = std_s
        if not s.shared:
            m[f"mean {s.name} price (€/MWh)"] = mean_s
            m[f"STD {s.name} price (€/MWh)"] = std_s

    m["zero-price hours (%)"] = 100.0 * price_share(prices, w)
    m["hours above 400 €/MWh (%)"] = 100.0 * price_share(prices, w, threshold=400.0)
    return m
