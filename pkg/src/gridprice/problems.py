"""Translate a system configuration into explicit LP/QP problems.

Two problem kinds share one assembly path: the long-term (LT) expansion
problem co-optimizes capacities and dispatch against annualized fixed costs
scaled to the covered horizon, while the short-term (ST) problem fixes all
capacities and keeps only dispatch terms. Constraint and variable names are
identical across the two kinds so dual series compare row by row.

Conventions:
  * balance rows are written with demand entering positively, so their duals
    are scarcity-positive electricity prices (after weight normalization);
  * storage balances are written per MW of average flow,
    (e_t - e_prev)/w_t - eta_c*h_t + f_t/eta_d = 0, so their duals normalize
    exactly like prices;
  * simple caps (shedding width, demand width) are variable bounds; capacity
    couplings (dispatch vs. installed capacity) are explicit tagged rows.
"""

from __future__ import annotations

import numpy as np

from . import demand as dm
from .solver import CAP, MSV, OTHER, PRICE, Constraint, ProblemSpec, RowTag, Variable
from .system import (DIRECT_DEMAND, CapacitySet, ConfigurationError,
                     SystemConfig)


def build_lt_problem(config: SystemConfig, demand=None,
                     horizon_years: float | None = None) -> ProblemSpec:
    """Long-term welfare maximization with endogenous capacities.

    Fixed costs enter scaled by the covered fraction of a year (sum of
    snapshot weights over 8760) unless ``horizon_years`` overrides the scale.
    """
    scale = horizon_years if horizon_years is not None else config.fixed_cost_scale()
    return _assemble(config, demand or config.demand, capacities=None,
                     fixed_cost_scale=scale)


def build_st_problem(config: SystemConfig, demand=None,
                     capacities: CapacitySet | None = None) -> ProblemSpec:
    """Short-term dispatch with capacities fixed; objective has dispatch terms only."""
    if capacities is None:
        raise ConfigurationError("build_st_problem requires a capacity set")
    capacities.validate_for(config)
    return _assemble(config, demand or config.demand, capacities=capacities,
                     fixed_cost_scale=0.0)


def build_window_problem(config: SystemConfig, demand, capacities: CapacitySet,
                         initial_soc: dict, storage_bids: dict | None = None,
                         terminal_soc_min: dict | None = None) -> ProblemSpec:
    """One myopic dispatch window: non-cyclic storage with carried-in SOC.

    ``storage_bids`` maps storage names to (charge_bid, discharge_offer) in
    EUR/MWh of electricity; bid storages earn the charge bid for charging and
    pay the discharge offer for discharging instead of optimizing the medium's
    value endogenously. ``terminal_soc_min`` adds end-of-window SOC floors.
    """
    capacities.validate_for(config)
    return _assemble(config, demand, capacities=capacities, fixed_cost_scale=0.0,
                     cyclic_override=False, initial_soc=initial_soc,
                     storage_bids=storage_bids or {},
                     terminal_soc_min=terminal_soc_min or {})


def _assemble(config, demand, *, capacities, fixed_cost_scale,
              cyclic_override=None, initial_soc=None, storage_bids=None,
              terminal_soc_min=None) -> ProblemSpec:
    grid = config.grid
    T = len(grid)
    w = grid.weight_hours
    rate = config.discount_rate
    long_term = capacities is None
    storage_bids = storage_bids or {}
    terminal_soc_min = terminal_soc_min or {}

    variables: list[Variable] = []
    constraints: list[Constraint] = []
    bilinear: list[tuple[str, str, float]] = []
    constant = 0.0

    # --- demand representation -------------------------------------------
    inelastic = isinstance(demand, dm.PerfectlyInelastic)
    direct = config.representation == DIRECT_DEMAND and not inelastic
    segments: tuple = ()
    shedders: tuple = ()
    fixed_demand = 0.0
    cross = None

    if inelastic:
        fixed_demand = demand.level
    elif direct:
        if isinstance(demand, dm.Voll):
            segments = ()
            variables.extend(
                Variable(f"d[c0,{t}]", 0.0, demand.peak_demand,
                         linear=w[t] * demand.value_of_lost_load) for t in range(T))
        else:
            segments = dm._segments(demand)
            for c, seg in enumerate(segments):
                for t in range(T):
                    variables.append(Variable(
                        f"d[c{c},{t}]", 0.0, seg.width,
                        linear=w[t] * seg.intercept,
                        quadratic=-w[t] * 0.5 * seg.slope))
        cross = _cross_terms(demand, grid)
        if cross is not None:
            for c in range(len(segments)):
                for t, k in cross.pairs:
                    bilinear.append((f"d[c{c},{t}]", f"d[c{c},{k}]", cross.gammas[c]))
    else:
        form = dm.to_load_shedding_form(demand)
        fixed_demand = form.fixed_demand
        shedders = form.shedders
        constant += float(form.constant_per_hour * w.sum())
        cross = _cross_terms(demand, grid)
        lin_extra = cross.linear_cost if cross is not None else None
        for c, shedder in enumerate(shedders):
            for t in range(T):
                lin = shedder.linear_cost + (lin_extra[c, t] if lin_extra is not None else 0.0)
                variables.append(Variable(
                    f"shed[c{c},{t}]", 0.0, shedder.capacity,
                    linear=-w[t] * lin,
                    quadratic=-w[t] * shedder.quadratic_cost))
        if cross is not None:
            constant += cross.total_dropped_constant
            for c in range(len(shedders)):
                for t, k in cross.pairs:
                    # min-form cost -gamma*g_t*g_k == max-form +gamma
                    bilinear.append((f"shed[c{c},{t}]", f"shed[c{c},{k}]",
                                     cross.gammas[c]))

    # --- dispatch and capacity variables ----------------------------------
    for g in config.generators:
        for t in range(T):
            variables.append(Variable(f"g[{g.name},{t}]", 0.0, np.inf,
                                      linear=-w[t] * g.marginal_cost))
        if long_term:
            variables.append(Variable(
                f"cap[{g.name}]", g.min_capacity, g.max_capacity,
                linear=-fixed_cost_scale * g.annualized_cost(rate)))

    for s in config.storages:
        for t in range(T):
            bid = storage_bids.get(s.name)
            lin_f = -w[t] * bid[1] if bid else 0.0   # discharge costed at the offer
            lin_h = w[t] * bid[0] if bid else 0.0    # charging earns the bid
            variables.append(Variable(f"f[{s.name},{t}]", 0.0, np.inf, linear=lin_f))
            variables.append(Variable(f"h[{s.name},{t}]", 0.0, np.inf, linear=lin_h))
            variables.append(Variable(f"e[{s.name},{t}]", 0.0, np.inf))
        if long_term:
            if s.shared:
                variables.append(Variable(
                    f"cap[{s.power_key}]", s.min_discharge_capacity, np.inf,
                    linear=-fixed_cost_scale * s.cost_charge.annualized(rate)))
            else:
                variables.append(Variable(
                    f"cap[{s.charge_key}]", 0.0, np.inf,
                    linear=-fixed_cost_scale * s.cost_charge.annualized(rate)))
                variables.append(Variable(
                    f"cap[{s.discharge_key}]", s.min_discharge_capacity, np.inf,
                    linear=-fixed_cost_scale * s.cost_discharge.annualized(rate)))
            variables.append(Variable(
                f"cap[{s.energy_key}]", 0.0, s.max_energy_capacity,
                linear=-fixed_cost_scale * s.cost_energy.annualized(rate)))

    # --- hourly electricity balance (dual: price) --------------------------
    n_demand_vars = 0
    if direct:
        n_demand_vars = 1 if isinstance(demand, dm.Voll) else len(segments)
    for t in range(T):
        coeffs: dict[str, float] = {}
        rhs = 0.0
        if direct:
            for c in range(n_demand_vars):
                coeffs[f"d[c{c},{t}]"] = 1.0
        else:
            rhs -= fixed_demand
            for c in range(len(shedders)):
                coeffs[f"shed[c{c},{t}]"] = -1.0
        for s in config.storages:
            coeffs[f"h[{s.name},{t}]"] = 1.0
            coeffs[f"f[{s.name},{t}]"] = -1.0
        for g in config.generators:
            coeffs[f"g[{g.name},{t}]"] = -1.0
        constraints.append(Constraint(
            f"balance[{t}]", coeffs, "==", rhs,
            tag=RowTag(PRICE, (t,)), dual_scale=w[t]))

    # --- storage balances (dual: marginal storage value) -------------------
    for s in config.storages:
        cyclic = s.cyclic_soc if cyclic_override is None else cyclic_override
        eta_c = s.charge_efficiency
        eta_d = s.discharge_efficiency
        for t in range(T):
            coeffs = {f"e[{s.name},{t}]": 1.0 / w[t],
                      f"h[{s.name},{t}]": -eta_c,
                      f"f[{s.name},{t}]": 1.0 / eta_d}
            rhs = 0.0
            if t > 0:
                coeffs[f"e[{s.name},{t - 1}]"] = -1.0 / w[t]
            elif cyclic:
                if T > 1:
                    coeffs[f"e[{s.name},{T - 1}]"] = -1.0 / w[t]
                else:
                    coeffs[f"e[{s.name},0]"] += -1.0 / w[t]
            else:
                rhs = (initial_soc or {}).get(s.name, 0.0) / w[t]
            constraints.append(Constraint(
                f"soc[{s.name},{t}]", coeffs, "==", rhs,
                tag=RowTag(MSV, (s.name, t)), dual_scale=w[t]))

    # --- capacity coupling rows --------------------------------------------
    for g in config.generators:
        avail = g.availability_series(T)
        for t in range(T):
            if long_term:
                coeffs = {f"g[{g.name},{t}]": 1.0, f"cap[{g.name}]": -avail[t]}
                rhs = 0.0
            else:
                coeffs = {f"g[{g.name},{t}]": 1.0}
                rhs = avail[t] * capacities[g.name]
            constraints.append(Constraint(
                f"gen_cap[{g.name},{t}]", coeffs, "<=", rhs,
                tag=RowTag(CAP, (g.name, "gen", t))))

    for s in config.storages:
        for t in range(T):
            for series, key, kind in ((f"f[{s.name},{t}]", s.discharge_key, "dis"),
                                      (f"h[{s.name},{t}]", s.charge_key, "chg"),
                                      (f"e[{s.name},{t}]", s.energy_key, "soc")):
                if long_term:
                    coeffs = {series: 1.0, f"cap[{key}]": -1.0}
                    rhs = 0.0
                else:
                    coeffs = {series: 1.0}
                    rhs = capacities[key]
                name = {"dis": "dis_cap", "chg": "chg_cap", "soc": "soc_cap"}[kind]
                constraints.append(Constraint(
                    f"{name}[{s.name},{t}]", coeffs, "<=", rhs,
                    tag=RowTag(CAP, (key, kind, t))))
        floor = terminal_soc_min.get(s.name)
        if floor is not None:
            constraints.append(Constraint(
                f"soc_floor[{s.name}]", {f"e[{s.name},{T - 1}]": 1.0}, ">=",
                float(floor), tag=RowTag(OTHER)))

    meta = {
        "kind": "lt" if long_term else "st",
        "fixed_cost_scale": fixed_cost_scale,
        "n_snapshots": T,
        "representation": "direct" if direct else "substitution",
        "n_segments": len(shedders) if not direct else n_demand_vars,
        "fixed_demand": fixed_demand,
        "storage_bids": dict(storage_bids),
    }
    return ProblemSpec(variables, constraints, bilinear, constant, meta)


def _cross_terms(demand, grid):
    spec = getattr(demand, "cross_elasticity", None)
    if spec is None:
        return None
    if not np.allclose(grid.weight_hours, 1.0):
        raise ConfigurationError(
            "cross-elasticity terms require unit snapshot weights")
    return dm.cross_elastic_terms(spec, dm._segments(demand), grid)


def fixed_cost_block(config: SystemConfig, capacities: CapacitySet,
                     fixed_cost_scale: float | None = None) -> float:
    """Annualized fixed costs of a capacity set, scaled to the horizon.

    Computed independently of any ProblemSpec so tests can reconcile the LT
    objective against the ST objective plus this block.
    """
    scale = fixed_cost_scale if fixed_cost_scale is not None else config.fixed_cost_scale()
    rate = config.discount_rate
    total = 0.0
    for g in config.generators:
        total += g.annualized_cost(rate) * capacities[g.name]
    for s in config.storages:
        for key in s.capacity_keys():
            total += s.annualized_cost(key, rate) * capacities[key]
    return scale * total
