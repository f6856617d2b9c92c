"""Experiment orchestration: LT expansion, ST dispatch, myopic rolling horizon.

Three run kinds produce a RunResult with the same series layout:

* ``run_lt`` co-optimizes capacities and dispatch and reads the optimal
  capacities off the solution;
* ``run_st_perfect`` fixes capacities and dispatches the full horizon with
  perfect foresight;
* ``run_st_myopic`` walks a rolling window over the horizon, replacing each
  long-duration storage by a price-taking pair of constant bids derived from
  its mean marginal storage value, committing only the first ``stride`` hours
  of every window and carrying storage state forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import demand as dm
from . import metrics as metrics_mod
from .problems import (build_lt_problem, build_st_problem,
                       build_window_problem)
from .solver import (KktReport, SolveOptions, extract_msv_series,
                     extract_price_series, solve, verify_kkt)
from .system import CapacitySet, ConfigurationError, SystemConfig

ZERO_PRICE_TOL = 1e-3


class WindowInfeasibleError(RuntimeError):
    """A myopic window could not be dispatched from its carried-in state."""

    def __init__(self, window_index: int, soc: dict, status: str):
        super().__init__(
            f"myopic window {window_index} is {status}; storage state {soc}")
        self.window_index = window_index
        self.soc = soc
        self.status = status


@dataclass(frozen=True)
class MyopicPolicy:
    """Rolling-horizon policy with constant storage-value bids.

    ``msv_bar`` maps each long-duration storage to the constant medium value
    (EUR/MWh) its bids are derived from; storages not listed are optimized
    endogenously inside each window. The horizon exceeds the stride so the
    committed hours see lookahead beyond the commitment boundary.
    """

    horizon: int = 96
    stride: int = 48
    msv_bar: Mapping[str, float] = field(default_factory=dict)
    battery_terminal: str = "free"     # or "preserve_value"
    initial_soc_fraction: float = 0.5

    def __post_init__(self):
        if not 0 < self.stride <= self.horizon:
            raise ValueError("need 0 < stride <= horizon")
        if any(v < 0 for v in self.msv_bar.values()):
            raise ValueError("msv_bar values must be non-negative")
        if self.battery_terminal not in ("free", "preserve_value"):
            raise ValueError(f"unknown battery terminal rule {self.battery_terminal!r}")
        if not 0.0 <= self.initial_soc_fraction <= 1.0:
            raise ValueError("initial_soc_fraction must be in [0, 1]")
        object.__setattr__(self, "msv_bar", dict(self.msv_bar))


def msv_heuristic_bids(msv_bar: float, charge_efficiency: float,
                       discharge_efficiency: float) -> tuple[float, float]:
    """Constant (charge_bid, discharge_offer) for a given medium value.

    Charging is worth the medium produced per MWh of electricity; discharging
    must recover the medium burned per MWh delivered.
    """
    if msv_bar < 0:
        raise ValueError("msv_bar must be non-negative")
    if not 0 < charge_efficiency <= 1:
        raise ValueError("charge efficiency must be in (0, 1]")
    if discharge_efficiency <= 0:
        raise ValueError("discharge efficiency must be positive")
    return charge_efficiency * msv_bar, msv_bar / discharge_efficiency


@dataclass(frozen=True)
class YearSplit:
    lt_years: tuple
    st_years: tuple

    def __post_init__(self):
        if set(self.lt_years) & set(self.st_years):
            raise ValueError("LT and ST year lists must be disjoint")
        object.__setattr__(self, "lt_years", tuple(self.lt_years))
        object.__setattr__(self, "st_years", tuple(self.st_years))


# Published fixture: the 70 weather years 1951-2020 in the shuffled order used
# for the 35-year train/test split.
FIXTURE_LT_YEARS = (
    1960, 1996, 1953, 2020, 1979, 1971, 1998, 2014, 2013, 1989, 1956, 1978,
    1951, 2006, 1966, 1995, 2004, 2011, 2009, 1959, 1961, 1954, 2005, 2010,
    1972, 1986, 2016, 1975, 1955, 1964, 2019, 2003, 1962, 1985, 1957)
FIXTURE_ST_YEARS = (
    2007, 1987, 1974, 1976, 1981, 1993, 1988, 2015, 1958, 2018, 1970, 1990,
    1968, 1991, 1965, 1963, 1992, 1973, 2002, 2001, 1982, 1967, 1999, 2017,
    1994, 1984, 1977, 1980, 2012, 2000, 1983, 1997, 1969, 1952, 2008)


def split_years(mode: str, lt_years=None, st_years=None) -> YearSplit:
    """Train/test weather-year split: published fixture, chronological, or custom."""
    if mode == "published_fixture":
        return YearSplit(FIXTURE_LT_YEARS, FIXTURE_ST_YEARS)
    if mode == "chronological":
        years = tuple(range(1951, 2021))
        half = len(years) // 2
        return YearSplit(years[:half], years[half:])
    if mode == "custom":
        if lt_years is None or st_years is None:
            raise ValueError("custom split needs both year lists")
        return YearSplit(tuple(lt_years), tuple(st_years))
    raise ValueError(f"unknown split mode {mode!r}")


@dataclass
class RunResult:
    """Capacities, series, prices, storage values, and metrics of one run."""

    kind: str
    config: SystemConfig
    demand: object
    capacities: CapacitySet
    generation: dict
    discharge: dict
    charge: dict
    soc: dict
    served_by_segment: np.ndarray | None
    shed_by_segment: np.ndarray | None
    demand_served: np.ndarray
    prices: np.ndarray
    msv: dict
    objective: float
    objective_constant: float
    fixed_cost_scale: float
    kkt: KktReport | None
    degenerate_duals: bool
    msv_degenerate: dict
    provenance: dict
    welfare: object = None
    metrics: dict | None = None

    @property
    def weights(self) -> np.ndarray:
        return self.config.grid.weight_hours

    def shed_total(self) -> np.ndarray:
        if self.shed_by_segment is None:
            return np.zeros(len(self.config.grid))
        return self.shed_by_segment.sum(axis=0)


def _series(primal, prefix, name, T) -> np.ndarray:
    return np.array([primal[f"{prefix}[{name},{t}]"] for t in range(T)])


def _demand_series(demand, representation, primal, T):
    """(served_by_segment, shed_by_segment, served_total) from a solution."""
    if isinstance(demand, dm.PerfectlyInelastic):
        return None, None, np.full(T, demand.level)
    if representation == "direct":
        if isinstance(demand, dm.Voll):
            widths = np.array([demand.peak_demand])
        else:
            widths = np.array([s.width for s in dm._segments(demand)])
        served = np.stack([_series(primal, "d", f"c{c}", T) for c in range(len(widths))])
        shed = widths[:, None] - served
    else:
        form = dm.to_load_shedding_form(demand)
        widths = np.array([s.capacity for s in form.shedders])
        shed = np.stack([_series(primal, "shed", f"c{c}", T) for c in range(len(widths))])
        served = widths[:, None] - shed
    return served, shed, served.sum(axis=0)


def _segment_widths(demand) -> np.ndarray | None:
    if isinstance(demand, dm.PerfectlyInelastic):
        return None
    if isinstance(demand, dm.Voll):
        return np.array([demand.peak_demand])
    return np.array([s.width for s in dm._segments(demand)])


def _flag_degenerate(demand, served_by_segment, prices) -> bool:
    """True when some hour's price cannot come from a strictly interior demand.

    Under a flat (step) demand curve the constant demand causes a demand-side
    degeneracy: any hour with a non-zero price but no segment strictly between
    empty and full is supply-determined, so LT and ST prices may diverge.
    """
    priced = np.abs(prices) > ZERO_PRICE_TOL
    if served_by_segment is None:
        return bool(priced.any())
    widths = _segment_widths(demand)
    atol = np.maximum(1e-5 * widths, 1e-8)[:, None]
    interior = (served_by_segment > atol) & (served_by_segment < widths[:, None] - atol)
    return bool((priced & ~interior.any(axis=0)).any())


def _finish_run(run: RunResult) -> RunResult:
    run.welfare = metrics_mod.welfare_decomposition(run)
    run.metrics = metrics_mod.standard_metrics(run)
    return run


def _extract_run(kind, config, demand, problem, solution, capacities,
                 provenance) -> RunResult:
    T = len(config.grid)
    primal = solution.primal
    generation = {g.name: _series(primal, "g", g.name, T) for g in config.generators}
    discharge = {s.name: _series(primal, "f", s.name, T) for s in config.storages}
    charge = {s.name: _series(primal, "h", s.name, T) for s in config.storages}
    soc = {s.name: _series(primal, "e", s.name, T) for s in config.storages}
    served_seg, shed_seg, served = _demand_series(
        demand, problem.meta["representation"], primal, T)
    prices = extract_price_series(solution, problem)
    msv = {s.name: extract_msv_series(solution, problem, s.name)
           for s in config.storages}
    kkt = verify_kkt(problem, solution)
    run = RunResult(
        kind=kind, config=config, demand=demand, capacities=capacities,
        generation=generation, discharge=discharge, charge=charge, soc=soc,
        served_by_segment=served_seg, shed_by_segment=shed_seg,
        demand_served=served, prices=prices, msv=msv,
        objective=solution.objective, objective_constant=problem.constant,
        fixed_cost_scale=(problem.meta["fixed_cost_scale"] if kind == "lt"
                          else config.fixed_cost_scale()),
        kkt=kkt,
        degenerate_duals=_flag_degenerate(demand, served_seg, prices),
        msv_degenerate={s.name: capacities[s.energy_key] < 1e-3
                        for s in config.storages},
        provenance=provenance)
    return _finish_run(run)


def run_lt(config: SystemConfig, demand=None, horizon_years=None,
           options: SolveOptions | None = None) -> RunResult:
    """Solve the long-term expansion problem and package its solution."""
    demand = demand or config.demand
    problem = build_lt_problem(config, demand, horizon_years)
    solution = solve(problem, options).require_optimal("in run_lt")
    caps = CapacitySet({
        name[len("cap["):-1]: max(value, 0.0)
        for name, value in solution.primal.items() if name.startswith("cap[")})
    provenance = {"experiment": "lt", "solver": solution.info.get("solver")}
    return _extract_run("lt", config, demand, problem, solution, caps, provenance)


def run_st_perfect(config: SystemConfig, demand=None,
                   capacities: CapacitySet | None = None,
                   options: SolveOptions | None = None,
                   initial_soc: Mapping[str, float] | None = None) -> RunResult:
    """Perfect-foresight dispatch over the full horizon with fixed capacities.

    By default storage state is cyclic over the horizon. Passing
    ``initial_soc`` switches to an open horizon with that starting state and a
    free terminal, which is the boundary-matched comparison for myopic runs.
    """
    demand = demand or config.demand
    if initial_soc is None:
        problem = build_st_problem(config, demand, capacities)
    else:
        if capacities is None:
            raise ConfigurationError("run_st_perfect requires a capacity set")
        problem = build_window_problem(config, demand, capacities,
                                       initial_soc=dict(initial_soc))
    solution = solve(problem, options).require_optimal("in run_st_perfect")
    provenance = {"experiment": "st_perfect", "solver": solution.info.get("solver"),
                  "initial_soc": None if initial_soc is None else dict(initial_soc)}
    return _extract_run("st_perfect", config, demand, problem, solution,
                        capacities, provenance)


def mean_msv(run: RunResult, storage: str) -> float:
    """Weight-adjusted mean of a storage's marginal value series."""
    w = run.weights
    return float(np.sum(w * run.msv[storage]) / w.sum())


def default_msv_bar(run: RunResult) -> dict:
    """Mean LT marginal storage value for each separate-coupling storage."""
    return {s.name: mean_msv(run, s.name)
            for s in run.config.storages if not s.shared}


def run_st_myopic(config: SystemConfig, demand=None,
                  capacities: CapacitySet | None = None,
                  policy: MyopicPolicy | None = None,
                  options: SolveOptions | None = None) -> RunResult:
    """Rolling-horizon dispatch with constant storage-value bids.

    Windows start every ``stride`` hours; each covers up to ``horizon`` hours
    (clipped at the end of the grid) and only its first ``stride`` hours are
    committed — the final truncated window is committed in full. Storage state
    at a commitment boundary seeds the next window exactly. The run's price
    and storage-value series are the committed windows' duals; its objective
    is the dispatch welfare of the committed series (window objectives contain
    heuristic bid terms and are reported in provenance only).
    """
    demand = demand or config.demand
    policy = policy or MyopicPolicy()
    if capacities is None:
        raise ConfigurationError("run_st_myopic requires a capacity set")
    capacities.validate_for(config)
    for name in policy.msv_bar:
        config.storage(name)   # KeyError for unknown storages

    bids = {}
    for name, bar in policy.msv_bar.items():
        s = config.storage(name)
        bids[name] = msv_heuristic_bids(bar, s.charge_efficiency,
                                        s.discharge_efficiency)

    T = len(config.grid)
    soc_state = {s.name: policy.initial_soc_fraction * capacities[s.energy_key]
                 for s in config.storages}

    committed: dict[str, list] = {"prices": []}
    gen_parts = {g.name: [] for g in config.generators}
    dis_parts = {s.name: [] for s in config.storages}
    chg_parts = {s.name: [] for s in config.storages}
    soc_parts = {s.name: [] for s in config.storages}
    msv_parts = {s.name: [] for s in config.storages}
    served_parts, shed_parts = [], []
    windows = []
    stationarity: dict = {}
    complementarity = 0.0
    window_objectives = []

    start = 0
    widx = 0
    while start < T:
        wend = min(start + policy.horizon, T)
        sub = config.slice(start, wend)
        terminal = {}
        if policy.battery_terminal == "preserve_value":
            terminal = {s.name: soc_state[s.name]
                        for s in config.storages if s.name not in policy.msv_bar}
        problem = build_window_problem(sub, demand, capacities,
                                       initial_soc=soc_state,
                                       storage_bids=bids,
                                       terminal_soc_min=terminal)
        solution = solve(problem, options)
        if not solution.optimal:
            raise WindowInfeasibleError(widx, dict(soc_state), solution.status)

        n_window = wend - start
        commit_end = min(start + policy.stride, T)
        n_commit = commit_end - start
        primal = solution.primal

        for g in config.generators:
            gen_parts[g.name].append(_series(primal, "g", g.name, n_window)[:n_commit])
        for s in config.storages:
            dis_parts[s.name].append(_series(primal, "f", s.name, n_window)[:n_commit])
            chg_parts[s.name].append(_series(primal, "h", s.name, n_window)[:n_commit])
            soc_parts[s.name].append(_series(primal, "e", s.name, n_window)[:n_commit])
            msv_parts[s.name].append(
                extract_msv_series(solution, problem, s.name)[:n_commit])
        served_seg, shed_seg, _ = _demand_series(
            demand, problem.meta["representation"], primal, n_window)
        if served_seg is not None:
            served_parts.append(served_seg[:, :n_commit])
            shed_parts.append(shed_seg[:, :n_commit])
        committed["prices"].append(extract_price_series(solution, problem)[:n_commit])

        report = verify_kkt(problem, solution)
        for cls, val in report.stationarity.items():
            stationarity[cls] = max(stationarity.get(cls, 0.0), val)
        complementarity = max(complementarity, report.complementarity)
        window_objectives.append(solution.objective)
        windows.append({"index": widx, "start": start, "commit_end": commit_end,
                        "window_end": wend, "initial_soc": dict(soc_state)})

        soc_state = {s.name: float(primal[f"e[{s.name},{n_commit - 1}]"])
                     for s in config.storages}
        start = commit_end
        widx += 1

    generation = {k: np.concatenate(v) for k, v in gen_parts.items()}
    discharge = {k: np.concatenate(v) for k, v in dis_parts.items()}
    charge = {k: np.concatenate(v) for k, v in chg_parts.items()}
    soc = {k: np.concatenate(v) for k, v in soc_parts.items()}
    msv = {k: np.concatenate(v) for k, v in msv_parts.items()}
    prices = np.concatenate(committed["prices"])
    if served_parts:
        served_seg = np.concatenate(served_parts, axis=1)
        shed_seg = np.concatenate(shed_parts, axis=1)
        served = served_seg.sum(axis=0)
    else:
        served_seg = shed_seg = None
        served = np.full(T, demand.level)

    # dispatch welfare of the committed series (see docstring)
    w = config.grid.weight_hours
    var_cost = sum(float(np.sum(w * g.marginal_cost * generation[g.name]))
                   for g in config.generators)
    constant = metrics_mod.analytic_constant(demand, w)
    utility = metrics_mod.utility_of_series(demand, served_seg, w)
    objective = -var_cost if utility is None else utility - constant - var_cost

    run = RunResult(
        kind="st_myopic", config=config, demand=demand, capacities=capacities,
        generation=generation, discharge=discharge, charge=charge, soc=soc,
        served_by_segment=served_seg, shed_by_segment=shed_seg,
        demand_served=served, prices=prices, msv=msv,
        objective=objective, objective_constant=constant,
        fixed_cost_scale=config.fixed_cost_scale(),
        kkt=KktReport(stationarity, complementarity, {}),
        degenerate_duals=_flag_degenerate(demand, served_seg, prices),
        msv_degenerate={s.name: capacities[s.energy_key] < 1e-3
                        for s in config.storages},
        provenance={"experiment": "st_myopic", "policy": {
            "horizon": policy.horizon, "stride": policy.stride,
            "msv_bar": dict(policy.msv_bar),
            "battery_terminal": policy.battery_terminal,
            "initial_soc_fraction": policy.initial_soc_fraction},
            "bids": {k: list(v) for k, v in bids.items()},
            "windows": windows, "window_objectives": window_objectives})
    return _finish_run(run)
