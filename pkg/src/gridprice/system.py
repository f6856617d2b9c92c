"""System configuration: time grid, technologies, capacities.

All quantities use MW / MWh / hours / EUR. Investment costs are per MW (or per
MWh of energy capacity), fixed O&M as a yearly fraction of investment, and the
discount rate applies uniformly to every asset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np
import pandas as pd

SHARED = "shared"
SEPARATE = "separate"

DIRECT_DEMAND = "direct_demand_variables"
SHEDDING_SUBSTITUTION = "load_shedding_substitution"

HOURS_PER_YEAR = 8760.0


class ConfigurationError(ValueError):
    """Raised for inconsistent system configuration or missing capacities."""


def annualized_fixed_cost(investment: float, fom_fraction: float = 0.0,
                          lifetime: float = 1.0, rate: float = 0.0) -> float:
    """Yearly fixed cost per unit of capacity.

    Capital recovery factor rate/(1-(1+rate)^-lifetime) applied to the
    investment, plus fixed O&M as a fraction of the investment per year.
    A zero rate degenerates to straight-line recovery 1/lifetime.
    """
    if lifetime <= 0:
        raise ValueError(f"lifetime must be positive, got {lifetime}")
    if investment < 0 or fom_fraction < 0 or rate < 0:
        raise ValueError("investment, fom_fraction and rate must be non-negative")
    if rate == 0:
        crf = 1.0 / lifetime
    else:
        crf = rate / (1.0 - (1.0 + rate) ** (-lifetime))
    return investment * crf + fom_fraction * investment


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Ordered snapshots with per-snapshot durations in hours."""

    snapshots: pd.DatetimeIndex
    weight_hours: np.ndarray = None

    def __post_init__(self):
        snaps = pd.DatetimeIndex(self.snapshots)
        if snaps.tz is not None:
            snaps = snaps.tz_convert("UTC").tz_localize(None)
        object.__setattr__(self, "snapshots", snaps)
        w = self.weight_hours
        if w is None:
            w = np.ones(len(snaps))
        w = np.asarray(w, dtype=float)
        if w.shape != (len(snaps),):
            raise ValueError("weight_hours must match the number of snapshots")
        if len(snaps) == 0:
            raise ValueError("time grid needs at least one snapshot")
        if not (w > 0).all():
            raise ValueError("snapshot weights must be strictly positive")
        if len(snaps) > 1 and not (snaps[1:] > snaps[:-1]).all():
            raise ValueError("snapshots must be strictly increasing")
        object.__setattr__(self, "weight_hours", _freeze(w))

    @classmethod
    def from_range(cls, start, end, resolution_h: float = 1.0) -> "TimeGrid":
        """Hourly-or-coarser grid on [start, end); end is exclusive."""
        freq = pd.Timedelta(hours=resolution_h)
        snaps = pd.date_range(start=start, end=end, freq=freq, inclusive="left")
        return cls(snaps, np.full(len(snaps), float(resolution_h)))

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def total_hours(self) -> float:
        return float(self.weight_hours.sum())

    @property
    def years(self) -> np.ndarray:
        return self.snapshots.year.to_numpy()

    @property
    def months(self) -> np.ndarray:
        return self.snapshots.month.to_numpy()

    def slice(self, start: int, stop: int) -> "TimeGrid":
        return TimeGrid(self.snapshots[start:stop], self.weight_hours[start:stop])


@dataclass(frozen=True)
class CostSpec:
    """Investment cost with O&M fraction and lifetime for one asset component."""

    investment: float
    fom_fraction: float = 0.0
    lifetime: float = 1.0

    def __post_init__(self):
        if self.investment < 0 or self.fom_fraction < 0:
            raise ValueError("cost components must be non-negative")
        if self.lifetime <= 0:
            raise ValueError("lifetime must be positive")

    def annualized(self, rate: float) -> float:
        return annualized_fixed_cost(self.investment, self.fom_fraction,
                                     self.lifetime, rate)


@dataclass(frozen=True, eq=False)
class GeneratorTech:
    """A generator with a time-varying availability factor.

    ``availability`` is either a scalar (firm/dispatchable plants) or an array
    of per-snapshot capacity factors in [0, 1].
    """

    name: str
    investment_cost: float          # EUR/MW
    fom_fraction: float = 0.0       # 1/a
    lifetime: float = 25.0          # a
    marginal_cost: float = 0.0      # EUR/MWh
    availability: object = 1.0
    min_capacity: float = 0.0
    max_capacity: float = math.inf

    def __post_init__(self):
        if self.investment_cost < 0 or self.marginal_cost < 0:
            raise ValueError(f"{self.name}: costs must be non-negative")
        if self.lifetime <= 0:
            raise ValueError(f"{self.name}: lifetime must be positive")
        if not 0 <= self.min_capacity <= self.max_capacity:
            raise ValueError(f"{self.name}: need 0 <= min_capacity <= max_capacity")
        avail = self.availability
        if isinstance(avail, (int, float)):
            if not 0.0 <= avail <= 1.0:
                raise ValueError(f"{self.name}: availability outside [0, 1]")
        else:
            arr = _freeze(np.asarray(avail, dtype=float))
            if arr.ndim != 1:
                raise ValueError(f"{self.name}: availability must be 1-D")
            if not ((arr >= 0.0) & (arr <= 1.0)).all():
                raise ValueError(f"{self.name}: availability outside [0, 1]")
            object.__setattr__(self, "availability", arr)

    def availability_series(self, n: int) -> np.ndarray:
        if isinstance(self.availability, (int, float)):
            return np.full(n, float(self.availability))
        arr = np.asarray(self.availability, dtype=float)
        if len(arr) != n:
            raise ConfigurationError(
                f"{self.name}: availability length {len(arr)} != {n} snapshots")
        return arr

    def annualized_cost(self, rate: float) -> float:
        return annualized_fixed_cost(self.investment_cost, self.fom_fraction,
                                     self.lifetime, rate)

    def sliced(self, start: int, stop: int) -> "GeneratorTech":
        if isinstance(self.availability, (int, float)):
            return self
        return replace(self, availability=np.asarray(self.availability)[start:stop])


@dataclass(frozen=True)
class StorageTech:
    """A storage chain with one-way charge/discharge efficiencies.

    ``power_coupling`` is "shared" when a single power capacity serves both
    charging and discharging (battery inverter), or "separate" when the charger
    and discharger are independent assets (electrolyser and turbine). For
    shared coupling ``cost_charge`` prices the single power component and
    ``cost_discharge`` must be None.
    """

    name: str
    charge_efficiency: float
    discharge_efficiency: float
    power_coupling: str
    cost_charge: CostSpec
    cost_energy: CostSpec
    cost_discharge: CostSpec | None = None
    min_discharge_capacity: float = 0.0
    cyclic_soc: bool = True
    max_energy_capacity: float = math.inf
    charge_label: str | None = None
    discharge_label: str | None = None
    energy_label: str | None = None

    def __post_init__(self):
        for eff, label in ((self.charge_efficiency, "charge"),
                           (self.discharge_efficiency, "discharge")):
            if not 0.0 < eff <= 1.0:
                raise ValueError(f"{self.name}: {label} efficiency must be in (0, 1]")
        if self.power_coupling not in (SHARED, SEPARATE):
            raise ValueError(f"{self.name}: unknown power coupling {self.power_coupling!r}")
        if self.power_coupling == SHARED and self.cost_discharge is not None:
            raise ValueError(f"{self.name}: shared coupling uses a single power cost")
        if self.power_coupling == SEPARATE and self.cost_discharge is None:
            raise ValueError(f"{self.name}: separate coupling needs a discharge cost")
        if self.min_discharge_capacity < 0:
            raise ValueError(f"{self.name}: min_discharge_capacity must be >= 0")

    @property
    def shared(self) -> bool:
        return self.power_coupling == SHARED

    # capacity keys used in CapacitySet and in problem variable names
    @property
    def power_key(self) -> str:
        return f"{self.name}:power"

    @property
    def charge_key(self) -> str:
        return self.power_key if self.shared else f"{self.name}:charge"

    @property
    def discharge_key(self) -> str:
        return self.power_key if self.shared else f"{self.name}:discharge"

    @property
    def energy_key(self) -> str:
        return f"{self.name}:energy"

    def capacity_keys(self) -> tuple[str, ...]:
        if self.shared:
            return (self.power_key, self.energy_key)
        return (self.charge_key, self.discharge_key, self.energy_key)

    def component_label(self, key: str) -> str:
        if key == self.energy_key:
            return self.energy_label or f"{self.name} storage"
        if self.shared:
            return self.charge_label or f"{self.name} power"
        if key == self.charge_key:
            return self.charge_label or f"{self.name} charger"
        return self.discharge_label or f"{self.name} discharger"

    def annualized_cost(self, key: str, rate: float) -> float:
        if key == self.energy_key:
            return self.cost_energy.annualized(rate)
        if key == self.charge_key or (self.shared and key == self.power_key):
            return self.cost_charge.annualized(rate)
        if key == self.discharge_key:
            return self.cost_discharge.annualized(rate)
        raise KeyError(key)


@dataclass(frozen=True)
class CapacitySet:
    """Fixed capacities keyed by generator name / storage component key."""

    values: Mapping[str, float]

    def __post_init__(self):
        vals = {str(k): float(v) for k, v in dict(self.values).items()}
        for k, v in vals.items():
            if v < 0:
                raise ValueError(f"capacity {k} must be non-negative, got {v}")
        object.__setattr__(self, "values", vals)

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def get(self, key: str, default: float = 0.0) -> float:
        return self.values.get(key, default)

    def keys(self):
        return self.values.keys()

    def items(self):
        return self.values.items()

    def scaled(self, factor: float) -> "CapacitySet":
        return CapacitySet({k: v * factor for k, v in self.values.items()})

    def validate_for(self, config: "SystemConfig") -> None:
        missing = [k for k in config.capacity_keys() if k not in self.values]
        if missing:
            raise ConfigurationError(
                "capacity set is missing entries for: " + ", ".join(missing))


def apply_capacity_perturbation(capacities: CapacitySet, factor: float) -> CapacitySet:
    """Scale every capacity by (1 + factor); the input set is unmodified."""
    if factor <= -1.0:
        raise ValueError("perturbation factor must be > -1")
    return capacities.scaled(1.0 + factor)


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """One region's technologies, demand model, and time grid."""

    grid: TimeGrid
    generators: tuple
    storages: tuple = ()
    demand: object = None
    representation: str = SHEDDING_SUBSTITUTION
    discount_rate: float = 0.07

    def __post_init__(self):
        from . import demand as dm

        gens = tuple(self.generators)
        stors = tuple(self.storages)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "storages", stors)
        if not gens:
            raise ConfigurationError("need at least one generator")
        names = [g.name for g in gens] + [s.name for s in stors]
        if len(set(names)) != len(names):
            raise ConfigurationError("technology names must be unique")
        if self.representation not in (DIRECT_DEMAND, SHEDDING_SUBSTITUTION):
            raise ConfigurationError(f"unknown representation {self.representation!r}")
        if self.demand is None:
            raise ConfigurationError("a demand model is required")
        if isinstance(self.demand, dm.PerfectlyInelastic) \
                and self.representation == DIRECT_DEMAND:
            raise ConfigurationError(
                "perfectly inelastic demand admits only fixed demand; "
                "use load_shedding_substitution")
        if self.discount_rate < 0:
            raise ConfigurationError("discount rate must be non-negative")
        for g in gens:
            g.availability_series(len(self.grid))

    def generator(self, name: str) -> GeneratorTech:
        for g in self.generators:
            if g.name == name:
                return g
        raise KeyError(f"unknown generator {name!r}")

    def storage(self, name: str) -> StorageTech:
        for s in self.storages:
            if s.name == name:
                return s
        raise KeyError(f"unknown storage {name!r}")

    def capacity_keys(self) -> list[str]:
        keys = [g.name for g in self.generators]
        for s in self.storages:
            keys.extend(s.capacity_keys())
        return keys

    def fixed_cost_scale(self) -> float:
        """Fraction of a year covered by the grid, used to scale annual costs."""
        return self.grid.total_hours / HOURS_PER_YEAR

    def slice(self, start: int, stop: int) -> "SystemConfig":
        return replace(
            self,
            grid=self.grid.slice(start, stop),
            generators=tuple(g.sliced(start, stop) for g in self.generators),
        )


def force_reserve_capacity(config: SystemConfig, storage_name: str,
                           min_discharge: float) -> SystemConfig:
    """Force a minimum discharging capacity for one storage in the LT problem.

    Short-term problems are unaffected since their capacities are fixed inputs.
    """
    if min_discharge < 0:
        raise ValueError("min_discharge must be non-negative")
    config.storage(storage_name)  # raises KeyError for unknown storage
    stors = tuple(
        replace(s, min_discharge_capacity=min_discharge) if s.name == storage_name else s
        for s in config.storages)
    return replace(config, storages=stors)


# ---------------------------------------------------------------------------
# Default techno-economic assumptions (DEA 2030 projections, currency 2020).
# Investment in EUR/kW or EUR/kWh, O&M in %/a of investment, efficiencies
# one-way in %, lifetimes in years. Uniform discount rate of 7%.
# ---------------------------------------------------------------------------

DEFAULT_DISCOUNT_RATE = 0.07

TECHNOLOGY_DATA = {
    "onshore_wind":     {"investment": 1095.9, "unit": "EUR/kW",  "fom_pct": 1.22, "lifetime": 30},
    "solar":            {"investment": 543.3,  "unit": "EUR/kW",  "fom_pct": 1.95, "lifetime": 40},
    "battery_inverter": {"investment": 169.3,  "unit": "EUR/kW",  "fom_pct": 0.34, "lifetime": 10, "efficiency_pct": 96.0},
    "battery_storage":  {"investment": 150.3,  "unit": "EUR/kWh", "fom_pct": 0.0,  "lifetime": 25},
    "electrolysis":     {"investment": 1500.0, "unit": "EUR/kW",  "fom_pct": 4.00, "lifetime": 25, "efficiency_pct": 62.2},
    "hydrogen_turbine": {"investment": 1164.0, "unit": "EUR/kW",  "fom_pct": 5.00, "lifetime": 10, "efficiency_pct": 50.0},
    "hydrogen_cavern":  {"investment": 0.15,   "unit": "EUR/kWh", "fom_pct": 0.0,  "lifetime": 100},
}


def _cost(key: str) -> CostSpec:
    row = TECHNOLOGY_DATA[key]
    return CostSpec(investment=row["investment"] * 1000.0,   # per MW / MWh
                    fom_fraction=row["fom_pct"] / 100.0,
                    lifetime=row["lifetime"])


def default_wind(availability) -> GeneratorTech:
    row = TECHNOLOGY_DATA["onshore_wind"]
    return GeneratorTech("wind", investment_cost=row["investment"] * 1000.0,
                         fom_fraction=row["fom_pct"] / 100.0,
                         lifetime=row["lifetime"], availability=availability)


def default_solar(availability) -> GeneratorTech:
    row = TECHNOLOGY_DATA["solar"]
    return GeneratorTech("solar", investment_cost=row["investment"] * 1000.0,
                         fom_fraction=row["fom_pct"] / 100.0,
                         lifetime=row["lifetime"], availability=availability)


def default_battery() -> StorageTech:
    eff = TECHNOLOGY_DATA["battery_inverter"]["efficiency_pct"] / 100.0
    return StorageTech(
        "battery", charge_efficiency=eff, discharge_efficiency=eff,
        power_coupling=SHARED,
        cost_charge=_cost("battery_inverter"),
        cost_energy=_cost("battery_storage"),
        charge_label="battery inverter", energy_label="battery storage")


def default_hydrogen() -> StorageTech:
    return StorageTech(
        "hydrogen",
        charge_efficiency=TECHNOLOGY_DATA["electrolysis"]["efficiency_pct"] / 100.0,
        discharge_efficiency=TECHNOLOGY_DATA["hydrogen_turbine"]["efficiency_pct"] / 100.0,
        power_coupling=SEPARATE,
        cost_charge=_cost("electrolysis"),
        cost_discharge=_cost("hydrogen_turbine"),
        cost_energy=_cost("hydrogen_cavern"),
        charge_label="electrolyser", discharge_label="fuel cell",
        energy_label="hydrogen storage")
