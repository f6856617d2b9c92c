"""Scenario files: JSON schema, defaults, and translation into model objects.

A scenario document pins down one run: the time window, the technology set
(defaults overridable per entry), the demand curve, the weather source, the
experiment kind, an optional capacity perturbation, and solver options.
Unknown keys are rejected. ``parse_scenario(serialize(s)) == s`` for every
valid scenario.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import demand as dm
from . import weather as wx
from .solver import SolveOptions
from .system import (CostSpec, GeneratorTech, StorageTech, SystemConfig,
                     TimeGrid, SHARED, SEPARATE, SHEDDING_SUBSTITUTION,
                     DIRECT_DEMAND, TECHNOLOGY_DATA, DEFAULT_DISCOUNT_RATE)


class ScenarioError(ValueError):
    """Scenario fails schema validation or internal consistency."""


_COST_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "investment_eur_per_kw": {"type": "number", "minimum": 0},
        "investment_eur_per_kwh": {"type": "number", "minimum": 0},
        "fom_pct_per_a": {"type": "number", "minimum": 0},
        "lifetime_a": {"type": "number", "exclusiveMinimum": 0},
        "efficiency_pct": {"type": "number", "exclusiveMinimum": 0, "maximum": 100},
    },
}

_GENERATOR_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"const": "generator"},
        "investment_eur_per_kw": {"type": "number", "minimum": 0},
        "fom_pct_per_a": {"type": "number", "minimum": 0},
        "lifetime_a": {"type": "number", "exclusiveMinimum": 0},
        "marginal_cost_eur_per_mwh": {"type": "number", "minimum": 0},
        "availability": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "column": {"type": "string"},
                "constant": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "min_capacity_mw": {"type": "number", "minimum": 0},
        "max_capacity_mw": {"type": ["number", "null"]},
    },
}

_STORAGE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "coupling"],
    "properties": {
        "kind": {"const": "storage"},
        "coupling": {"enum": [SHARED, SEPARATE]},
        "efficiency_pct": {"type": "number"},
        "power": _COST_SCHEMA,
        "charge": _COST_SCHEMA,
        "discharge": _COST_SCHEMA,
        "energy": _COST_SCHEMA,
        "min_discharge_capacity_mw": {"type": "number", "minimum": 0},
        "max_energy_capacity_mwh": {"type": ["number", "null"]},
        "cyclic_soc": {"type": "boolean"},
        "labels": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "charge": {"type": "string"},
                "discharge": {"type": "string"},
                "energy": {"type": "string"},
            },
        },
    },
}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "time", "demand", "experiment"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "country_or_dataset": {"type": "string"},
        "time": {
            "type": "object",
            "additionalProperties": False,
            "required": ["start", "end"],
            "properties": {
                "start": {"type": "string"},
                "end": {"type": "string"},
                "resolution_h": {"type": "number", "exclusiveMinimum": 0},
                "year_split": {
                    "type": ["object", "null"],
                    "additionalProperties": False,
                    "properties": {
                        "mode": {"enum": ["published_fixture", "chronological", "custom"]},
                        "lt_years": {"type": "array", "items": {"type": "integer"}},
                        "st_years": {"type": "array", "items": {"type": "integer"}},
                    },
                },
            },
        },
        "weather": {
            "type": "object",
            "additionalProperties": False,
            "required": ["source"],
            "properties": {
                "source": {"enum": ["synthetic", "csv"]},
                "seed": {"type": "integer"},
                "path": {"type": "string"},
                "params": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "solar_seasonal_depth": {"type": "number"},
                        "wind_seasonal_amplitude": {"type": "number"},
                        "noise_scale": {"type": "number"},
                        "wind_target_cf": {"type": "number"},
                        "solar_target_cf": {"type": "number"},
                        "start_year": {"type": "integer"},
                    },
                },
            },
        },
        "technologies": {
            "type": "object",
            "additionalProperties": {
                "oneOf": [_GENERATOR_SCHEMA, _STORAGE_SCHEMA]},
        },
        "representation": {"enum": [SHEDDING_SUBSTITUTION, DIRECT_DEMAND]},
        "discount_rate": {"type": "number", "minimum": 0},
        "demand": {
            "type": "object",
            "additionalProperties": False,
            "required": ["variant"],
            "properties": {
                "variant": {"enum": ["perfectly_inelastic", "voll", "linear",
                                     "piecewise_linear"]},
                "parameters": {"type": "object"},
                "cross_elasticity": {
                    "type": ["object", "null"],
                    "additionalProperties": False,
                    "properties": {
                        "gamma_fraction": {"type": "number", "exclusiveMinimum": 0},
                        "window_hours": {"type": "integer", "minimum": 0},
                    },
                    "required": ["gamma_fraction", "window_hours"],
                },
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["lt", "st_perfect", "st_myopic"]},
                "horizon": {"type": "integer", "exclusiveMinimum": 0},
                "stride": {"type": "integer", "exclusiveMinimum": 0},
                "battery_terminal": {"enum": ["free", "preserve_value"]},
                "initial_soc_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                "msv_bar": {"type": ["object", "number", "null"]},
            },
        },
        "perturbation": {"type": "number", "exclusiveMinimum": -1},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "backend": {"enum": ["clarabel", "scipy"]},
                "barrier_tolerance": {"type": "number", "exclusiveMinimum": 0},
                "dual_tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_iterations": {"type": "integer", "exclusiveMinimum": 0},
            },
        },
        "output_dir": {"type": "string"},
    },
}


def default_technology_block() -> dict:
    """Technology entries exactly mirroring the default assumptions table."""
    d = TECHNOLOGY_DATA
    return {
        "wind": {
            "kind": "generator",
            "investment_eur_per_kw": d["onshore_wind"]["investment"],
            "fom_pct_per_a": d["onshore_wind"]["fom_pct"],
            "lifetime_a": d["onshore_wind"]["lifetime"],
            "marginal_cost_eur_per_mwh": 0.0,
            "availability": {"column": "onwind"},
        },
        "solar": {
            "kind": "generator",
            "investment_eur_per_kw": d["solar"]["investment"],
            "fom_pct_per_a": d["solar"]["fom_pct"],
            "lifetime_a": d["solar"]["lifetime"],
            "marginal_cost_eur_per_mwh": 0.0,
            "availability": {"column": "solar"},
        },
        "battery": {
            "kind": "storage",
            "coupling": SHARED,
            "efficiency_pct": d["battery_inverter"]["efficiency_pct"],
            "power": {
                "investment_eur_per_kw": d["battery_inverter"]["investment"],
                "fom_pct_per_a": d["battery_inverter"]["fom_pct"],
                "lifetime_a": d["battery_inverter"]["lifetime"],
            },
            "energy": {
                "investment_eur_per_kwh": d["battery_storage"]["investment"],
                "fom_pct_per_a": d["battery_storage"]["fom_pct"],
                "lifetime_a": d["battery_storage"]["lifetime"],
            },
            "labels": {"charge": "battery inverter", "energy": "battery storage"},
        },
        "hydrogen": {
            "kind": "storage",
            "coupling": SEPARATE,
            "charge": {
                "investment_eur_per_kw": d["electrolysis"]["investment"],
                "fom_pct_per_a": d["electrolysis"]["fom_pct"],
                "lifetime_a": d["electrolysis"]["lifetime"],
                "efficiency_pct": d["electrolysis"]["efficiency_pct"],
            },
            "discharge": {
                "investment_eur_per_kw": d["hydrogen_turbine"]["investment"],
                "fom_pct_per_a": d["hydrogen_turbine"]["fom_pct"],
                "lifetime_a": d["hydrogen_turbine"]["lifetime"],
                "efficiency_pct": d["hydrogen_turbine"]["efficiency_pct"],
            },
            "energy": {
                "investment_eur_per_kwh": d["hydrogen_cavern"]["investment"],
                "fom_pct_per_a": d["hydrogen_cavern"]["fom_pct"],
                "lifetime_a": d["hydrogen_cavern"]["lifetime"],
            },
            "labels": {"charge": "electrolyser", "discharge": "fuel cell",
                       "energy": "hydrogen storage"},
        },
    }


_DEFAULT_DEMAND_PARAMS = {
    "perfectly_inelastic": {"level": 100.0},
    "voll": {"value_of_lost_load": 2000.0, "peak_demand": 100.0},
    "linear": {"intercept": 2000.0, "slope": 20.0},
    "piecewise_linear": {"segments": [[8000.0, 80.0, 95.0],
                                      [400.0, 40.0, 5.0],
                                      [200.0, 20.0, 10.0]]},
}


def _with_defaults(doc: dict) -> dict:
    out = copy.deepcopy(doc)
    out.setdefault("country_or_dataset", "synthetic")
    out["time"].setdefault("resolution_h", 1.0)
    out["time"].setdefault("year_split", None)
    out.setdefault("weather", {"source": "synthetic"})
    if out["weather"].get("source", "synthetic") == "synthetic":
        out["weather"].setdefault("seed", 1)
    out.setdefault("technologies", default_technology_block())
    out.setdefault("representation", SHEDDING_SUBSTITUTION)
    out.setdefault("discount_rate", DEFAULT_DISCOUNT_RATE)
    variant = out["demand"]["variant"]
    out["demand"].setdefault("parameters", copy.deepcopy(_DEFAULT_DEMAND_PARAMS[variant]))
    out["demand"].setdefault("cross_elasticity", None)
    if out["experiment"]["kind"] == "st_myopic":
        out["experiment"].setdefault("horizon", 96)
        out["experiment"].setdefault("stride", 48)
        out["experiment"].setdefault("battery_terminal", "free")
        out["experiment"].setdefault("initial_soc_fraction", 0.5)
        out["experiment"].setdefault("msv_bar", None)
    out.setdefault("perturbation", 0.0)
    out.setdefault("solver", {})
    out.setdefault("output_dir", f"runs/{out['name']}")
    return out


@dataclass(frozen=True)
class Scenario:
    """A validated scenario document with all defaults filled in."""

    doc: dict

    @property
    def name(self) -> str:
        return self.doc["name"]

    @property
    def experiment(self) -> dict:
        return self.doc["experiment"]

    @property
    def perturbation(self) -> float:
        return self.doc["perturbation"]

    @property
    def output_dir(self) -> str:
        return self.doc["output_dir"]

    def content_hash(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()

    def solve_options(self) -> SolveOptions:
        s = self.doc["solver"]
        kwargs = {}
        if "backend" in s:
            kwargs["solver"] = s["backend"]
        if "barrier_tolerance" in s:
            kwargs["barrier_tolerance"] = s["barrier_tolerance"]
        if "dual_tolerance" in s:
            kwargs["dual_tolerance"] = s["dual_tolerance"]
        if "max_iterations" in s:
            kwargs["max_iterations"] = s["max_iterations"]
        return SolveOptions(**kwargs)

    def time_grid(self) -> TimeGrid:
        t = self.doc["time"]
        grid = TimeGrid.from_range(t["start"], t["end"], t["resolution_h"])
        if len(grid) == 0:
            raise ScenarioError("empty time window")
        return grid

    def demand_model(self):
        block = self.doc["demand"]
        params = block["parameters"]
        ces = block.get("cross_elasticity")
        spec = dm.CrossElasticitySpec(**ces) if ces else None
        variant = block["variant"]
        try:
            if variant == "perfectly_inelastic":
                return dm.PerfectlyInelastic(level=params["level"])
            if variant == "voll":
                return dm.Voll(value_of_lost_load=params["value_of_lost_load"],
                               peak_demand=params["peak_demand"])
            if variant == "linear":
                return dm.LinearDemand(intercept=params["intercept"],
                                       slope=params["slope"],
                                       cross_elasticity=spec)
            segs = tuple(dm.DemandSegment(*row) for row in params["segments"])
            return dm.PiecewiseLinearDemand(segs, cross_elasticity=spec)
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"bad demand parameters for {variant}: {exc}") from exc

    def weather_series(self, grid: TimeGrid, base_dir: Path | None = None) -> dict:
        block = self.doc["weather"]
        if block["source"] == "csv":
            path = Path(block["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return wx.load_weather(path, grid).series
        kw = dict(block.get("params", {}))
        kw.setdefault("start_year", int(grid.snapshots[0].year))
        params = wx.SynthWeatherParams(**kw)
        span_years = grid.snapshots[-1].year - grid.snapshots[0].year + 1
        # generate full years covering the grid, then align
        table = wx.synth_weather(block["seed"], span_years, params)
        index = wx._parse_timestamps(table["timestamp"], "<synthetic>")
        positions = index.get_indexer(grid.snapshots)
        if (positions < 0).any():
            raise ScenarioError(
                "synthetic weather does not cover the requested window "
                "(hourly resolution within generated years required)")
        return {col: table[col].to_numpy()[positions]
                for col in table.columns if col != "timestamp"}

    def system_config(self, base_dir: Path | None = None) -> SystemConfig:
        grid = self.time_grid()
        series = self.weather_series(grid, base_dir)
        generators = []
        storages = []
        for name, entry in self.doc["technologies"].items():
            if entry["kind"] == "generator":
                generators.append(_generator_from(name, entry, series))
            else:
                storages.append(_storage_from(name, entry))
        demand = self.demand_model()
        return SystemConfig(
            grid=grid, generators=tuple(generators), storages=tuple(storages),
            demand=demand, representation=self.doc["representation"],
            discount_rate=self.doc["discount_rate"])


def _generator_from(name, entry, series) -> GeneratorTech:
    avail_spec = entry.get("availability", {"constant": 1.0})
    if "column" in avail_spec:
        col = avail_spec["column"]
        if col not in series:
            raise ScenarioError(f"weather table has no column {col!r} for {name}")
        availability = series[col]
    else:
        availability = avail_spec.get("constant", 1.0)
    max_cap = entry.get("max_capacity_mw")
    return GeneratorTech(
        name,
        investment_cost=entry.get("investment_eur_per_kw", 0.0) * 1000.0,
        fom_fraction=entry.get("fom_pct_per_a", 0.0) / 100.0,
        lifetime=entry.get("lifetime_a", 25.0),
        marginal_cost=entry.get("marginal_cost_eur_per_mwh", 0.0),
        availability=availability,
        min_capacity=entry.get("min_capacity_mw", 0.0),
        max_capacity=np.inf if max_cap is None else max_cap)


def _cost_from(block: dict | None) -> CostSpec:
    block = block or {}
    per_kw = block.get("investment_eur_per_kw")
    per_kwh = block.get("investment_eur_per_kwh")
    investment = 1000.0 * (per_kw if per_kw is not None else (per_kwh or 0.0))
    return CostSpec(investment=investment,
                    fom_fraction=block.get("fom_pct_per_a", 0.0) / 100.0,
                    lifetime=block.get("lifetime_a", 25.0))


def _storage_from(name, entry) -> StorageTech:
    labels = entry.get("labels", {})
    shared = entry["coupling"] == SHARED
    if shared:
        eff = entry.get("efficiency_pct", 100.0) / 100.0
        charge_eff = discharge_eff = eff
        cost_charge = _cost_from(entry.get("power"))
        cost_discharge = None
    else:
        charge = entry.get("charge", {})
        discharge = entry.get("discharge", {})
        charge_eff = charge.get("efficiency_pct", 100.0) / 100.0
        discharge_eff = discharge.get("efficiency_pct", 100.0) / 100.0
        cost_charge = _cost_from(charge)
        cost_discharge = _cost_from(discharge)
    max_e = entry.get("max_energy_capacity_mwh")
    return StorageTech(
        name,
        charge_efficiency=charge_eff,
        discharge_efficiency=discharge_eff,
        power_coupling=entry["coupling"],
        cost_charge=cost_charge,
        cost_discharge=cost_discharge,
        cost_energy=_cost_from(entry.get("energy")),
        min_discharge_capacity=entry.get("min_discharge_capacity_mw", 0.0),
        cyclic_soc=entry.get("cyclic_soc", True),
        max_energy_capacity=np.inf if max_e is None else max_e,
        charge_label=labels.get("charge"),
        discharge_label=labels.get("discharge"),
        energy_label=labels.get("energy"))


def parse_scenario(source) -> Scenario:
    """Validate and normalize a scenario from a dict, JSON string, or path."""
    if isinstance(source, (str, Path)) and str(source).lstrip()[:1] != "{":
        with open(source) as fh:
            doc = json.load(fh)
    elif isinstance(source, str):
        doc = json.loads(source)
    else:
        doc = source
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ScenarioError(f"scenario schema violation: {exc.message}") from exc
    full = _with_defaults(doc)
    jsonschema.validate(full, SCENARIO_SCHEMA)
    if full["weather"]["source"] == "csv" and "path" not in full["weather"]:
        raise ScenarioError("csv weather source needs a path")
    ys = full["time"]["year_split"]
    if ys and ys.get("mode") == "custom":
        if set(ys.get("lt_years", [])) & set(ys.get("st_years", [])):
            raise ScenarioError("custom year split lists overlap")
    return Scenario(full)


def serialize(scenario: Scenario) -> str:
    return json.dumps(scenario.doc, sort_keys=True, indent=2)
