"""Run-directory persistence: CSV series, JSON metrics, reproducible manifest.

Floats are written with shortest round-trip formatting, so an
export -> import -> export cycle is byte-identical and metrics recomputed from
the CSVs match the stored values bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import metrics as metrics_mod
from .scenario import Scenario, parse_scenario, serialize
from .system import CapacitySet
from .weather import TIMESTAMP_FORMAT

PRICES_CSV = "prices.csv"
MSV_CSV = "msv.csv"
DISPATCH_CSV = "dispatch.csv"
CAPACITIES_JSON = "capacities.json"
METRICS_JSON = "metrics.json"
KKT_JSON = "kkt.json"
MANIFEST_JSON = "manifest.json"
SCENARIO_JSON = "scenario.json"


def _timestamps(run) -> list:
    return [t.strftime(TIMESTAMP_FORMAT) for t in run.config.grid.snapshots]


def _none_to_nan(value):
    return math.nan if value is None else value


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_json_ready(payload), fh, sort_keys=True, indent=2)
        fh.write("\n")


def export_run(run, out_dir, scenario: Scenario | None = None) -> dict:
    """Write the five run artifacts (plus dispatch.csv and manifest) to a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ts = _timestamps(run)

    pd.DataFrame({"timestamp": ts, "value": run.prices}).to_csv(
        out / PRICES_CSV, index=False)

    storages = [s.name for s in run.config.storages]
    if len(storages) == 1:
        msv_frame = pd.DataFrame({"timestamp": ts, "value": run.msv[storages[0]]})
    else:
        msv_frame = pd.DataFrame({"timestamp": ts,
                                  **{name: run.msv[name] for name in storages}})
    msv_frame.to_csv(out / MSV_CSV, index=False)

    dispatch = {"timestamp": ts}
    for g in run.config.generators:
        dispatch[f"gen:{g.name}"] = run.generation[g.name]
    for s in run.config.storages:
        dispatch[f"discharge:{s.name}"] = run.discharge[s.name]
        dispatch[f"charge:{s.name}"] = run.charge[s.name]
        dispatch[f"soc:{s.name}"] = run.soc[s.name]
    dispatch["served:total"] = run.demand_served
    if run.served_by_segment is not None:
        for c in range(run.served_by_segment.shape[0]):
            dispatch[f"served:c{c}"] = run.served_by_segment[c]
            dispatch[f"shed:c{c}"] = run.shed_by_segment[c]
    pd.DataFrame(dispatch).to_csv(out / DISPATCH_CSV, index=False)

    _write_json(out / CAPACITIES_JSON, dict(run.capacities.items()))
    _write_json(out / METRICS_JSON, run.metrics)
    if run.kkt is not None:
        _write_json(out / KKT_JSON, run.kkt.summary())

    manifest = {
        "name": scenario.name if scenario else run.provenance.get("experiment", "run"),
        "kind": run.kind,
        "snapshots": len(run.config.grid),
        "objective": run.objective,
        "objective_constant": run.objective_constant,
        "fixed_cost_scale": run.fixed_cost_scale,
        "degenerate_duals": run.degenerate_duals,
        "msv_degenerate": run.msv_degenerate,
        "provenance": {k: v for k, v in run.provenance.items() if k != "windows"},
        "scenario_hash": scenario.content_hash() if scenario else None,
    }
    _write_json(out / MANIFEST_JSON, manifest)
    if scenario is not None:
        (out / SCENARIO_JSON).write_text(serialize(scenario) + "\n")
    return manifest


@dataclass
class ExportedRun:
    """Raw artifacts of a run directory, sufficient for byte-exact re-export."""

    prices: pd.DataFrame
    msv: pd.DataFrame
    dispatch: pd.DataFrame
    capacities: dict
    metrics: dict
    kkt: dict | None
    manifest: dict
    scenario: Scenario | None


def import_run(run_dir) -> ExportedRun:
    run_dir = Path(run_dir)
    read = lambda name: pd.read_csv(run_dir / name, dtype={"timestamp": str},
                                    float_precision="round_trip")
    with open(run_dir / CAPACITIES_JSON) as fh:
        capacities = json.load(fh)
    with open(run_dir / METRICS_JSON) as fh:
        metrics = json.load(fh)
    kkt = None
    if (run_dir / KKT_JSON).exists():
        with open(run_dir / KKT_JSON) as fh:
            kkt = json.load(fh)
    with open(run_dir / MANIFEST_JSON) as fh:
        manifest = json.load(fh)
    scenario = None
    if (run_dir / SCENARIO_JSON).exists():
        scenario = parse_scenario(run_dir / SCENARIO_JSON)
    return ExportedRun(read(PRICES_CSV), read(MSV_CSV), read(DISPATCH_CSV),
                       capacities, metrics, kkt, manifest, scenario)


def export_imported(exported: ExportedRun, out_dir) -> None:
    """Re-export previously imported artifacts (byte-identical to the originals)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exported.prices.to_csv(out / PRICES_CSV, index=False)
    exported.msv.to_csv(out / MSV_CSV, index=False)
    exported.dispatch.to_csv(out / DISPATCH_CSV, index=False)
    _write_json(out / CAPACITIES_JSON, exported.capacities)
    _write_json(out / METRICS_JSON, exported.metrics)
    if exported.kkt is not None:
        _write_json(out / KKT_JSON, exported.kkt)
    _write_json(out / MANIFEST_JSON, exported.manifest)
    if exported.scenario is not None:
        (out / SCENARIO_JSON).write_text(serialize(exported.scenario) + "\n")


def recompute_metrics(run_dir) -> tuple[dict, dict]:
    """Recompute the metrics table from a run directory's raw series.

    Returns (stored, recomputed); both should match bit for bit since metrics
    are pure functions of the exported series.
    """
    from .dispatch import RunResult   # local import to avoid a cycle

    exported = import_run(run_dir)
    if exported.scenario is None:
        raise FileNotFoundError(f"{run_dir}: no scenario.json; cannot recompute")
    config = exported.scenario.system_config(base_dir=Path(run_dir))
    demand = config.demand
    dispatch = exported.dispatch
    T = len(config.grid)
    if len(dispatch) != T:
        raise ValueError(f"{run_dir}: dispatch.csv rows do not match the scenario grid")

    generation = {g.name: dispatch[f"gen:{g.name}"].to_numpy(float)
                  for g in config.generators}
    discharge = {s.name: dispatch[f"discharge:{s.name}"].to_numpy(float)
                 for s in config.storages}
    charge = {s.name: dispatch[f"charge:{s.name}"].to_numpy(float)
              for s in config.storages}
    soc = {s.name: dispatch[f"soc:{s.name}"].to_numpy(float)
           for s in config.storages}
    seg_cols = sorted(c for c in dispatch.columns if c.startswith("served:c"))
    if seg_cols:
        served_seg = np.stack([dispatch[c].to_numpy(float) for c in seg_cols])
        shed_seg = np.stack([dispatch[c.replace("served:", "shed:")].to_numpy(float)
                             for c in seg_cols])
    else:
        served_seg = shed_seg = None
    storages = [s.name for s in config.storages]
    if len(storages) == 1:
        msv = {storages[0]: exported.msv["value"].to_numpy(float)}
    else:
        msv = {name: exported.msv[name].to_numpy(float) for name in storages}

    run = RunResult(
        kind=exported.manifest["kind"], config=config, demand=demand,
        capacities=CapacitySet(exported.capacities),
        generation=generation, discharge=discharge, charge=charge, soc=soc,
        served_by_segment=served_seg, shed_by_segment=shed_seg,
        demand_served=dispatch["served:total"].to_numpy(float),
        prices=exported.prices["value"].to_numpy(float), msv=msv,
        objective=_none_to_nan(exported.manifest.get("objective")),
        objective_constant=_none_to_nan(exported.manifest.get("objective_constant")),
        fixed_cost_scale=exported.manifest["fixed_cost_scale"],
        kkt=None, degenerate_duals=exported.manifest["degenerate_duals"],
        msv_degenerate=exported.manifest["msv_degenerate"],
        provenance=exported.manifest.get("provenance", {}))
    run.welfare = metrics_mod.welfare_decomposition(run)
    recomputed = metrics_mod.standard_metrics(run)
    return exported.metrics, _json_ready(recomputed)
