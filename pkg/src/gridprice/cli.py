"""Command-line surface for the experiment matrix.

Subcommands: solve-lt, solve-st, dispatch-myopic, metrics, validate-kkt, sweep.
Exit codes: 0 success, 2 validation/configuration error, 3 solver failure.
Diagnostics go to stderr; run artifacts land in the scenario's output
directory (or --out).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import itertools
import json
import sys
from pathlib import Path

from . import runio
from .demand import DemandModelError
from .dispatch import (MyopicPolicy, WindowInfeasibleError, default_msv_bar,
                       run_lt, run_st_myopic, run_st_perfect)
from .scenario import Scenario, ScenarioError, parse_scenario
from .solver import SolveFailedError
from .system import (CapacitySet, ConfigurationError,
                     apply_capacity_perturbation)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3

_VALIDATION_ERRORS = (ScenarioError, ConfigurationError, DemandModelError,
                      ValueError, KeyError, FileNotFoundError,
                      json.JSONDecodeError)
_SOLVER_ERRORS = (SolveFailedError, WindowInfeasibleError)


def _err(msg: str) -> None:
    print(f"gridprice: {msg}", file=sys.stderr)


def _load_capacities(path) -> CapacitySet:
    with open(path) as fh:
        return CapacitySet(json.load(fh))


def _out_dir(scenario: Scenario, override) -> Path:
    return Path(override) if override else Path(scenario.output_dir)


def _run_lt_scenario(scenario: Scenario, base_dir: Path):
    config = scenario.system_config(base_dir=base_dir)
    return run_lt(config, options=scenario.solve_options())


def _run_st_scenario(scenario: Scenario, base_dir: Path, capacities: CapacitySet,
                     perturb: float | None):
    config = scenario.system_config(base_dir=base_dir)
    factor = perturb if perturb is not None else scenario.perturbation
    if factor:
        capacities = apply_capacity_perturbation(capacities, factor)
    return run_st_perfect(config, capacities=capacities,
                          options=scenario.solve_options())


def _myopic_policy(scenario: Scenario, config, capacities, msv_bar_arg,
                   horizon, stride):
    exp = scenario.experiment
    msv_bar = _resolve_msv_bar(msv_bar_arg if msv_bar_arg is not None
                               else exp.get("msv_bar"), config, capacities, scenario)
    return MyopicPolicy(
        horizon=horizon or exp.get("horizon", 96),
        stride=stride or exp.get("stride", 48),
        msv_bar=msv_bar,
        battery_terminal=exp.get("battery_terminal", "free"),
        initial_soc_fraction=exp.get("initial_soc_fraction", 0.5))


def _resolve_msv_bar(source, config, capacities, scenario) -> dict:
    """--msv-bar VALUE applies to every separate-coupling storage; a JSON file
    maps storage names to medium values; None derives it from a fresh LT run."""
    long_duration = [s.name for s in config.storages if not s.shared]
    if source is None:
        lt = run_lt(config, options=scenario.solve_options())
        return default_msv_bar(lt)
    if isinstance(source, (int, float)):
        return {name: float(source) for name in long_duration}
    if isinstance(source, dict):
        return {k: float(v) for k, v in source.items()}
    text = str(source)
    path = Path(text)
    if path.exists():
        with open(path) as fh:
            return {k: float(v) for k, v in json.load(fh).items()}
    try:
        value = float(text)
    except ValueError:
        raise ScenarioError(f"--msv-bar: neither a number nor a file: {text!r}")
    return {name: value for name in long_duration}


def _cmd_solve_lt(args) -> int:
    scenario = parse_scenario(args.scenario)
    base = Path(args.scenario).parent
    run = _run_lt_scenario(scenario, base)
    out = _out_dir(scenario, args.out)
    runio.export_run(run, out, scenario)
    print(out)
    return EXIT_OK


def _cmd_solve_st(args) -> int:
    scenario = parse_scenario(args.scenario)
    base = Path(args.scenario).parent
    caps = _load_capacities(args.capacities)
    run = _run_st_scenario(scenario, base, caps, args.perturb)
    out = _out_dir(scenario, args.out)
    runio.export_run(run, out, scenario)
    print(out)
    return EXIT_OK


def _cmd_dispatch_myopic(args) -> int:
    scenario = parse_scenario(args.scenario)
    base = Path(args.scenario).parent
    caps = _load_capacities(args.capacities)
    config = scenario.system_config(base_dir=base)
    factor = args.perturb if args.perturb is not None else scenario.perturbation
    if factor:
        caps = apply_capacity_perturbation(caps, factor)
    policy = _myopic_policy(scenario, config, caps, args.msv_bar,
                            args.horizon, args.stride)
    run = run_st_myopic(config, capacities=caps, policy=policy,
                        options=scenario.solve_options())
    out = _out_dir(scenario, args.out)
    runio.export_run(run, out, scenario)
    print(out)
    return EXIT_OK


def _cmd_metrics(args) -> int:
    stored, recomputed = runio.recompute_metrics(args.run_dir)
    mismatches = []
    for key in sorted(set(stored) | set(recomputed)):
        a, b = stored.get(key), recomputed.get(key)
        if a != b and not (a is None and b is None):
            mismatches.append((key, a, b))
    if mismatches:
        for key, a, b in mismatches:
            _err(f"metric mismatch {key!r}: stored {a!r} recomputed {b!r}")
        return EXIT_VALIDATION
    print(f"{len(recomputed)} metrics verified")
    return EXIT_OK


def _cmd_validate_kkt(args) -> int:
    run_dir = Path(args.run_dir)
    exported = runio.import_run(run_dir)
    if exported.scenario is None:
        _err("run directory has no scenario.json")
        return EXIT_VALIDATION
    scenario = exported.scenario
    kind = exported.manifest["kind"]
    config = scenario.system_config(base_dir=run_dir)
    caps = CapacitySet(exported.capacities)
    if kind == "lt":
        run = run_lt(config, options=scenario.solve_options())
    elif kind == "st_perfect":
        run = run_st_perfect(config, capacities=caps,
                             options=scenario.solve_options())
    else:
        policy = _myopic_policy(
            scenario, config, caps,
            exported.manifest.get("provenance", {}).get("policy", {}).get("msv_bar"),
            None, None)
        run = run_st_myopic(config, capacities=caps, policy=policy,
                            options=scenario.solve_options())
    report = run.kkt
    print(json.dumps(report.summary(), indent=2, sort_keys=True))
    if not report.within(args.tol):
        _err(f"KKT residuals exceed {args.tol}")
        return EXIT_SOLVER
    return EXIT_OK


def _expand_matrix(matrix: dict) -> list:
    """Cross product of axis values over a base scenario document."""
    base = matrix.get("base")
    if base is None:
        raise ScenarioError("matrix needs a 'base' scenario")
    axes = matrix.get("axes", {})
    names = sorted(axes)
    scenarios = []
    for combo in itertools.product(*(axes[n] for n in names)):
        doc = copy.deepcopy(base)
        suffix = []
        for key, value in zip(names, combo):
            node = doc
            parts = key.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = value
            suffix.append(f"{parts[-1]}={value}")
        doc["name"] = doc.get("name", "run") + "-" + "-".join(suffix)
        root = matrix.get("output_root")
        if root:
            doc["output_dir"] = str(Path(root) / doc["name"])
        scenarios.append(doc)
    return scenarios


def _sweep_one(payload) -> tuple:
    index, doc, base_dir = payload
    try:
        scenario = parse_scenario(doc)
        config = scenario.system_config(base_dir=Path(base_dir))
        kind = scenario.experiment["kind"]
        if kind == "lt":
            run = run_lt(config, options=scenario.solve_options())
        else:
            lt = run_lt(config, options=scenario.solve_options())
            caps = lt.capacities
            if scenario.perturbation:
                caps = apply_capacity_perturbation(caps, scenario.perturbation)
            if kind == "st_perfect":
                run = run_st_perfect(config, capacities=caps,
                                     options=scenario.solve_options())
            else:
                policy = _myopic_policy(scenario, config, caps,
                                        default_msv_bar(lt), None, None)
                run = run_st_myopic(config, capacities=caps, policy=policy,
                                    options=scenario.solve_options())
        out = Path(scenario.output_dir)
        runio.export_run(run, out, scenario)
        return index, scenario.name, str(out), None
    except _SOLVER_ERRORS as exc:
        return index, doc.get("name", f"#{index}"), None, f"solver: {exc}"
    except _VALIDATION_ERRORS as exc:
        return index, doc.get("name", f"#{index}"), None, f"validation: {exc}"


def _cmd_sweep(args) -> int:
    with open(args.matrix) as fh:
        matrix = json.load(fh)
    scenarios = _expand_matrix(matrix)
    base_dir = str(Path(args.matrix).parent)
    payloads = [(i, doc, base_dir) for i, doc in enumerate(scenarios)]
    results = []
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, payloads))
    else:
        results = [_sweep_one(p) for p in payloads]
    results.sort(key=lambda r: r[0])
    failures = 0
    for _, name, out, error in results:
        if error is None:
            print(f"{name}: {out}")
        else:
            failures += 1
            _err(f"{name}: {error}")
    _write_sweep_metrics(matrix, results)
    if failures:
        return EXIT_SOLVER if any("solver:" in (r[3] or "") for r in results) \
            else EXIT_VALIDATION
    return EXIT_OK


def _write_sweep_metrics(matrix, results) -> None:
    """Flat metrics table across the sweep: one row per scenario and metric."""
    root = matrix.get("output_root")
    if not root:
        return
    rows = []
    for _, name, out, error in results:
        if error is not None:
            continue
        with open(Path(out) / "metrics.json") as fh:
            for metric, value in sorted(json.load(fh).items()):
                rows.append((name, metric, "" if value is None else repr(value)))
    path = Path(root) / "metrics.csv"
    with open(path, "w") as fh:
        fh.write("scenario,metric,value\n")
        for name, metric, value in rows:
            fh.write(f'{name},"{metric}",{value}\n')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridprice",
        description="Capacity expansion and dispatch with dual-based prices")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-lt", help="long-term expansion run")
    p.add_argument("scenario")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_solve_lt)

    p = sub.add_parser("solve-st", help="short-term perfect-foresight dispatch")
    p.add_argument("scenario")
    p.add_argument("--capacities", required=True)
    p.add_argument("--perturb", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_solve_st)

    p = sub.add_parser("dispatch-myopic", help="rolling-horizon dispatch")
    p.add_argument("scenario")
    p.add_argument("--capacities", required=True)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--msv-bar", default=None,
                   help="constant medium value or JSON file mapping storages")
    p.add_argument("--perturb", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_dispatch_myopic)

    p = sub.add_parser("metrics", help="recompute and diff-check stored metrics")
    p.add_argument("run_dir")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("validate-kkt", help="re-solve a run and check KKT residuals")
    p.add_argument("run_dir")
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=_cmd_validate_kkt)

    p = sub.add_parser("sweep", help="fan out a scenario matrix")
    p.add_argument("matrix")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _SOLVER_ERRORS as exc:
        _err(f"solver failure: {exc}")
        return EXIT_SOLVER
    except _VALIDATION_ERRORS as exc:
        _err(str(exc))
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
