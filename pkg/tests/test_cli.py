import json

import pandas as pd
import pytest

from gridprice.cli import main

DESK_SCENARIO = {
    "name": "desk-lt",
    "time": {"start": "2001-01-01", "end": "2001-01-08"},
    "weather": {"source": "synthetic", "seed": 42},
    "demand": {"variant": "piecewise_linear"},
    "experiment": {"kind": "lt"},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    scenario = dict(DESK_SCENARIO, output_dir=str(root / "lt"))
    path = root / "lt.json"
    path.write_text(json.dumps(scenario))
    assert main(["solve-lt", str(path)]) == 0
    return root, path


class TestSolveLt:
    def test_writes_all_artifacts(self, workspace):
        root, _ = workspace
        for name in ("capacities.json", "prices.csv", "msv.csv", "kkt.json",
                     "metrics.json", "dispatch.csv", "manifest.json",
                     "scenario.json"):
            assert (root / "lt" / name).exists(), name

    def test_prices_row_count(self, workspace):
        root, _ = workspace
        prices = pd.read_csv(root / "lt" / "prices.csv")
        assert len(prices) == 168


class TestSolveSt:
    def test_perturbation_lowers_mean_price(self, workspace):
        root, path = workspace
        caps = str(root / "lt" / "capacities.json")
        scenario = dict(DESK_SCENARIO, name="desk-st",
                        experiment={"kind": "st_perfect"},
                        output_dir=str(root / "st"))
        st_path = root / "st.json"
        st_path.write_text(json.dumps(scenario))
        assert main(["solve-st", str(st_path), "--capacities", caps,
                     "--out", str(root / "st0")]) == 0
        assert main(["solve-st", str(st_path), "--capacities", caps,
                     "--perturb", "0.05", "--out", str(root / "stUp")]) == 0
        base = json.loads((root / "st0" / "metrics.json").read_text())
        up = json.loads((root / "stUp" / "metrics.json").read_text())
        assert up["mean electricity price (€/MWh)"] < \
            base["mean electricity price (€/MWh)"]

    def test_missing_capacity_file_is_validation_error(self, workspace):
        root, path = workspace
        assert main(["solve-st", str(path), "--capacities",
                     str(root / "nope.json")]) == 2


class TestDispatchMyopic:
    def test_runs_with_numeric_msv_bar(self, workspace):
        root, path = workspace
        caps = str(root / "lt" / "capacities.json")
        out = root / "myopic"
        code = main(["dispatch-myopic", str(path), "--capacities", caps,
                     "--horizon", "48", "--stride", "24",
                     "--msv-bar", "90", "--out", str(out)])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["kind"] == "st_myopic"
        assert manifest["provenance"]["policy"]["msv_bar"] == {"hydrogen": 90.0}

    def test_msv_bar_file(self, workspace):
        root, path = workspace
        caps = str(root / "lt" / "capacities.json")
        bar_file = root / "bars.json"
        bar_file.write_text(json.dumps({"hydrogen": 85.0}))
        out = root / "myopic2"
        code = main(["dispatch-myopic", str(path), "--capacities", caps,
                     "--horizon", "48", "--stride", "24",
                     "--msv-bar", str(bar_file), "--out", str(out)])
        assert code == 0


class TestMetricsAndKkt:
    def test_metrics_verifies(self, workspace):
        root, _ = workspace
        assert main(["metrics", str(root / "lt")]) == 0

    def test_metrics_detects_tampering(self, workspace, tmp_path):
        root, _ = workspace
        import shutil

        copy = tmp_path / "tampered"
        shutil.copytree(root / "lt", copy)
        stored = json.loads((copy / "metrics.json").read_text())
        stored["mean electricity price (€/MWh)"] += 1.0
        (copy / "metrics.json").write_text(json.dumps(stored))
        assert main(["metrics", str(copy)]) == 2

    def test_validate_kkt_passes_fresh_run(self, workspace):
        root, _ = workspace
        assert main(["validate-kkt", str(root / "lt"), "--tol", "1e-5"]) == 0


class TestSweep:
    def test_matrix_expansion_and_run(self, tmp_path):
        matrix = {
            "base": {
                "name": "grid",
                "time": {"start": "2001-01-01", "end": "2001-01-04"},
                "weather": {"source": "synthetic", "seed": 42},
                "demand": {"variant": "voll"},
                "experiment": {"kind": "lt"},
            },
            "axes": {"demand.variant": ["voll", "piecewise_linear"],
                     "experiment.kind": ["lt", "st_perfect"]},
            "output_root": str(tmp_path / "runs"),
        }
        path = tmp_path / "matrix.json"
        path.write_text(json.dumps(matrix))
        assert main(["sweep", str(path)]) == 0
        made = sorted(p.name for p in (tmp_path / "runs").iterdir())
        assert len(made) == 5   # four run dirs plus the flat metrics table
        for d in (tmp_path / "runs").iterdir():
            if d.is_dir():
                assert (d / "metrics.json").exists()
        flat = pd.read_csv(tmp_path / "runs" / "metrics.csv")
        assert list(flat.columns) == ["scenario", "metric", "value"]
        assert flat["scenario"].nunique() == 4
        assert (flat["metric"] == "mean electricity price (€/MWh)").sum() == 4


class TestExitCodes:
    def test_schema_error_is_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"name": "x"}))
        assert main(["solve-lt", str(bad)]) == 2

    def test_infeasible_is_3(self, tmp_path):
        scenario = {
            "name": "infeasible",
            "time": {"start": "2001-01-01", "end": "2001-01-02"},
            "weather": {"source": "synthetic", "seed": 42},
            "demand": {"variant": "perfectly_inelastic",
                       "parameters": {"level": 100.0}},
            "experiment": {"kind": "st_perfect"},
            "output_dir": str(tmp_path / "out"),
        }
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(scenario))
        caps_path = tmp_path / "caps.json"
        zeros = {"wind": 0.0, "solar": 0.0, "battery:power": 0.0,
                 "battery:energy": 0.0, "hydrogen:charge": 0.0,
                 "hydrogen:discharge": 0.0, "hydrogen:energy": 0.0}
        caps_path.write_text(json.dumps(zeros))
        assert main(["solve-st", str(path), "--capacities", str(caps_path)]) == 3
