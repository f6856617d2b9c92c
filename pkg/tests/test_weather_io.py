import json

import numpy as np
import pandas as pd
import pytest

import gridprice as gp
from gridprice import runio
from gridprice.scenario import (default_technology_block, parse_scenario,
                                serialize)
from gridprice.system import TECHNOLOGY_DATA
from gridprice.weather import WeatherFormatError, load_weather, synth_weather


class TestSynthWeather:
    def test_deterministic_for_seed(self, tmp_path):
        a = synth_weather(1, 1)
        b = synth_weather(1, 1)
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        gp.write_weather(a, pa)
        gp.write_weather(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_different_seeds_differ(self):
        a = synth_weather(1, 1)
        b = synth_weather(2, 1)
        assert not np.allclose(a["onwind"], b["onwind"])

    def test_long_run_means_near_targets(self):
        table = synth_weather(1, 1)
        assert abs(table["onwind"].mean() - 0.21) <= 0.01
        assert abs(table["solar"].mean() - 0.12) <= 0.01

    def test_solar_zero_at_midnight(self):
        table = synth_weather(3, 1)
        stamps = pd.to_datetime(table["timestamp"], utc=True)
        midnight = stamps.dt.hour == 0
        assert (table.loc[midnight, "solar"] == 0.0).all()

    def test_values_in_unit_interval(self):
        table = synth_weather(5, 1)
        for col in ("onwind", "solar"):
            assert table[col].between(0.0, 1.0).all()

    def test_years_validated(self):
        with pytest.raises(ValueError):
            synth_weather(1, 0)


class TestLoadWeather:
    def grid(self, n=24, start="2001-01-01"):
        return gp.TimeGrid(pd.date_range(start, periods=n, freq="h"), np.ones(n))

    def write(self, tmp_path, rows, header="timestamp,onwind,solar"):
        path = tmp_path / "wx.csv"
        path.write_text(header + "\n" + "\n".join(rows) + "\n")
        return path

    def stamps(self, n, start="2001-01-01"):
        return [t.strftime("%Y-%m-%dT%H:%M:%SZ")
                for t in pd.date_range(start, periods=n, freq="h")]

    def test_aligned_day(self, tmp_path):
        rows = [f"{t},0.5,0.1" for t in self.stamps(24)]
        loaded = load_weather(self.write(tmp_path, rows), self.grid())
        assert set(loaded.series) == {"onwind", "solar"}
        assert len(loaded.series["onwind"]) == 24
        assert loaded.clipped == 0

    def test_out_of_range_clipped_with_count(self, tmp_path):
        stamps = self.stamps(24)
        rows = [f"{t},0.5,0.1" for t in stamps[:-1]] + [f"{stamps[-1]},1.03,0.1"]
        loaded = load_weather(self.write(tmp_path, rows), self.grid())
        assert loaded.clipped == 1
        assert loaded.series["onwind"][-1] == 1.0

    def test_missing_hour_names_timestamp(self, tmp_path):
        stamps = self.stamps(24)
        rows = [f"{t},0.5,0.1" for t in stamps if "T05" not in t]
        with pytest.raises(WeatherFormatError, match="non-uniform|missing"):
            load_weather(self.write(tmp_path, rows), self.grid())

    def test_window_outside_file(self, tmp_path):
        rows = [f"{t},0.5,0.1" for t in self.stamps(24)]
        with pytest.raises(WeatherFormatError, match="missing timestamps"):
            load_weather(self.write(tmp_path, rows), self.grid(start="2002-01-01"))

    def test_malformed_row_reports_position(self, tmp_path):
        stamps = self.stamps(3)
        rows = [f"{stamps[0]},0.5,0.1", f"{stamps[1]},oops,0.1",
                f"{stamps[2]},0.5,0.1"]
        with pytest.raises(WeatherFormatError, match="row 2"):
            load_weather(self.write(tmp_path, rows), self.grid(n=3))


SCENARIO_MINIMAL = {
    "name": "desk",
    "time": {"start": "2001-01-01", "end": "2001-01-08"},
    "demand": {"variant": "piecewise_linear"},
    "experiment": {"kind": "lt"},
}


class TestScenario:
    def test_defaults_filled(self):
        s = parse_scenario(SCENARIO_MINIMAL)
        assert s.doc["technologies"] == default_technology_block()
        assert s.doc["perturbation"] == 0.0
        assert s.doc["weather"] == {"source": "synthetic", "seed": 1}
        assert s.doc["demand"]["parameters"]["segments"][0] == [8000.0, 80.0, 95.0]

    def test_roundtrip_identity(self):
        s = parse_scenario(SCENARIO_MINIMAL)
        again = parse_scenario(json.loads(serialize(s)))
        assert again.doc == s.doc
        assert again.content_hash() == s.content_hash()

    def test_unknown_keys_rejected(self):
        bad = dict(SCENARIO_MINIMAL, typo_key=1)
        with pytest.raises(gp.ScenarioError):
            parse_scenario(bad)

    def test_nested_unknown_keys_rejected(self):
        bad = json.loads(json.dumps(SCENARIO_MINIMAL))
        bad["time"]["zone"] = "UTC"
        with pytest.raises(gp.ScenarioError):
            parse_scenario(bad)

    def test_default_technology_block_matches_assumptions_table(self):
        block = default_technology_block()
        assert block["wind"]["investment_eur_per_kw"] == \
            TECHNOLOGY_DATA["onshore_wind"]["investment"]
        assert block["battery"]["power"]["investment_eur_per_kw"] == 169.3
        assert block["battery"]["power"]["fom_pct_per_a"] == 0.34
        assert block["battery"]["efficiency_pct"] == 96.0
        assert block["battery"]["energy"]["investment_eur_per_kwh"] == 150.3
        assert block["hydrogen"]["charge"]["investment_eur_per_kw"] == 1500.0
        assert block["hydrogen"]["charge"]["efficiency_pct"] == 62.2
        assert block["hydrogen"]["discharge"]["investment_eur_per_kw"] == 1164.0
        assert block["hydrogen"]["discharge"]["efficiency_pct"] == 50.0
        assert block["hydrogen"]["energy"]["investment_eur_per_kwh"] == 0.15
        assert block["hydrogen"]["energy"]["lifetime_a"] == 100

    def test_system_config_builds(self):
        s = parse_scenario(SCENARIO_MINIMAL)
        cfg = s.system_config()
        assert len(cfg.grid) == 168
        assert {g.name for g in cfg.generators} == {"wind", "solar"}
        assert {st.name for st in cfg.storages} == {"battery", "hydrogen"}

    def test_csv_weather_source(self, tmp_path):
        table = synth_weather(9, 1)
        gp.write_weather(table, tmp_path / "wx.csv")
        doc = json.loads(json.dumps(SCENARIO_MINIMAL))
        doc["weather"] = {"source": "csv", "path": "wx.csv"}
        cfg = parse_scenario(doc).system_config(base_dir=tmp_path)
        assert len(cfg.grid) == 168

    def test_custom_year_split_overlap_rejected(self):
        doc = json.loads(json.dumps(SCENARIO_MINIMAL))
        doc["time"]["year_split"] = {"mode": "custom", "lt_years": [2001],
                                     "st_years": [2001]}
        with pytest.raises(gp.ScenarioError):
            parse_scenario(doc)


@pytest.fixture(scope="module")
def run_and_scenario():
    scenario = parse_scenario(SCENARIO_MINIMAL)
    config = scenario.system_config()
    run = gp.run_lt(config, options=scenario.solve_options())
    return run, scenario


class TestExportImport:
    def test_roundtrip_byte_identical(self, tmp_path, run_and_scenario):
        run, scenario = run_and_scenario
        first = tmp_path / "first"
        second = tmp_path / "second"
        runio.export_run(run, first, scenario)
        exported = runio.import_run(first)
        runio.export_imported(exported, second)
        for name in ("prices.csv", "msv.csv", "dispatch.csv", "capacities.json",
                     "metrics.json", "kkt.json", "manifest.json", "scenario.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_artifact_shapes(self, tmp_path, run_and_scenario):
        run, scenario = run_and_scenario
        out = tmp_path / "run"
        runio.export_run(run, out, scenario)
        prices = pd.read_csv(out / "prices.csv")
        assert list(prices.columns) == ["timestamp", "value"]
        assert len(prices) == len(run.config.grid)
        msv = pd.read_csv(out / "msv.csv")
        assert list(msv.columns) == ["timestamp", "battery", "hydrogen"]

    def test_single_storage_msv_is_timestamp_value(self, tmp_path):
        scenario = parse_scenario(SCENARIO_MINIMAL)
        config = scenario.system_config()
        from dataclasses import replace

        config = replace(config, storages=(gp.default_hydrogen(),))
        run = gp.run_lt(config)
        out = tmp_path / "run"
        runio.export_run(run, out, scenario)
        msv = pd.read_csv(out / "msv.csv")
        assert list(msv.columns) == ["timestamp", "value"]

    def test_manifest_hash_tracks_scenario(self, tmp_path, run_and_scenario):
        run, scenario = run_and_scenario
        out = tmp_path / "run"
        manifest = runio.export_run(run, out, scenario)
        assert manifest["scenario_hash"] == scenario.content_hash()
        changed = json.loads(serialize(scenario))
        changed["perturbation"] = 0.05
        other = parse_scenario(changed)
        assert other.content_hash() != scenario.content_hash()

    def test_metrics_recompute_bit_identical(self, tmp_path, run_and_scenario):
        run, scenario = run_and_scenario
        out = tmp_path / "run"
        runio.export_run(run, out, scenario)
        stored, recomputed = runio.recompute_metrics(out)
        assert stored == recomputed

    def test_inelastic_storage_free_run_round_trips(self, tmp_path):
        doc = json.loads(json.dumps(SCENARIO_MINIMAL))
        doc["demand"] = {"variant": "perfectly_inelastic",
                         "parameters": {"level": 30.0}}
        doc["technologies"] = {
            "wind": {"kind": "generator", "investment_eur_per_kw": 1095.9,
                     "fom_pct_per_a": 1.22, "lifetime_a": 30,
                     "availability": {"column": "onwind"}},
            "firm": {"kind": "generator", "investment_eur_per_kw": 400.0,
                     "lifetime_a": 25,
                     "marginal_cost_eur_per_mwh": 64.7},
        }
        scenario = parse_scenario(doc)
        run = gp.run_lt(scenario.system_config())
        out = tmp_path / "run"
        runio.export_run(run, out, scenario)
        stored, recomputed = runio.recompute_metrics(out)
        assert stored == recomputed
        assert stored["utility (€/period)"] is None
        assert stored["welfare (€/period)"] is None
