"""
Tests for settings, config parsing and result writers
"""

import json

import numpy as np
import pytest

from config import Settings, settings
from api.models import (
    ConfigError,
    ExperimentConfig,
    SeedConfig,
    load_experiment_config,
    parse_experiment_config,
)
from utils.parsing.json import ConfigParseError, parse_config_text
from utils.reporting import build_manifest, write_csv, write_json, write_run


def test_settings_defaults():
    fresh = Settings()
    assert fresh.EXACT_ASSIGNMENT_LIMIT == 512
    assert fresh.TV_MAX_BINS == 64
    assert fresh.BLOWUP_BOUND == 1e6
    assert settings.worker_count >= 1


def test_settings_read_environment(monkeypatch):
    monkeypatch.setenv("WORKERS", "3")
    monkeypatch.setenv("FLOW_PASS_FRACTION", "0.9")
    fresh = Settings()
    assert fresh.worker_count == 3
    assert fresh.FLOW_PASS_FRACTION == 0.9


class TestParsing:
    def test_plain_json(self):
        assert parse_config_text('{"experiment": "asf"}') == {"experiment": "asf"}

    def test_json5_comments_and_trailing_commas(self):
        text = """
        {
          // hand-written
          experiment: 'mixing',
          numerics: {dt: 0.01,},
        }
        """
        assert parse_config_text(text) == {"experiment": "mixing", "numerics": {"dt": 0.01}}

    def test_garbage_is_rejected(self):
        with pytest.raises(ConfigParseError):
            parse_config_text("{experiment: ")

    def test_top_level_must_be_object(self):
        with pytest.raises(ConfigParseError):
            parse_config_text("[1, 2]")


class TestExperimentConfig:
    def test_defaults(self):
        config = parse_experiment_config({"experiment": "oracle-validate"})
        assert config.model.kind == "example1d"
        assert config.model.is_unit_example
        assert config.numerics.step_scheme().dt == 0.01
        assert config.seeds == SeedConfig(master=1, driving=2, wiener=3)

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError) as info:
            parse_experiment_config({"experiment": "spectral-gap"})
        assert info.value.field == "experiment"

    def test_unknown_field_is_named(self):
        with pytest.raises(ConfigError) as info:
            parse_experiment_config({"experiment": "asf", "numerics": {"dt": 0.01, "steps": 3}})
        assert info.value.field == "numerics.steps"

    def test_horizon_off_the_grid(self):
        data = {"experiment": "lyapunov", "numerics": {"dt": 0.03, "horizons": {"T": 0.1}}}
        with pytest.raises(ConfigError) as info:
            parse_experiment_config(data)
        assert info.value.field == "numerics.dt"
        assert "numerics.horizons.T" in info.value.message

    def test_horizon_lists_are_checked(self):
        data = {"experiment": "evo-pullback", "numerics": {"dt": 0.1, "horizons": {"t_grid": [0.0, 0.25]}}}
        with pytest.raises(ConfigError):
            parse_experiment_config(data)

    def test_driving_and_wiener_seeds_differ(self):
        with pytest.raises(ConfigError):
            parse_experiment_config({"experiment": "asf", "seeds": {"driving": 4, "wiener": 4}})

    def test_seed_override(self):
        config = parse_experiment_config({"experiment": "asf", "seeds": {"master": 9}}, seed_override=40)
        assert (config.seeds.master, config.seeds.driving, config.seeds.wiener) == (40, 41, 42)

    def test_manifest_is_unwrapped(self, tmp_path):
        config = parse_experiment_config({"experiment": "mixing", "params": {"x": [2.0]}})
        manifest = build_manifest(config.model_dump(mode="json"), 1.5, 2, True)
        path = tmp_path / "manifest.json"
        write_json(manifest, path)
        again = load_experiment_config(str(path))
        assert again == config
        assert again.param("x", None) == [2.0]

    def test_shipped_configs_load(self):
        from pathlib import Path

        paths = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.json"))
        assert paths
        for path in paths:
            assert isinstance(load_experiment_config(str(path)), ExperimentConfig)

    def test_build_ns_model(self):
        model, spec = parse_experiment_config(
            {"experiment": "ns-energy", "model": {"kind": "ns2d", "n": 8, "driving_modes": 2}}
        ).model.build()
        assert spec.dim == model.driving_dim
        assert model.dim > spec.dim


class TestWriters:
    def test_csv_keeps_column_order(self, tmp_path):
        path = write_csv(
            [{"t": 0.0, "value": np.float64(1.5)}, {"t": 1.0, "value": np.inf}],
            tmp_path / "out.csv",
            ["t", "value"],
        )
        lines = path.read_text().splitlines()
        assert lines == ["t,value", "0.0,1.5", "1.0,inf"]

    def test_json_is_plain(self, tmp_path):
        path = write_json({"a": np.arange(3), "b": np.bool_(True), "c": float("nan")}, tmp_path / "x.json")
        assert json.loads(path.read_text()) == {"a": [0, 1, 2], "b": True, "c": "nan"}

    def test_manifest_fields(self):
        manifest = build_manifest({"seeds": {"master": 1}}, 2.0, 4, False)
        assert manifest["seeds"] == {"master": 1}
        assert manifest["workers"] == 4
        assert manifest["passed"] is False
        assert "numpy" in manifest["versions"]
        assert isinstance(manifest["git_describe"], str)

    def test_run_artifacts(self, tmp_path):
        out = write_run(
            tmp_path / "run",
            [{"t": 0.0}],
            {"passed": True},
            {"seeds": {}},
            artifacts={"driving.json": {"seed": 2}, "ensemble.csv": [{"index": 0, "x0": 1.5}]},
        )
        assert sorted(p.name for p in out.iterdir()) == [
            "driving.json", "ensemble.csv", "manifest.json", "report.json", "results.csv"
        ]
        assert (out / "ensemble.csv").read_text().splitlines() == ["index,x0", "0,1.5"]
        with pytest.raises(ValueError):
            write_run(tmp_path / "bad", [], {}, {}, artifacts={"notes.txt": {}})


class TestAccessors:
    def test_output_dir_falls_back_to_settings(self, monkeypatch, tmp_path):
        from api.routes import output_dir_for

        monkeypatch.setattr(settings, "OUTPUT_DIR", str(tmp_path))
        config = parse_experiment_config({"experiment": "asf"})
        assert output_dir_for(config) == tmp_path / "asf"
        assert output_dir_for(config, tmp_path / "explicit") == tmp_path / "explicit"

    def test_blowup_bound_is_read_at_call_time(self, monkeypatch):
        from sde.integrator import DivergenceError, check_bounded

        x = np.array([[0.0], [20.0]])
        check_bounded(x, 1, 0.01, 0)
        monkeypatch.setattr(settings, "BLOWUP_BOUND", 10.0)
        with pytest.raises(DivergenceError) as info:
            check_bounded(x, 1, 0.01, 5)
        assert info.value.index == 6

    def test_logging_level_comes_from_settings(self, monkeypatch):
        import logging

        from main import configure_logging

        monkeypatch.setattr(settings, "LOG_LEVEL", "WARNING")
        root = logging.getLogger()
        saved = (root.level, list(root.handlers))
        root.handlers.clear()
        try:
            configure_logging()
            assert root.level == logging.WARNING
        finally:
            root.handlers[:] = saved[1]
            root.setLevel(saved[0])
