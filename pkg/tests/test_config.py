import json

import pytest

from app.core.config import Settings, data_file, load_run_config, validate_config
from app.core.errors import ConfigurationError
from app.models.engine_models import EngineConfig, SelectionMode
from app.models.run_models import ProblemId


class TestSettings:
    def test_defaults(self, monkeypatch):
        for name in ("MACS_THREADS", "MACS_OUTPUT_DIR", "MACS_LOGS_DIR", "MACS_LOG_LEVEL"):
            monkeypatch.delenv(name, raising=False)
        settings = Settings.from_env()
        assert settings.threads == 1
        assert settings.output_dir == "runs"
        assert settings.log_level == "INFO"

    def test_environment_overrides(self, monkeypatch, tmp_path):
        monkeypatch.setenv("MACS_THREADS", "4")
        monkeypatch.setenv("MACS_OUTPUT_DIR", str(tmp_path))
        monkeypatch.setenv("MACS_LOG_LEVEL", "debug")
        settings = Settings.from_env()
        assert settings.threads == 4
        assert settings.output_dir == str(tmp_path)
        assert settings.log_level == "DEBUG"

    def test_invalid_thread_count(self, monkeypatch):
        monkeypatch.setenv("MACS_THREADS", "zero")
        with pytest.raises(ConfigurationError):
            Settings.from_env()

    def test_data_directory(self, monkeypatch, tmp_path):
        monkeypatch.setenv("MACS_DATA_DIR", str(tmp_path))
        assert data_file("x.json") == str(tmp_path / "x.json")


class TestRunConfig:
    def test_manifest_with_engine_file(self, tmp_path):
        (tmp_path / "engine.json").write_text(json.dumps({"population_size": 8, "n_f": 4, "selection_mode": "merit"}))
        (tmp_path / "run.json").write_text(json.dumps({"problem": "zdt4", "engine_config": "engine.json", "repeats": 3}))
        manifest = load_run_config(str(tmp_path / "run.json"))
        assert manifest.problem is ProblemId.ZDT4
        assert manifest.repeats == 3
        assert manifest.engine.population_size == 8
        assert manifest.engine.selection_mode is SelectionMode.MERIT

    def test_inline_engine(self, tmp_path):
        (tmp_path / "run.json").write_text(json.dumps({"problem": "deb", "engine": {"max_evaluations": 500}}))
        assert load_run_config(str(tmp_path / "run.json")).engine.max_evaluations == 500

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError) as error:
            load_run_config(str(tmp_path / "absent.json"))
        assert error.value.exit_code == 2

    def test_malformed_json(self, tmp_path):
        (tmp_path / "run.json").write_text("{problem: zdt4")
        with pytest.raises(ConfigurationError):
            load_run_config(str(tmp_path / "run.json"))

    def test_unknown_problem(self, tmp_path):
        (tmp_path / "run.json").write_text(json.dumps({"problem": "rosenbrock"}))
        with pytest.raises(ConfigurationError) as error:
            load_run_config(str(tmp_path / "run.json"))
        assert "problem" in str(error.value)

    def test_out_of_range_engine_value(self):
        with pytest.raises(ConfigurationError) as error:
            validate_config(EngineConfig, {"w0": 0.7, "region_fraction": 2.0}, source="engine")
        assert "region_fraction" in str(error.value)
