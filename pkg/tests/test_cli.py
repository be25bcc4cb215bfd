import json

import numpy as np
import pandas as pd
import pytest

from app.cli import main
from app.services.lowthrust import DECISION_NAMES


def write_front(path, values):
    pd.DataFrame({f"objective_{j}": values[:, j] for j in range(values.shape[1])}).to_csv(path, index=False)
    return str(path)


@pytest.fixture
def line_front(tmp_path):
    t = np.linspace(0.0, 1.0, 101)
    return np.column_stack([t, np.zeros_like(t)])


class TestMetric:
    def test_self_distance(self, tmp_path, line_front, capsys):
        path = write_front(tmp_path / "front.csv", line_front)
        assert main(["metric", path, path]) == 0
        assert capsys.readouterr().out.strip() == "0.000000"

    def test_shifted_front(self, tmp_path, line_front, capsys):
        reference = write_front(tmp_path / "reference.csv", line_front)
        shifted = write_front(tmp_path / "front.csv", line_front + np.array([0.0, 0.01]))
        assert main(["metric", shifted, reference]) == 0
        assert capsys.readouterr().out.strip() == "0.010000"

    def test_exported_front_against_builtin(self, tmp_path, capsys):
        assert main(["front", "zdt4", "--out", str(tmp_path)]) == 0
        path = capsys.readouterr().out.strip()
        assert main(["metric", path, "zdt4"]) == 0
        assert capsys.readouterr().out.strip() == "0.000000"

    def test_missing_front(self, tmp_path, capsys):
        assert main(["metric", str(tmp_path / "absent.csv"), "zdt4"]) == 2
        assert "not found" in capsys.readouterr().err


class TestRun:
    def test_invalid_problem(self, tmp_path, capsys):
        assert main(["run", "--problem", "rosenbrock", "--out", str(tmp_path)]) == 2
        assert "zdt4" in capsys.readouterr().err

    def test_missing_problem(self, capsys):
        assert main(["run"]) == 2

    def test_space_needs_aerocapture(self, tmp_path):
        assert main(["run", "--problem", "zdt4", "--space", "extended", "--out", str(tmp_path)]) == 2

    def test_small_benchmark_run(self, tmp_path, capsys):
        out = tmp_path / "zdt4"
        code = main([
            "run", "--problem", "zdt4", "--budget", "300", "--agents", "5", "--nf", "3",
            "--repeats", "2", "--seed", "7", "--out", str(out),
        ])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert [r["seed"] for r in summary["repeats"]] == [7, 8]
        assert all(r["evaluations"] <= 300 for r in summary["repeats"])
        for name in ("archive_0.csv", "archive_1.json", "generations_0.csv", "partition_1.json", "summary.json"):
            assert (out / name).exists()
        assert (out / "archive_0.csv").read_text().startswith("# seed=7")

    def test_repeated_runs_write_identical_archives(self, tmp_path, capsys):
        args = ["run", "--problem", "zdt4", "--budget", "200", "--agents", "4", "--nf", "2", "--seed", "3"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        # the header carries the manifest hash, which includes the output directory
        first = (tmp_path / "a" / "archive_0.csv").read_text().splitlines()[1:]
        second = (tmp_path / "b" / "archive_0.csv").read_text().splitlines()[1:]
        assert first == second

    def test_manifest_file(self, tmp_path, capsys):
        manifest = {"problem": "deb", "engine": {"population_size": 4, "n_f": 2, "max_evaluations": 150}, "output_dir": str(tmp_path / "deb")}
        (tmp_path / "run.json").write_text(json.dumps(manifest))
        assert main(["run", "--config", str(tmp_path / "run.json")]) == 0
        assert json.loads(capsys.readouterr().out)["problem"] == "deb"


class TestDiagnose:
    def test_out_of_bounds_design(self, tmp_path, capsys):
        path = tmp_path / "design.csv"
        pd.DataFrame([[1, 4000, 5000, 30, 10, 0.1, 0.05, -0.1, 0.5]], columns=list(DECISION_NAMES)).to_csv(path, index=False)
        assert main(["diagnose-lowthrust", str(path), "--out", str(tmp_path)]) == 3
        assert "tf" in capsys.readouterr().err

    def test_missing_row(self, tmp_path):
        path = tmp_path / "design.csv"
        pd.DataFrame([[1, 4000, 800, 30, 10, 0.1, 0.05, -0.1, 0.5]], columns=list(DECISION_NAMES)).to_csv(path, index=False)
        assert main(["diagnose-lowthrust", str(path), "--row", "4", "--out", str(tmp_path)]) == 2
