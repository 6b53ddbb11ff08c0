import json
from pathlib import Path

import jsonschema
import numpy as np
import pandas as pd
import pytest

from app.cli import main
from app.services.result_store import CURVE_COLUMNS, POWER_COLUMNS

SCHEMA_PATH = Path(__file__).resolve().parents[1] / "app" / "schemas" / "test_report.schema.json"
REPORT_SCHEMA = json.loads(SCHEMA_PATH.read_text())


def _write_sample(path: Path, values: np.ndarray) -> str:
    pd.DataFrame(values, columns=[f"v{j}" for j in range(values.shape[1])]).to_csv(path, index=False)
    return str(path)


@pytest.fixture
def samples(tmp_path, rng):
    first = _write_sample(tmp_path / "a.csv", rng.standard_normal((40, 10)))
    second = _write_sample(tmp_path / "b.csv", rng.standard_normal((35, 10)))
    return first, second


class TestParamsCommand:
    def test_prints_json(self, capsys):
        assert main(["params", "90", "80", "100"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["regime"] == "i"
        assert payload["ell1"] == pytest.approx(0.329412, abs=1e-6)
        assert payload["sigma2"] == pytest.approx(0.120689, abs=1e-6)

    def test_dimension_too_large(self, capsys):
        assert main(["params", "50", "50", "100"]) == 1
        assert "n1 + n2" in capsys.readouterr().err


class TestTestCommand:
    def test_report_matches_schema(self, samples, capsys):
        code = main(["test", *samples, "--delta1", "0", "--delta2", "0"])
        assert code in (0, 2)
        report = json.loads(capsys.readouterr().out)
        jsonschema.validate(report, REPORT_SCHEMA)
        assert (report["n1"], report["n2"], report["p"]) == (39, 34, 10)
        assert report["decision"] == ("reject" if code == 2 else "accept")

    def test_writes_to_file(self, samples, tmp_path):
        out = tmp_path / "nested" / "report.json"
        code = main(["test", *samples, "--centering", "known-zero-mean", "--out", str(out)])
        assert code in (0, 2)
        report = json.loads(out.read_text())
        assert report["centering"] == "known-zero-mean"
        assert any(w.startswith("estimated_kurtosis") for w in report["warnings"])

    def test_empirical_calibration(self, samples, capsys):
        code = main(["test", *samples, "--calibration", "empirical-quantile", "--reps", "50", "--seed", "3"])
        assert code in (0, 2)
        report = json.loads(capsys.readouterr().out)
        jsonschema.validate(report, REPORT_SCHEMA)
        assert report["seed"] == 3
        assert set(report["empirical_p_values"]) == {"K", "L", "L_tilde"}

    def test_statistic_selection(self, samples, capsys):
        code = main(["test", *samples, "--stats", "L", "--calibration", "empirical-quantile", "--reps", "20"])
        assert code in (0, 2)
        report = json.loads(capsys.readouterr().out)
        jsonschema.validate(report, REPORT_SCHEMA)
        assert report["l_tilde"] is None
        assert set(report["empirical_p_values"]) == {"K", "L"}

    def test_unknown_statistic_is_usage_error(self, samples):
        with pytest.raises(SystemExit) as info:
            main(["test", *samples, "--stats", "T2"])
        assert info.value.code == 1

    def test_high_dimensional_report_matches_schema(self, tmp_path, rng, capsys):
        first = _write_sample(tmp_path / "a.csv", rng.standard_normal((30, 40)))
        second = _write_sample(tmp_path / "b.csv", rng.standard_normal((25, 40)))
        assert main(["test", first, second, "--delta1", "0", "--delta2", "0"]) in (0, 2)
        report = json.loads(capsys.readouterr().out)
        jsonschema.validate(report, REPORT_SCHEMA)
        assert report["spectrum"]["count_one"] > 0

    def test_mismatched_columns(self, tmp_path, rng):
        first = _write_sample(tmp_path / "a.csv", rng.standard_normal((20, 5)))
        second = _write_sample(tmp_path / "b.csv", rng.standard_normal((20, 6)))
        assert main(["test", first, second]) == 1

    def test_non_numeric_file(self, tmp_path, samples):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,abc\n2,3\n")
        assert main(["test", samples[0], str(bad)]) == 1

    def test_single_kurtosis_is_usage_error(self, samples):
        with pytest.raises(SystemExit) as info:
            main(["test", *samples, "--delta1", "0"])
        assert info.value.code == 1

    def test_missing_file(self, tmp_path, samples):
        assert main(["test", samples[0], str(tmp_path / "missing.csv")]) == 1


class TestVerifyCommand:
    def test_default_grid_passes(self, capsys):
        assert main(["verify"]) == 0
        reports = json.loads(capsys.readouterr().out)
        assert all(r["passed"] for r in reports)

    def test_impossible_tolerance(self):
        assert main(["verify", "--tol", "1e-300"]) == 3

    def test_grid_file(self, tmp_path, capsys):
        grid = tmp_path / "grid.csv"
        grid.write_text("n1,n2,p,delta1,delta2\n100,72,90,-1.2,-1.2\n")
        assert main(["verify", "--grid-file", str(grid)]) == 0
        reports = json.loads(capsys.readouterr().out)
        assert {r["target"] for r in reports} == {"mass", "ell1", "ell2", "mu", "sigma2"}
        assert {r["regime"] for r in reports} == {"iii"}


class TestTableCommand:
    def test_csv_is_identical_across_thread_counts(self, capsys):
        args = ["table", "--case", "2", "--reps", "3", "--a-grid", "0,7", "--seed", "5"]
        assert main([*args, "--threads", "1"]) == 0
        serial = capsys.readouterr().out
        assert main([*args, "--threads", "2"]) == 0
        parallel = capsys.readouterr().out
        assert serial == parallel
        lines = serial.splitlines()
        assert lines[0] == ",".join(POWER_COLUMNS)
        assert len(lines) == 1 + 4 * 2 * 3

    def test_power_curve_to_file(self, tmp_path):
        out = tmp_path / "curve.csv"
        assert main(["table", "--case", "1", "--reps", "2", "--a-grid", "0", "--power-curve", "--out", str(out)]) == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == CURVE_COLUMNS
        assert set(frame["statistic"]) == {"K", "L", "L_tilde"}


def test_simulate_prints_cell(capsys):
    code = main(["simulate", "--case", "3", "--n1", "30", "--n2", "30", "--p", "20", "--a", "7", "--reps", "10"])
    assert code == 0
    cell = json.loads(capsys.readouterr().out)
    assert cell["reps"] == 10
    assert cell["scenario"]["sigma2_structure"] == "spike-diag"
    assert set(cell["size_corrected_rate"]) == {"K", "L", "L_tilde"}


def test_simulate_rejects_bad_case(capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--case", "5", "--n1", "30", "--n2", "30", "--p", "20"])
    assert info.value.code == 1
