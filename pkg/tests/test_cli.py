"""
Unit tests for hybrid_mortality.cli module.

Tests the command-line entry point including:
- Exit codes for invalid usage and malformed inputs
- The synth, fit and forecast round trip for each model kind
- Small benchmark and hyperparameter search runs
"""

import pytest
import numpy as np
import pandas as pd
import yaml
import sys
sys.path.insert(0, '..')

from hybrid_mortality.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main


@pytest.fixture
def surface_file(tmp_path):
    out = tmp_path / "data"
    code = main(["synth", "--seed", "3", "--first-year", "1970", "--last-year", "2019",
                 "--noise", "0.01", "--out", str(out), "--jobs", "1"])
    assert code == EXIT_OK
    return out / "surface.txt"


def fit_then_forecast(surface_file, tmp_path, model, *extra):
    model_dir = tmp_path / "model"
    code = main(["fit", str(surface_file), "--model", model, "--train-end", "2015", "--horizon", "4",
                 "--out", str(model_dir), "--jobs", "1", *extra])
    assert code == EXIT_OK
    forecast_dir = tmp_path / "forecast"
    code = main(["forecast", str(surface_file), str(model_dir / "model.txt"), "--horizon", "4",
                 "--out", str(forecast_dir), "--jobs", "1"])
    assert code == EXIT_OK
    return pd.read_csv(forecast_dir / "forecast.csv")


class TestUsageErrors:
    """Tests for exit code 2."""

    def test_invalid_benchmark_config(self, tmp_path, capsys):
        """Test that a bad configuration writes nothing."""
        config = tmp_path / "bench.yaml"
        config.write_text("datasets: []\nepochs: 3\n")
        out = tmp_path / "results"
        assert main(["benchmark", str(config), "--out", str(out)]) == EXIT_USAGE
        assert not out.exists()
        assert "error:" in capsys.readouterr().err

    def test_unknown_model(self, surface_file, tmp_path):
        """Test that an unknown model name is a usage error."""
        out = tmp_path / "fit"
        code = main(["fit", str(surface_file), "--model", "PLAT", "--age", "40", "--out", str(out)])
        assert code == EXIT_USAGE
        assert not out.exists()

    def test_missing_age(self, surface_file, tmp_path):
        """Test that single-age models need --age."""
        assert main(["fit", str(surface_file), "--model", "ARIMA", "--out", str(tmp_path / "o")]) == EXIT_USAGE

    def test_age_out_of_range(self, surface_file, tmp_path):
        """Test that ages above 100 are rejected."""
        code = main(["fit", str(surface_file), "--model", "ARIMA", "--age", "101", "--out", str(tmp_path / "o")])
        assert code == EXIT_USAGE

    def test_hpo_needs_network_and_train_end(self, surface_file, tmp_path):
        """Test that hpo tunes only network models and needs a training end."""
        out = str(tmp_path / "o")
        assert main(["hpo", str(surface_file), "--model", "ARIMA", "--age", "40",
                     "--train-end", "2009", "--out", out]) == EXIT_USAGE
        assert main(["hpo", str(surface_file), "--model", "MLP-mimo", "--age", "40", "--out", out]) == EXIT_USAGE

    def test_no_command(self):
        """Test that argparse rejects a missing command."""
        with pytest.raises(SystemExit) as excinfo:
            main([])
        assert excinfo.value.code == 2


class TestRuntimeErrors:
    """Tests for exit code 1."""

    def test_malformed_table(self, tmp_path, capsys):
        """Test that parse errors are reported with the file and line."""
        path = tmp_path / "Mx_1x1.txt"
        path.write_text("Australia, Death rates\n\nYear Age Female Male Total\n1950 0 x\n")
        assert main(["ingest", str(path), "--out", str(tmp_path / "o")]) == EXIT_FAILURE
        assert capsys.readouterr().err.startswith(f"{path}:")

    def test_missing_input(self, tmp_path):
        """Test that an unreadable surface is a runtime failure."""
        code = main(["fit", str(tmp_path / "none.txt"), "--model", "ARIMA", "--age", "40",
                     "--out", str(tmp_path / "o")])
        assert code == EXIT_FAILURE


class TestSynthFitForecast:
    """Tests for the model file round trip."""

    def test_synth_outputs(self, surface_file):
        """Test the surface and the echoed run configuration."""
        assert surface_file.exists()
        echoed = yaml.safe_load((surface_file.parent / "run_config.yaml").read_text())
        assert echoed["command"] == "synth"
        assert echoed["synthetic"]["first_year"] == 1970

    def test_arima(self, surface_file, tmp_path):
        """Test a fixed-order ARIMA forecast of the test years."""
        frame = fit_then_forecast(surface_file, tmp_path, "ARIMA", "--age", "40", "--order", "1", "1", "0")
        assert list(frame["year"]) == [2016, 2017, 2018, 2019]
        assert set(frame["age"]) == {40}
        assert np.all(np.isfinite(frame["log_rate"]))

    def test_hybrid(self, surface_file, tmp_path):
        """Test a small hybrid forecast."""
        frame = fit_then_forecast(surface_file, tmp_path, "ARIMA-MLP-recursive", "--age", "60",
                                  "--order", "1", "1", "0", "--hidden-units", "4", "--max-iterations", "20")
        assert len(frame) == 4
        assert np.all(np.isfinite(frame["log_rate"]))

    def test_single_network(self, surface_file, tmp_path):
        """Test a single MIMO network forecast."""
        frame = fit_then_forecast(surface_file, tmp_path, "NBEATS-mimo", "--age", "20",
                                  "--hidden-units", "4", "--max-iterations", "20")
        assert len(frame) == 4

    def test_lee_carter(self, surface_file, tmp_path):
        """Test full-curve Lee-Carter forecasts."""
        frame = fit_then_forecast(surface_file, tmp_path, "LC", "--sex", "female")
        assert len(frame) == 4 * 101
        assert sorted(set(frame["age"])) == list(range(101))
        assert np.all(np.isfinite(frame["log_rate"]))


class TestCommands:
    """Tests for the search and benchmark commands."""

    def test_hpo(self, surface_file, tmp_path):
        """Test the trial history and best configuration files."""
        out = tmp_path / "hpo"
        code = main(["hpo", str(surface_file), "--model", "MLP-recursive", "--age", "40", "--train-end", "2015",
                     "--horizon", "4", "--method", "random", "--trials", "2", "--seeds", "1",
                     "--max-iterations", "10", "--out", str(out), "--jobs", "1"])
        assert code == EXIT_OK
        assert len(pd.read_csv(out / "hpo_history.csv")) == 2
        best = yaml.safe_load((out / "best_config.yaml").read_text())
        assert best["family"] == "MLP"

    def test_benchmark(self, tmp_path):
        """Test a linear-only benchmark and its seed override."""
        config = tmp_path / "bench.yaml"
        config.write_text(yaml.safe_dump({
            "horizon": 4,
            "key_ages": [0, 30, 60, 100],
            "datasets": [{"name": "synth", "train_end": 2015,
                          "synthetic": {"first_year": 1960, "last_year": 2019}}],
            "models": {"names": ["LC", "ARIMA"]},
            "arima": {"order": [1, 1, 0]},
            "hpo": {"enabled": False},
        }))
        out = tmp_path / "results"
        code = main(["benchmark", str(config), "--seed", "11", "--out", str(out), "--jobs", "1"])
        assert code == EXIT_OK
        grid = pd.read_csv(out / "mape.csv", index_col=0)
        assert list(grid.columns) == ["LC", "ARIMA"]
        assert (out / "report.txt").exists()
        echoed = yaml.safe_load((out / "run_config.yaml").read_text())
        assert echoed["benchmark"]["seed"] == 11

    def test_benchmark_failed_dataset(self, tmp_path):
        """Test that a dataset that cannot be split still yields a report and exit code 1."""
        config = tmp_path / "bench.yaml"
        synthetic = {"first_year": 1960, "last_year": 2019}
        config.write_text(yaml.safe_dump({
            "horizon": 4,
            "key_ages": [0, 30, 60, 100],
            "datasets": [{"name": "ok", "train_end": 2015, "synthetic": synthetic},
                         {"name": "short", "train_end": 2017, "synthetic": synthetic}],
            "models": {"names": ["LC", "ARIMA"]},
            "arima": {"order": [1, 1, 0]},
            "hpo": {"enabled": False},
        }))
        out = tmp_path / "results"
        assert main(["benchmark", str(config), "--out", str(out), "--jobs", "1"]) == EXIT_FAILURE
        failures = pd.read_csv(out / "failures.csv")
        assert set(failures["dataset"]) == {"short"}
        assert set(failures["stage"]) == {"prepare"}
        grid = pd.read_csv(out / "mape.csv", index_col=0)
        assert np.all(np.isfinite(grid.loc["ok"]))
        assert (out / "report.txt").exists()

    def test_benchmark_byte_identical(self, tmp_path):
        """Test that two runs with the same seed write identical CSV files."""
        config = tmp_path / "bench.yaml"
        config.write_text(yaml.safe_dump({
            "seed": 5,
            "horizon": 4,
            "eval_seeds": 2,
            "key_ages": [0, 40, 100],
            "datasets": [{"name": "a", "train_end": 2015, "synthetic": {"first_year": 1970, "last_year": 2019}},
                         {"name": "b", "train_end": 2015,
                          "synthetic": {"first_year": 1970, "last_year": 2019, "noise": 0.02}}],
            "models": {"names": ["LC", "ARIMA", "MLP-recursive", "ARIMA-MLP-direct"]},
            "arima": {"order": [1, 1, 0]},
            "hpo": {"enabled": False},
            "network": {"hidden_units": 4, "max_iterations": 20},
        }))
        runs = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            assert main(["benchmark", str(config), "--out", str(out), "--jobs", "2"]) == EXIT_OK
            runs.append(out)
        names = sorted(path.name for path in runs[0].glob("*.csv"))
        assert "mape.csv" in names
        assert names == sorted(path.name for path in runs[1].glob("*.csv"))
        for name in names:
            assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()
