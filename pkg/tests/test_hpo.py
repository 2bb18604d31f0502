"""
Unit tests for hybrid_mortality.hpo module.

Tests the hyperparameter search including:
- Log-scale sampling of the search space
- Expected improvement
- Bayesian optimization and random search bookkeeping
- The validation objective and trial history export
"""

import math

import pytest
import numpy as np
import pandas as pd
import sys
sys.path.insert(0, '..')

from hybrid_mortality.arima import ArimaConfig, ArimaOrder
from hybrid_mortality.exceptions import HpoError, WindowError
from hybrid_mortality.hpo import (
    SearchSpace,
    evaluate,
    expected_improvement,
    history_frame,
    optimize,
    random_search,
    sample,
    validation_objective,
    write_history_csv,
)
from hybrid_mortality.neural import NetworkSpec


def bowl(config, seed):
    """Smooth objective with its minimum at 20 units and learning rate 1e-2."""
    return (math.log(config.hidden_units / 20.0)) ** 2 + (math.log(config.learning_rate / 1e-2)) ** 2


def lr_only(config, seed):
    """Known minimum at learning rate 1e-2, whatever the other fields."""
    return (math.log(config.learning_rate) - math.log(1e-2)) ** 2


class TestSampling:
    """Tests for the search space."""

    def test_ranges(self):
        """Test that 10^5 samples stay inside the domains."""
        rng = np.random.default_rng(0)
        spaces = [SearchSpace(family) for family in ("MLP", "LSTM", "NBEATS")]
        for k in range(100_000):
            spec = sample(spaces[k % 3], rng)
            assert 2 <= spec.hidden_units <= 100
            assert 1e-4 <= spec.learning_rate <= 1e-1
            assert spec.activation in ("tanh", "relu")
            assert spec.n_hidden_layers in (1, 2, 3, 4)
            assert spec.max_iterations == 500 and spec.input_width == 2

    def test_log_uniform(self):
        """Test that half the learning rates fall below the geometric midpoint."""
        rng = np.random.default_rng(1)
        space = SearchSpace("LSTM")
        rates = np.array([sample(space, rng).learning_rate for _ in range(4000)])
        assert 0.45 < np.mean(rates < math.sqrt(1e-4 * 1e-1)) < 0.55

    def test_family_categoricals(self):
        """Test that only N-BEATS varies its depth and only MLP its activation."""
        rng = np.random.default_rng(2)
        nbeats = {sample(SearchSpace("NBEATS"), rng).n_hidden_layers for _ in range(200)}
        assert nbeats == {1, 2, 3, 4}
        lstm = [sample(SearchSpace("LSTM"), rng) for _ in range(50)]
        assert {s.activation for s in lstm} == {"tanh"}
        assert {s.n_hidden_layers for s in lstm} == {1}

    def test_fixed_fields(self):
        """Test that non-searched fields come from the base spec."""
        spec = sample(SearchSpace("NBEATS"), np.random.default_rng(3))
        assert spec.family == "NBEATS"
        assert spec.max_iterations == 500
        assert spec.blocks_per_stack == 4

    def test_encode_unit_box(self):
        """Test that numeric coordinates map the domain ends to 0 and 1."""
        space = SearchSpace("MLP")
        lo = space.encode(NetworkSpec("MLP", hidden_units=2, learning_rate=1e-4))
        hi = space.encode(NetworkSpec("MLP", hidden_units=100, learning_rate=1e-1, activation="relu"))
        np.testing.assert_allclose(lo, [0.0, 0.0, 1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(hi, [1.0, 1.0, 0.0, 1.0], atol=1e-12)


class TestExpectedImprovement:
    """Tests for the acquisition function."""

    def test_zero_sigma(self):
        """Test that a certain prediction has no expected improvement."""
        assert expected_improvement(np.array([0.0]), np.array([0.0]), 1.0)[0] == 0.0

    def test_positive(self):
        """Test that uncertain candidates have positive EI."""
        ei = expected_improvement(np.array([1.0, 2.0]), np.array([0.5, 0.5]), 1.5)
        assert np.all(ei > 0.0)
        assert ei[0] > ei[1]

    def test_grows_with_sigma(self):
        """Test that more uncertainty at the incumbent means more EI."""
        ei = expected_improvement(np.array([1.0, 1.0]), np.array([0.1, 1.0]), 1.0)
        assert ei[1] > ei[0]


class TestOptimize:
    """Tests for the search loops."""

    space = SearchSpace("MLP")

    def test_history_bookkeeping(self):
        """Test trial count, shared seeds and best selection."""
        best, history = optimize(bowl, self.space, n_trials=6, n_seeds=3, rng=0, n_candidates=128)
        assert len(history) == 6
        assert len({t.seeds for t in history}) == 1
        assert len(history[0].seeds) == 3
        assert best == min(history, key=lambda t: t.mean_rmse).config

    def test_deterministic(self):
        """Test that a seeded search is reproducible."""
        a = optimize(bowl, self.space, n_trials=6, n_seeds=1, rng=4, n_candidates=128)[1]
        b = optimize(bowl, self.space, n_trials=6, n_seeds=1, rng=4, n_candidates=128)[1]
        assert [t.config for t in a] == [t.config for t in b]

    def test_beats_random_search(self):
        """Test 50 paired runs of 10 trials: guided search is at least as good in 70% of them."""
        wins = 0
        for seed in range(50):
            _, guided = optimize(lr_only, SearchSpace("LSTM"), n_trials=10, n_seeds=1, rng=seed,
                                 n_candidates=512)
            _, drawn = random_search(lr_only, SearchSpace("LSTM"), n_trials=10, n_seeds=1, rng=seed)
            if min(t.mean_rmse for t in guided) <= min(t.mean_rmse for t in drawn):
                wins += 1
        assert wins >= 35

    def test_recovers_learning_rate(self):
        """Test that the chosen learning rate lands in [0.005, 0.02] in at least 8 of 10 runs."""
        hits = 0
        for seed in range(10):
            best, _ = optimize(lr_only, SearchSpace("LSTM"), n_trials=10, n_seeds=1, rng=100 + seed,
                               n_candidates=512)
            hits += 0.5 * 1e-2 <= best.learning_rate <= 2.0 * 1e-2
        assert hits >= 8

    def test_failed_trials(self):
        """Test that failing seeds score +inf and are never chosen."""
        def flaky(config, seed):
            if config.activation == "relu":
                raise WindowError("too short")
            return bowl(config, seed)

        best, history = optimize(flaky, self.space, n_trials=8, n_seeds=2, rng=1, n_candidates=64)
        assert best.activation == "tanh"
        failed = [t for t in history if t.config.activation == "relu"]
        assert all(t.mean_rmse == math.inf for t in failed)

    def test_all_failed(self):
        """Test that a search with no finite trial raises."""
        def broken(config, seed):
            raise WindowError("too short")

        with pytest.raises(HpoError):
            random_search(broken, self.space, n_trials=3, n_seeds=2, rng=0)

    def test_evaluate_mean(self):
        """Test the per-seed scores and their mean."""
        record = evaluate(lambda config, seed: float(seed), NetworkSpec(), [1, 2, 6])
        assert record.per_seed_rmse == (1.0, 2.0, 6.0)
        assert record.mean_rmse == 3.0


class TestValidationObjective:
    """Tests for the validation-RMSE objective."""

    train = (-4.0 - 0.02 * np.arange(40) + 0.05 * np.sin(np.arange(40))
             + np.random.default_rng(0).normal(0.0, 0.01, 40))

    def test_stub_forecaster(self):
        """Test the objective around a stub pipeline."""
        objective = validation_objective("MLP", "recursive", self.train, [1.0, 1.0],
                                         forecaster=lambda config, seed: [0.0, 0.0])
        assert objective(NetworkSpec(), 0) == 1.0

    def test_single_model(self):
        """Test a finite RMSE for a small single network."""
        objective = validation_objective("MLP", "mimo", self.train, self.train[-5:] - 0.1, hybrid=False)
        score = objective(NetworkSpec("MLP", hidden_units=4, max_iterations=10), 0)
        assert math.isfinite(score) and score > 0.0

    def test_hybrid_shares_linear_model(self):
        """Test that the ARIMA model is fitted once per objective."""
        objective = validation_objective("LSTM", "recursive", self.train, self.train[-5:],
                                         arima_config=ArimaConfig(order=ArimaOrder(1, 1, 0)))
        linear = objective.linear
        objective(NetworkSpec("LSTM", hidden_units=4, max_iterations=5), 0)
        assert objective.linear is linear
        assert objective.H == 5


class TestHistoryExport:
    """Tests for the trial history table."""

    def test_columns(self):
        """Test one row per trial with seed and score columns."""
        _, history = random_search(bowl, SearchSpace("NBEATS"), n_trials=3, n_seeds=2, rng=0)
        frame = history_frame(history)
        assert list(frame["trial"]) == [1, 2, 3]
        for column in ("hidden_units", "learning_rate", "n_hidden_layers", "seed_1", "rmse_1", "mean_rmse"):
            assert column in frame.columns
        assert "wall_time" not in frame.columns

    def test_write_csv(self, tmp_path):
        """Test that the CSV holds the same trials."""
        _, history = random_search(bowl, SearchSpace("MLP"), n_trials=4, n_seeds=1, rng=5)
        path = tmp_path / "history.csv"
        write_history_csv(history, path)
        frame = pd.read_csv(path)
        assert len(frame) == 4
        np.testing.assert_allclose(frame["mean_rmse"], [t.mean_rmse for t in history], rtol=1e-9)
