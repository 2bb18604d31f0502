"""
Hyperparameter search over the network search space.

This module provides the per-family search space, log-scale sampling,
Bayesian optimization with a Gaussian-process surrogate and expected
improvement, a random-search baseline, and the validation-RMSE objective
used by the benchmark.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy.stats import norm
from sklearn.exceptions import ConvergenceWarning
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import ConstantKernel, Matern

from . import arima, hybrid, strategy
from .arima import ArimaConfig, ArimaModel
from .exceptions import ForecastingError, HpoError
from .metrics import rmse
from .neural import NetworkSpec
from .strategy import Mode
from .timeseries import SeriesLike, as_series
from .utils import clamp, run_parallel

logger = logging.getLogger(__name__)

Objective = Callable[[NetworkSpec, int], float]
RngLike = Union[None, int, np.random.Generator]

N_INITIAL = 4
N_CANDIDATES = 2048
GP_NOISE = 1e-6


@dataclass(frozen=True)
class SearchSpace:
    """
    Search domains for one network family.

    Attributes:
        family: MLP, LSTM or NBEATS
        hidden_units: Log-scale integer range
        learning_rate: Log-scale range
        activations: Choices for the MLP hidden layer
        layer_choices: Choices for N-BEATS layers per block
        base: Fixed fields (input width 2, 500 iterations, 4 generic blocks)
    """

    family: str
    hidden_units: tuple[int, int] = (2, 100)
    learning_rate: tuple[float, float] = (1e-4, 1e-1)
    activations: tuple[str, ...] = ("tanh", "relu")
    layer_choices: tuple[int, ...] = (1, 2, 3, 4)
    base: NetworkSpec = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        base = self.base if self.base is not None else NetworkSpec(family=self.family)
        object.__setattr__(self, 'base', replace(base, family=self.family))

    @property
    def categorical(self) -> list[tuple[str, tuple]]:
        """Categorical dimensions that apply to this family."""
        dims: list[tuple[str, tuple]] = []
        if self.family == "MLP":
            dims.append(("activation", self.activations))
        if self.family == "NBEATS":
            dims.append(("n_hidden_layers", self.layer_choices))
        return dims

    def encode(self, spec: NetworkSpec) -> NDArray[np.float64]:
        """
        Surrogate coordinates: log-normalized numerics in [0, 1], then one-hot categoricals.
        """
        lo_h, hi_h = self.hidden_units
        lo_lr, hi_lr = self.learning_rate
        coords = [
            (math.log(spec.hidden_units) - math.log(lo_h)) / (math.log(hi_h) - math.log(lo_h)),
            (math.log(spec.learning_rate) - math.log(lo_lr)) / (math.log(hi_lr) - math.log(lo_lr)),
        ]
        for name, choices in self.categorical:
            value = getattr(spec, name)
            coords.extend(1.0 if value == choice else 0.0 for choice in choices)
        return np.array(coords)


def sample(space: SearchSpace, rng: np.random.Generator) -> NetworkSpec:
    """
    Draw one configuration.

    Log-scale fields are exp(uniform(ln lo, ln hi)); hidden units are then
    rounded and clamped. Categoricals are uniform.
    """
    lo_h, hi_h = space.hidden_units
    hidden = math.exp(rng.uniform(math.log(lo_h), math.log(hi_h)))
    hidden_units = int(clamp(round(hidden), lo_h, hi_h))
    lo_lr, hi_lr = space.learning_rate
    learning_rate = float(math.exp(rng.uniform(math.log(lo_lr), math.log(hi_lr))))
    changes: dict = {"hidden_units": hidden_units, "learning_rate": learning_rate}
    for name, choices in space.categorical:
        changes[name] = choices[int(rng.integers(len(choices)))]
    return replace(space.base, **changes)


@dataclass(frozen=True)
class TrialRecord:
    """
    One evaluated configuration.

    Attributes:
        config: Sampled network spec
        seeds: Seeds the objective was run with
        per_seed_rmse: Validation RMSE per seed (+inf on failure)
        mean_rmse: Arithmetic mean of ``per_seed_rmse``
        wall_time: Seconds spent on the trial
    """

    config: NetworkSpec
    seeds: tuple[int, ...]
    per_seed_rmse: tuple[float, ...]
    mean_rmse: float
    wall_time: float = 0.0


def _run_seed(job: tuple[Objective, NetworkSpec, int]) -> float:
    objective, config, seed = job
    try:
        value = float(objective(config, seed))
    except (ForecastingError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.debug("trial failed for seed %d: %s", seed, exc)
        return math.inf
    return value if math.isfinite(value) else math.inf


def evaluate(
    objective: Objective,
    config: NetworkSpec,
    seeds: Sequence[int],
    n_jobs: int = 1,
) -> TrialRecord:
    """Run the objective for every seed; failures count as +inf."""
    started = time.perf_counter()
    scores = run_parallel(_run_seed, [(objective, config, int(s)) for s in seeds], n_jobs)
    mean = float(np.mean(scores)) if all(math.isfinite(s) for s in scores) else math.inf
    return TrialRecord(config, tuple(int(s) for s in seeds), tuple(scores), mean,
                       time.perf_counter() - started)


def _as_rng(rng: RngLike) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _draw_seeds(rng: np.random.Generator, n_seeds: int) -> tuple[int, ...]:
    return tuple(int(s) for s in rng.integers(0, 2 ** 31 - 1, size=n_seeds))


def _best(history: Sequence[TrialRecord]) -> NetworkSpec:
    finite = [t for t in history if math.isfinite(t.mean_rmse)]
    if not finite:
        raise HpoError(f"all {len(history)} trials failed")
    return min(finite, key=lambda t: t.mean_rmse).config


def expected_improvement(
    mu: NDArray[np.float64],
    sigma: NDArray[np.float64],
    best: float,
    xi: float = 0.0,
) -> NDArray[np.float64]:
    """EI of a minimization problem."""
    improvement = best - mu - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = improvement / sigma
        ei = improvement * norm.cdf(z) + sigma * norm.pdf(z)
    return np.where(sigma > 0.0, ei, 0.0)


def _propose(
    history: Sequence[TrialRecord],
    space: SearchSpace,
    rng: np.random.Generator,
    n_candidates: int,
) -> NetworkSpec:
    X = np.array([space.encode(t.config) for t in history])
    y = np.array([t.mean_rmse for t in history])
    finite = np.isfinite(y)
    if finite.sum() == 0:
        return sample(space, rng)
    lo, hi = y[finite].min(), y[finite].max()
    # failed trials sit above every finite one
    y = np.where(finite, y, hi + max(hi - lo, 1.0))

    alpha = np.full(y.size, GP_NOISE)
    keys = [tuple(row) for row in X]
    for i, key in enumerate(keys):
        same = [y[j] for j, other in enumerate(keys) if other == key]
        if len(same) > 1:
            alpha[i] += float(np.var(same))

    kernel = ConstantKernel(1.0, (1e-3, 1e3)) * Matern(
        length_scale=np.ones(X.shape[1]), length_scale_bounds=(1e-2, 1e2), nu=2.5
    )
    gp = GaussianProcessRegressor(kernel=kernel, alpha=alpha, normalize_y=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        gp.fit(X, y)

    candidates = [sample(space, rng) for _ in range(n_candidates)]
    mu, sigma = gp.predict(np.array([space.encode(c) for c in candidates]), return_std=True)
    ei = expected_improvement(mu, sigma, float(y.min()))
    return candidates[int(np.argmax(ei))]


def optimize(
    objective: Objective,
    space: SearchSpace,
    n_trials: int = 10,
    n_seeds: int = 5,
    rng: RngLike = None,
    n_initial: int = N_INITIAL,
    n_candidates: int = N_CANDIDATES,
    n_jobs: int = 1,
) -> tuple[NetworkSpec, list[TrialRecord]]:
    """
    Bayesian optimization of mean validation RMSE.

    The first ``n_initial`` trials are random; each later trial maximizes
    expected improvement under a Matern-5/2 Gaussian process over
    ``n_candidates`` random configurations. All trials share one seed set.

    Args:
        objective: (config, seed) -> validation RMSE
        space: Search space
        n_trials: Total number of trials
        n_seeds: Seeds per trial
        rng: Generator or seed
        n_jobs: Workers for the seeds of a trial

    Returns:
        Tuple of (best config, trial history)

    Raises:
        HpoError: every trial failed
    """
    rng = _as_rng(rng)
    seeds = _draw_seeds(rng, n_seeds)
    history: list[TrialRecord] = []
    for trial in range(n_trials):
        if trial < n_initial:
            config = sample(space, rng)
        else:
            config = _propose(history, space, rng, n_candidates)
        record = evaluate(objective, config, seeds, n_jobs)
        history.append(record)
        logger.info(
            "trial %d/%d %s hidden=%d lr=%.2e -> mean RMSE %.6g",
            trial + 1, n_trials, space.family, config.hidden_units,
            config.learning_rate, record.mean_rmse,
        )
    return _best(history), history


def random_search(
    objective: Objective,
    space: SearchSpace,
    n_trials: int = 10,
    n_seeds: int = 5,
    rng: RngLike = None,
    n_jobs: int = 1,
) -> tuple[NetworkSpec, list[TrialRecord]]:
    """Baseline with the same bookkeeping as :func:`optimize`, all trials random."""
    rng = _as_rng(rng)
    seeds = _draw_seeds(rng, n_seeds)
    history = [evaluate(objective, sample(space, rng), seeds, n_jobs) for _ in range(n_trials)]
    return _best(history), history


Forecaster = Callable[[NetworkSpec, int], Sequence[float]]


@dataclass
class ValidationObjective:
    """
    Validation RMSE of a full pipeline for one (config, seed).

    In hybrid mode the ARIMA model of the training window is fitted once
    and shared by every trial; otherwise the network is trained on the
    series itself. A ``forecaster`` replaces the pipeline entirely.
    """

    family: str
    mode: Mode
    train: SeriesLike
    val: SeriesLike
    d: int = 2
    H: Optional[int] = None
    hybrid: bool = True
    arima_config: ArimaConfig = field(default_factory=ArimaConfig)
    forecaster: Optional[Forecaster] = None
    linear: Optional[ArimaModel] = None

    def __post_init__(self):
        self.train = as_series(self.train)
        self.val = as_series(self.val)
        if self.H is None:
            self.H = len(self.val)
        if self.forecaster is None and self.hybrid and self.linear is None:
            self.linear = arima.fit_configured(self.train, self.arima_config)

    def __call__(self, config: NetworkSpec, seed: int) -> float:
        actual = self.val.values
        if self.forecaster is not None:
            predicted = np.asarray(self.forecaster(config, seed), dtype=np.float64)
        elif self.hybrid:
            model = hybrid.attach_nonlinear(self.linear, config, self.mode, self.d, self.H, seed)
            predicted = hybrid.forecast_hybrid(model, self.H)
        else:
            model = strategy.fit_strategy(self.train, self.mode, self.d, self.H, config, seed)
            predicted = strategy.forecast(model, self.train, self.H)
        return rmse(actual, predicted[:actual.size])


def validation_objective(
    family: str,
    mode: Mode,
    train: SeriesLike,
    val: SeriesLike,
    d: int = 2,
    H: Optional[int] = None,
    *,
    hybrid: bool = True,
    arima_config: Optional[ArimaConfig] = None,
    forecaster: Optional[Forecaster] = None,
) -> ValidationObjective:
    """
    Objective mapping (config, seed) to validation RMSE.

    Args:
        family: Network family being tuned
        mode: Strategy of the residual (or single) model
        train: Training window
        val: Validation window that follows it
        d: Lag order
        H: Horizon of direct and mimo models (defaults to the validation length)
        hybrid: Tune the residual model of a hybrid rather than a single model
        arima_config: Linear-stage settings in hybrid mode
        forecaster: Stub pipeline returning the validation forecast

    Example:
        >>> objective = validation_objective("MLP", "recursive", train, [1.0, 1.0],
        ...                                  forecaster=lambda config, seed: [0.0, 0.0])
        >>> objective(NetworkSpec(), 0)
        1.0
    """
    return ValidationObjective(
        family, mode, train, val, d, H, hybrid,
        arima_config or ArimaConfig(), forecaster,
    )


def history_frame(history: Sequence[TrialRecord], include_timing: bool = False) -> pd.DataFrame:
    """One row per trial: config fields, per-seed RMSE, mean."""
    rows = []
    for number, trial in enumerate(history, start=1):
        row = {
            "trial": number,
            "family": trial.config.family,
            "hidden_units": trial.config.hidden_units,
            "learning_rate": trial.config.learning_rate,
            "activation": trial.config.activation,
            "n_hidden_layers": trial.config.n_hidden_layers,
        }
        for k, (seed, score) in enumerate(zip(trial.seeds, trial.per_seed_rmse)):
            row[f"seed_{k}"] = seed
            row[f"rmse_{k}"] = score
        row["mean_rmse"] = trial.mean_rmse
        if include_timing:
            row["wall_time"] = trial.wall_time
        rows.append(row)
    return pd.DataFrame(rows)


def write_history_csv(history: Sequence[TrialRecord], path: Union[str, Path]) -> None:
    history_frame(history).to_csv(path, index=False, float_format="%.10g")
