"""
Benchmark protocol and report tables.

A benchmark evaluates a grid of datasets x models. Each network model is
tuned on the validation window (per dataset or globally), retrained on
training plus validation data for several seeds, and scored by MAPE on
the test years after splining key-age forecasts back to full curves.

Report tables:
- strategy comparison of each hybrid family with win frequencies
- hybrids under their winning strategy, with the best model per dataset
- mean, mean rank and standard deviation of every model
- percentage difference of the reference model against every other
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Literal, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from . import arima, hpo, hybrid, strategy
from .arima import ArimaModel
from .demographic import (
    MortalitySurface,
    extract_series,
    fit_lee_carter,
    forecast_lee_carter,
    interpolate_forecasts,
    read_surface,
    synthesize_surface,
)
from .exceptions import ConfigError, ForecastingError, HpoError, HybridError, MetricError
from .hpo import SearchSpace, TrialRecord, ValidationObjective
from .metrics import mape, percentage_difference
from .neural import FAMILIES, NetworkSpec
from .strategy import MODES
from .timeseries import SplitSpec, TimeSeries, log_transform, split
from .utils import derive_seed, run_parallel

if TYPE_CHECKING:
    from .config import BenchmarkConfig, DatasetSpec

logger = logging.getLogger(__name__)

ARIMA_NAME = "ARIMA"
LEE_CARTER_NAME = "LC"
STRATEGY_LABELS = {"direct": "Direct", "mimo": "MIMO", "recursive": "Recursive"}
FAILURES = (ForecastingError, ValueError, FloatingPointError, np.linalg.LinAlgError)

ModelKind = Literal["arima", "lee_carter", "hybrid", "single"]


# ---------------------------------------------------------------------------
# Model names
# ---------------------------------------------------------------------------

class ModelKey(NamedTuple):
    kind: ModelKind
    family: Optional[str] = None
    mode: Optional[str] = None

    @property
    def is_network(self) -> bool:
        return self.kind in ("hybrid", "single")


def hybrid_name(family: str, mode: str) -> str:
    return f"{ARIMA_NAME}-{family}-{mode}"


def single_name(family: str, mode: str) -> str:
    return f"{family}-{mode}"


def parse_model_name(name: str) -> ModelKey:
    """
    Decode a grid model name.

    Names are ``ARIMA``, ``LC``, ``<family>-<mode>`` for single networks
    and ``ARIMA-<family>-<mode>`` for hybrids.

    Raises:
        ConfigError: unknown name

    Example:
        >>> parse_model_name("ARIMA-LSTM-recursive")
        ModelKey(kind='hybrid', family='LSTM', mode='recursive')
    """
    if name == ARIMA_NAME:
        return ModelKey("arima")
    if name == LEE_CARTER_NAME:
        return ModelKey("lee_carter")
    parts = name.split("-")
    kind: ModelKind = "single"
    if len(parts) == 3 and parts[0] == ARIMA_NAME:
        kind, parts = "hybrid", parts[1:]
    if len(parts) != 2 or parts[0] not in FAMILIES or parts[1] not in MODES:
        raise ConfigError(
            f"unknown model {name!r}; expected ARIMA, LC, <family>-<mode> or ARIMA-<family>-<mode> "
            f"with family in {FAMILIES} and mode in {MODES}"
        )
    return ModelKey(kind, parts[0], parts[1])


def model_names(
    families: Sequence[str] = FAMILIES,
    strategies: Sequence[str] = MODES,
    *,
    arima: bool = True,
    lee_carter: bool = True,
    hybrids: bool = True,
    singles: bool = True,
) -> list[str]:
    """
    Grid columns in report order: LC, ARIMA, single networks, hybrids.

    Example:
        >>> len(model_names())
        20
    """
    names: list[str] = []
    if lee_carter:
        names.append(LEE_CARTER_NAME)
    if arima:
        names.append(ARIMA_NAME)
    if singles:
        names.extend(single_name(f, m) for f in families for m in strategies)
    if hybrids:
        names.extend(hybrid_name(f, m) for f in families for m in strategies)
    return names


# ---------------------------------------------------------------------------
# Dataset preparation
# ---------------------------------------------------------------------------

@dataclass
class PreparedDataset:
    """
    Everything the cells of one dataset need, computed once.

    Series are on the log scale and keyed by age. ``actual`` holds the
    test-year log rates at ``eval_ages``.
    """

    name: str
    sex: str
    key_ages: tuple[int, ...]
    eval_ages: tuple[int, ...]
    train: dict[int, TimeSeries]
    val: dict[int, TimeSeries]
    fit_window: dict[int, TimeSeries]
    actual: NDArray[np.float64]
    fit_surface: MortalitySurface
    linear_train: dict[int, ArimaModel] = field(default_factory=dict)
    linear_fit: dict[int, ArimaModel] = field(default_factory=dict)
    linear_error: Optional[str] = None


def load_dataset(spec: DatasetSpec, master_seed: int = 0) -> MortalitySurface:
    """Read the dataset's file or generate its synthetic surface, restricted to its years."""
    if spec.path is not None:
        return read_surface(spec.path, spec.first_year, spec.last_year)
    synthetic = spec.synthetic
    seed = synthetic.seed if synthetic.seed is not None else derive_seed(master_seed, spec.name, "surface")
    surface = synthesize_surface(synthetic.to_params(), seed)
    if spec.first_year is not None or spec.last_year is not None:
        first = spec.first_year if spec.first_year is not None else int(surface.years[0])
        last = spec.last_year if spec.last_year is not None else int(surface.years[-1])
        surface = surface.select_years(first, last)
    return surface


def prepare_dataset(spec: DatasetSpec, config: BenchmarkConfig) -> PreparedDataset:
    """
    Load, split and fit the linear models of one dataset.

    An ARIMA failure does not abort preparation; it is recorded in
    ``linear_error`` and fails the ARIMA and hybrid cells of the dataset.
    """
    surface = load_dataset(spec, config.seed)
    split_spec = SplitSpec(spec.train_end, config.val_fraction, config.horizon)
    key_ages = tuple(config.key_ages)
    train, val, fit_window = {}, {}, {}
    for age in key_ages:
        series = log_transform(extract_series(surface, age, spec.sex))
        train[age], val[age], _ = split(series, split_spec)
        fit_window[age] = series.window(series.start_index, spec.train_end)

    if config.mape_ages == "key":
        eval_ages = key_ages
    else:
        eval_ages = tuple(range(key_ages[0], key_ages[-1] + 1))
    rows = [surface.year_position(spec.train_end + h) for h in range(1, config.horizon + 1)]
    cols = [surface.age_position(age) for age in eval_ages]
    actual = surface.log_rates(spec.sex)[np.ix_(rows, cols)]

    prepared = PreparedDataset(
        name=spec.name,
        sex=spec.sex,
        key_ages=key_ages,
        eval_ages=eval_ages,
        train=train,
        val=val,
        fit_window=fit_window,
        actual=actual,
        fit_surface=surface.select_years(int(surface.years[0]), spec.train_end),
    )
    arima_cfg = config.arima.to_config()
    try:
        for age in key_ages:
            prepared.linear_train[age] = arima.fit_configured(train[age], arima_cfg)
            prepared.linear_fit[age] = arima.fit_configured(fit_window[age], arima_cfg)
    except FAILURES as exc:
        prepared.linear_error = f"ARIMA at age {age}: {exc}"
        logger.warning("dataset %s: %s", spec.name, prepared.linear_error)
    logger.info("prepared %s (%s): %s, %d key ages", spec.name, spec.sex, surface.summary(), len(key_ages))
    return prepared


def _prepare_job(job: tuple[DatasetSpec, BenchmarkConfig]) -> Union[PreparedDataset, str]:
    """Prepared dataset, or the error message when preparation failed."""
    spec, config = job
    try:
        return prepare_dataset(spec, config)
    except (*FAILURES, OSError) as exc:
        message = f"{type(exc).__name__}: {exc}"
        logger.warning("dataset %s could not be prepared: %s", spec.name, message)
        return message


# ---------------------------------------------------------------------------
# Tuning
# ---------------------------------------------------------------------------

@dataclass
class PooledObjective:
    """Mean validation RMSE over several series (key ages, possibly several datasets)."""

    objectives: list[ValidationObjective]

    def __call__(self, config: NetworkSpec, seed: int) -> float:
        return float(np.mean([objective(config, seed) for objective in self.objectives]))


def pooled_objective(datasets: Sequence[PreparedDataset], key: ModelKey, lag_order: int) -> PooledObjective:
    """
    Validation objective of a network model over every key age of the datasets.

    Hybrid objectives reuse each dataset's training-window ARIMA fits.
    """
    objectives = []
    for prepared in datasets:
        for age in prepared.key_ages:
            objectives.append(ValidationObjective(
                family=key.family,
                mode=key.mode,
                train=prepared.train[age],
                val=prepared.val[age],
                d=lag_order,
                hybrid=key.kind == "hybrid",
                linear=prepared.linear_train.get(age),
            ))
    return PooledObjective(objectives)


@dataclass
class TuningResult:
    scope: str
    model: str
    config: Optional[NetworkSpec]
    history: list[TrialRecord]
    error: Optional[str] = None


def _tune_job(job: tuple[str, str, PooledObjective, BenchmarkConfig]) -> TuningResult:
    scope, model, objective, config = job
    key = parse_model_name(model)
    settings = config.hpo
    space = SearchSpace(key.family, base=NetworkSpec(family=key.family, max_iterations=settings.max_iterations))
    rng = derive_seed(config.seed, scope, model, "hpo")
    try:
        if settings.method == "bayes":
            best, history = hpo.optimize(
                objective, space, settings.n_trials, settings.n_seeds, rng,
                n_initial=settings.n_initial, n_candidates=settings.n_candidates,
            )
        else:
            best, history = hpo.random_search(objective, space, settings.n_trials, settings.n_seeds, rng)
    except HpoError as exc:
        return TuningResult(scope, model, None, [], str(exc))
    return TuningResult(scope, model, best, history)


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellFailure:
    """A grid cell that produced no MAPE."""

    dataset: str
    model: str
    stage: str
    message: str


@dataclass(frozen=True)
class CellResult:
    dataset: str
    model: str
    mape: float
    seeds: tuple[int, ...] = ()
    failure: Optional[CellFailure] = None


def forecast_key_ages(
    prepared: PreparedDataset,
    key: ModelKey,
    spec: Optional[NetworkSpec],
    lag_order: int,
    H: int,
    seed: int = 0,
) -> NDArray[np.float64]:
    """
    Log-rate forecasts of one model at every key age, shape (H, n_keys).

    Network models use ``derive_seed(seed, age)`` for each age.
    """
    columns = []
    for age in prepared.key_ages:
        age_seed = derive_seed(seed, age)
        if key.kind == "arima":
            columns.append(arima.forecast(prepared.linear_fit[age], H))
        elif key.kind == "hybrid":
            model = hybrid.attach_nonlinear(prepared.linear_fit[age], spec, key.mode, lag_order, H, age_seed)
            columns.append(hybrid.forecast_hybrid(model, H))
        else:
            history = prepared.fit_window[age]
            model = strategy.fit_strategy(history, key.mode, lag_order, H, spec, age_seed)
            columns.append(strategy.forecast(model, history, H))
    return np.column_stack(columns)


def score_curves(prepared: PreparedDataset, curves: NDArray[np.float64], scale: str = "log") -> float:
    """MAPE of (H, n_eval_ages) log-rate curves against the test years."""
    if scale == "raw":
        return mape(np.exp(prepared.actual), np.exp(curves))
    return mape(prepared.actual, curves)


def key_forecasts_to_curves(prepared: PreparedDataset, key_forecasts: NDArray[np.float64]) -> NDArray[np.float64]:
    if prepared.eval_ages == prepared.key_ages:
        return key_forecasts
    return interpolate_forecasts(prepared.key_ages, key_forecasts, prepared.eval_ages)


def lee_carter_curves(prepared: PreparedDataset, H: int) -> NDArray[np.float64]:
    """Lee-Carter forecast at the evaluation ages, shape (H, n_eval_ages)."""
    params = fit_lee_carter(prepared.fit_surface, prepared.sex)
    curves = forecast_lee_carter(params, H)
    cols = [prepared.fit_surface.age_position(age) for age in prepared.eval_ages]
    return curves[:, cols]


def _evaluation_seeds(config: BenchmarkConfig, dataset: str, model: str) -> list[int]:
    return [derive_seed(config.seed, dataset, model, "eval", k) for k in range(config.eval_seeds)]


def evaluate_cell(
    prepared: PreparedDataset,
    model: str,
    spec: Optional[NetworkSpec],
    config: BenchmarkConfig,
) -> CellResult:
    """
    MAPE of one model on one dataset; failures are returned, not raised.
    """
    key = parse_model_name(model)
    H = config.horizon

    def failed(stage: str, message: str) -> CellResult:
        failure = CellFailure(prepared.name, model, stage, message)
        logger.warning("cell %s / %s failed at %s: %s", prepared.name, model, stage, message)
        return CellResult(prepared.name, model, math.nan, failure=failure)

    if key.kind in ("arima", "hybrid") and prepared.linear_error is not None:
        return failed("linear", prepared.linear_error)
    if key.is_network and spec is None:
        return failed("tuning", "no configuration available")

    try:
        if key.kind == "lee_carter":
            return CellResult(prepared.name, model, score_curves(prepared, lee_carter_curves(prepared, H),
                                                                 config.mape_scale))
        if key.kind == "arima":
            curves = key_forecasts_to_curves(prepared, forecast_key_ages(prepared, key, None, config.lag_order, H))
            return CellResult(prepared.name, model, score_curves(prepared, curves, config.mape_scale))

        seeds = _evaluation_seeds(config, prepared.name, model)
        if config.aggregate == "best":
            objective = pooled_objective([prepared], key, config.lag_order)
            validation = [objective(spec, seed) for seed in seeds]
            seeds = [seeds[int(np.argmin(validation))]]
        scores = []
        for seed in seeds:
            key_forecasts = forecast_key_ages(prepared, key, spec, config.lag_order, H, seed)
            scores.append(score_curves(prepared, key_forecasts_to_curves(prepared, key_forecasts),
                                       config.mape_scale))
    except HybridError as exc:
        return failed(exc.stage, str(exc))
    except FAILURES as exc:
        return failed("evaluation", f"{type(exc).__name__}: {exc}")
    result = float(np.mean(scores))
    if not math.isfinite(result):
        return failed("evaluation", "non-finite MAPE")
    logger.info("cell %s / %s: MAPE %.4f over %d seeds", prepared.name, model, result, len(seeds))
    return CellResult(prepared.name, model, result, tuple(seeds))


def _cell_job(job: tuple[PreparedDataset, str, Optional[NetworkSpec], BenchmarkConfig]) -> CellResult:
    return evaluate_cell(*job)


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------

@dataclass
class BenchmarkReport:
    """
    Result of a benchmark run.

    Attributes:
        mape: Datasets x models grid of MAPE (%), NaN for failed cells
        failures: One entry per failed cell
        tuned: Network configuration used per (scope, model)
        histories: HPO trial history per (scope, model)
        reference: Model the percentage differences are reported for
    """

    mape: pd.DataFrame
    failures: list[CellFailure] = field(default_factory=list)
    tuned: dict[tuple[str, str], NetworkSpec] = field(default_factory=dict)
    histories: dict[tuple[str, str], list[TrialRecord]] = field(default_factory=dict)
    reference: Optional[str] = None

    @property
    def ok(self) -> bool:
        return not self.failures

    def failures_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(f.dataset, f.model, f.stage, f.message) for f in self.failures],
            columns=["dataset", "model", "stage", "message"],
        )


def _network_configs(
    config: BenchmarkConfig,
    prepared: list[PreparedDataset],
    models: list[str],
    n_jobs: int,
) -> tuple[dict[tuple[str, str], NetworkSpec], dict[tuple[str, str], list[TrialRecord]], list[CellFailure]]:
    network_models = [m for m in models if parse_model_name(m).is_network]
    tuned: dict[tuple[str, str], NetworkSpec] = {}
    histories: dict[tuple[str, str], list[TrialRecord]] = {}
    failures: list[CellFailure] = []

    if not config.hpo.enabled:
        for model in network_models:
            tuned[("*", model)] = config.network.to_spec(parse_model_name(model).family)
        return tuned, histories, failures

    jobs = []
    for model in network_models:
        key = parse_model_name(model)
        usable = [p for p in prepared if key.kind == "single" or p.linear_error is None]
        if config.hpo.scope == "global":
            if usable:
                jobs.append(("*", model, pooled_objective(usable, key, config.lag_order), config))
        else:
            jobs.extend((p.name, model, pooled_objective([p], key, config.lag_order), config) for p in usable)
    logger.info("tuning %d (scope, model) pairs", len(jobs))
    for result in run_parallel(_tune_job, jobs, n_jobs):
        if result.config is None:
            datasets = [p.name for p in prepared] if result.scope == "*" else [result.scope]
            failures.extend(CellFailure(d, result.model, "tuning", result.error) for d in datasets)
            logger.warning("tuning %s for %s failed: %s", result.model, result.scope, result.error)
            continue
        tuned[(result.scope, result.model)] = result.config
        histories[(result.scope, result.model)] = result.history
    return tuned, histories, failures


def run_benchmark(config: BenchmarkConfig, n_jobs: int = 1) -> BenchmarkReport:
    """
    Run the full comparison protocol.

    1. Prepare every dataset: split each key age, fit the linear models.
    2. Tune every network model on the validation windows.
    3. Retrain on training + validation data and score the test years.

    Failed cells hold NaN and are listed in ``failures``; the report is
    always produced. A dataset that cannot be loaded or split fails all
    of its cells at the ``prepare`` stage. Every random choice derives
    from ``config.seed``.

    Args:
        config: Validated benchmark configuration
        n_jobs: Workers for datasets, tuning jobs and cells

    Returns:
        BenchmarkReport
    """
    models = config.models.resolve()
    outcomes = run_parallel(_prepare_job, [(spec, config) for spec in config.datasets], n_jobs)
    prepared = [outcome for outcome in outcomes if isinstance(outcome, PreparedDataset)]
    unprepared = [
        CellFailure(spec.name, model, "prepare", outcome)
        for spec, outcome in zip(config.datasets, outcomes) if isinstance(outcome, str)
        for model in models
    ]
    tuned, histories, failures = _network_configs(config, prepared, models, n_jobs)
    failed_tuning = {(f.dataset, f.model) for f in failures}
    failures = unprepared + failures

    jobs = []
    for p in prepared:
        for model in models:
            if (p.name, model) in failed_tuning:
                continue
            spec = tuned.get((p.name, model), tuned.get(("*", model)))
            jobs.append((p, model, spec, config))
    logger.info("evaluating %d cells", len(jobs))
    results = run_parallel(_cell_job, jobs, n_jobs)

    grid = pd.DataFrame(np.nan, index=[spec.name for spec in config.datasets], columns=models, dtype=np.float64)
    grid.index.name = "dataset"
    for result in results:
        grid.loc[result.dataset, result.model] = result.mape
        if result.failure is not None:
            failures.append(result.failure)

    report = BenchmarkReport(grid, failures, tuned, histories, config.reference)
    if report.reference is None:
        report.reference = default_reference(grid)
    logger.info("benchmark done: %d datasets x %d models, %d failed cells",
                len(config.datasets), len(models), len(failures))
    return report


# ---------------------------------------------------------------------------
# Report tables
# ---------------------------------------------------------------------------

def _complete_rows(frame: pd.DataFrame) -> pd.DataFrame:
    complete = frame.dropna(axis=0, how="any")
    dropped = len(frame) - len(complete)
    if dropped:
        warnings.warn(
            f"{dropped} of {len(frame)} datasets have failed cells; "
            f"statistics use the {len(complete)} complete ones"
        )
    if complete.empty:
        raise MetricError("no dataset has a complete row of MAPE values")
    return complete


def rank_models(frame: pd.DataFrame) -> pd.Series:
    """
    Mean rank of each model over datasets, best first.

    Rank 1 is the lowest MAPE of a dataset; ties share the average rank.
    Datasets with a missing value are left out, with a warning.

    Example:
        >>> rank_models(pd.DataFrame({"a": [1.0, 2.0], "b": [2.0, 2.0]}))
        a    1.25
        b    1.75
        Name: mean rank, dtype: float64
    """
    complete = _complete_rows(frame)
    ranks = complete.rank(axis=1, method="average", ascending=True)
    return ranks.mean(axis=0).sort_values(kind="stable").rename("mean rank")


def best_frequencies(frame: pd.DataFrame) -> pd.Series:
    """
    Share of datasets (%) on which each column has the lowest value.

    A dataset where k columns tie for the minimum credits each of them 1/k.
    """
    complete = _complete_rows(frame)
    values = complete.to_numpy()
    winners = np.isclose(values, values.min(axis=1, keepdims=True), rtol=0.0, atol=1e-12)
    credit = winners / winners.sum(axis=1, keepdims=True)
    return pd.Series(100.0 * credit.mean(axis=0), index=complete.columns, name="win %")


def strategy_table(frame: pd.DataFrame, family: str, hybrid_models: bool = True) -> pd.DataFrame:
    """
    MAPE of one family under each strategy, columns Direct, MIMO, Recursive.
    """
    name = hybrid_name if hybrid_models else single_name
    columns = {name(family, mode): STRATEGY_LABELS[mode]
               for mode in ("direct", "mimo", "recursive") if name(family, mode) in frame.columns}
    if not columns:
        raise MetricError(f"no {family} strategy columns in the grid")
    return frame[list(columns)].rename(columns=columns)


def strategy_win_frequencies(frame: pd.DataFrame, family: str, hybrid_models: bool = True) -> pd.Series:
    """
    Percentage of datasets on which each strategy is best for a family.

    The frequencies sum to 100.
    """
    return best_frequencies(strategy_table(frame, family, hybrid_models))


def winning_strategy(frame: pd.DataFrame, family: str) -> str:
    """Strategy with the highest win frequency; ties go to recursive, then direct, then mimo."""
    frequencies = strategy_win_frequencies(frame, family)
    for mode in MODES:
        label = STRATEGY_LABELS[mode]
        if label in frequencies.index and math.isclose(frequencies[label], frequencies.max()):
            return mode
    raise MetricError(f"no winning strategy for {family}")


def _hybrid_families(frame: pd.DataFrame) -> list[str]:
    families = []
    for column in frame.columns:
        key = parse_model_name(column)
        if key.kind == "hybrid" and key.family not in families:
            families.append(key.family)
    return families


def hybrid_table(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Each hybrid family under its winning strategy, plus the best model per dataset.
    """
    columns = [hybrid_name(family, winning_strategy(frame, family)) for family in _hybrid_families(frame)]
    if not columns:
        raise MetricError("no hybrid models in the grid")
    table = frame[columns].copy()
    table["Best"] = [row.idxmin() if row.notna().any() else None for _, row in table[columns].iterrows()]
    return table


def best_hybrid(frame: pd.DataFrame) -> str:
    """Hybrid with the lowest mean MAPE among those under their winning strategy."""
    table = hybrid_table(frame).drop(columns="Best")
    return str(_complete_rows(table).mean(axis=0).idxmin())


def default_reference(frame: pd.DataFrame) -> Optional[str]:
    """Best hybrid when the grid has hybrids, otherwise the best-ranked model."""
    try:
        if _hybrid_families(frame):
            return best_hybrid(frame)
        return str(rank_models(frame).index[0])
    except MetricError:
        return None


def comparison_frame(frame: pd.DataFrame, reference: str) -> pd.DataFrame:
    """Every non-hybrid model next to the reference model."""
    columns = [c for c in frame.columns if parse_model_name(c).kind != "hybrid" and c != reference]
    return frame[columns + [reference]]


def summary_table(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Mean, mean rank, rank order and standard deviation of each model.

    The rank row orders models by mean rank (1 = best).
    """
    complete = _complete_rows(frame)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mean_rank = rank_models(complete)
    table = pd.DataFrame({
        "mean": complete.mean(axis=0),
        "mean rank": mean_rank,
        "rank": mean_rank.rank(method="min"),
        "std": complete.std(axis=0, ddof=1),
    }).T
    return table[list(complete.columns)]


def pd_table(frame: pd.DataFrame, reference: str) -> pd.Series:
    """
    Percentage difference of the reference against every other model's mean MAPE.

    Positive values mean the reference is more accurate.
    """
    if reference not in frame.columns:
        raise MetricError(f"reference {reference!r} is not in the grid")
    means = _complete_rows(frame).mean(axis=0)
    return pd.Series(
        {model: percentage_difference(means[model], means[reference])
         for model in frame.columns if model != reference},
        name=f"PD vs {reference}",
    )


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def report_tables(report: BenchmarkReport) -> dict[str, Union[pd.DataFrame, pd.Series]]:
    """
    Named report tables that can be computed from the grid.

    Tables needing missing models are left out.
    """
    frame = report.mape
    tables: dict[str, Union[pd.DataFrame, pd.Series]] = {"mape": frame}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for family in _hybrid_families(frame):
            try:
                table = strategy_table(frame, family)
                tables[f"strategy_{family}"] = pd.concat(
                    [table, strategy_win_frequencies(frame, family).to_frame().T]
                )
            except MetricError as exc:
                logger.info("skipping %s strategy table: %s", family, exc)
        try:
            hybrids = hybrid_table(frame)
            frequencies = best_frequencies(hybrids.drop(columns="Best"))
            tables["hybrids"] = pd.concat([hybrids, frequencies.to_frame().T])
        except MetricError as exc:
            logger.info("skipping hybrid table: %s", exc)
        try:
            reference = report.reference
            selected = comparison_frame(frame, reference) if reference in frame.columns else frame
            tables["summary"] = summary_table(selected)
            if reference in frame.columns:
                tables["pd"] = pd_table(selected, reference)
        except MetricError as exc:
            logger.info("skipping summary tables: %s", exc)
    return tables


def render_text(report: BenchmarkReport) -> str:
    """Aligned plain-text rendering of every report table."""
    sections = []
    for name, table in report_tables(report).items():
        body = table.to_string(float_format=lambda v: f"{v:.3f}", na_rep="FAILED")
        sections.append(f"== {name} ==\n{body}")
    if report.failures:
        sections.append("== failures ==\n" + report.failures_frame().to_string(index=False))
    if report.reference:
        sections.append(f"reference model: {report.reference}")
    return "\n\n".join(sections) + "\n"


def write_report(report: BenchmarkReport, out_dir: Union[str, Path]) -> list[Path]:
    """
    Write every table as CSV plus ``report.txt``; returns the written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in report_tables(report).items():
        path = out_dir / f"{name}.csv"
        table.to_csv(path, float_format="%.6f")
        written.append(path)
    if report.failures:
        path = out_dir / "failures.csv"
        report.failures_frame().to_csv(path, index=False)
        written.append(path)
    for (scope, model), history in sorted(report.histories.items()):
        path = out_dir / "hpo" / f"{scope.replace('*', 'global')}__{model}.csv"
        path.parent.mkdir(exist_ok=True)
        hpo.write_history_csv(history, path)
        written.append(path)
    path = out_dir / "report.txt"
    path.write_text(render_text(report), encoding="utf-8")
    written.append(path)
    return written
