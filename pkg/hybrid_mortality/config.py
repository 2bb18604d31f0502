"""
Run configuration.

Benchmark and command runs are described by YAML files validated with
pydantic models. Unknown keys are rejected and every validation problem
surfaces as a ConfigError.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .arima import ArimaConfig, ArimaOrder
from .demographic import KEY_AGES, SyntheticSurfaceParams
from .evaluation import model_names, parse_model_name
from .exceptions import ConfigError, OrderError
from .neural import NetworkSpec

logger = logging.getLogger(__name__)

Sex = Literal["female", "male", "total"]
FamilyName = Literal["MLP", "LSTM", "NBEATS"]
ModeName = Literal["recursive", "direct", "mimo"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticSpec(_Strict):
    """Generator settings of a synthetic dataset."""

    first_year: int = 1950
    last_year: int = 2019
    drift: float = -1.0
    noise: float = Field(0.02, ge=0.0)
    kt_volatility: float = Field(0.0, ge=0.0)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _years(self) -> SyntheticSpec:
        if self.last_year <= self.first_year:
            raise ValueError("last_year must be after first_year")
        return self

    def to_params(self) -> SyntheticSurfaceParams:
        return SyntheticSurfaceParams(
            first_year=self.first_year,
            last_year=self.last_year,
            drift=self.drift,
            noise=self.noise,
            kt_volatility=self.kt_volatility,
        )


class DatasetSpec(_Strict):
    """
    One benchmark dataset: a country file (or synthetic surface) and a sex.

    ``train_end`` is the last year of the training window; the test window
    is the ``horizon`` years after it.
    """

    name: str
    path: Optional[Path] = None
    synthetic: Optional[SyntheticSpec] = None
    sex: Sex = "total"
    first_year: Optional[int] = None
    last_year: Optional[int] = None
    train_end: int

    @model_validator(mode="after")
    def _one_source(self) -> DatasetSpec:
        if (self.path is None) == (self.synthetic is None):
            raise ValueError(f"dataset {self.name!r} needs exactly one of 'path' or 'synthetic'")
        return self


class ArimaSettings(_Strict):
    """Fixed order, or bounds of the order search."""

    order: Optional[tuple[int, int, int]] = None
    max_p: int = Field(5, ge=0)
    max_d: int = Field(2, ge=0)
    max_q: int = Field(5, ge=0)
    max_evaluations: int = Field(2000, ge=1)

    @field_validator("order")
    @classmethod
    def _valid_order(cls, value):
        if value is not None:
            try:
                ArimaOrder(*value)
            except OrderError as exc:
                raise ValueError(str(exc)) from None
        return value

    def to_config(self, n_jobs: int = 1) -> ArimaConfig:
        order = ArimaOrder(*self.order) if self.order is not None else None
        return ArimaConfig(order, self.max_p, self.max_d, self.max_q, self.max_evaluations, n_jobs)


class HpoSettings(_Strict):
    """Hyperparameter search budget."""

    enabled: bool = True
    method: Literal["bayes", "random"] = "bayes"
    n_trials: int = Field(10, ge=1)
    n_seeds: int = Field(5, ge=1)
    n_initial: int = Field(4, ge=1)
    n_candidates: int = Field(2048, ge=1)
    scope: Literal["dataset", "global"] = "dataset"
    max_iterations: int = Field(500, ge=1, le=500)


class NetworkSettings(_Strict):
    """Fixed network hyperparameters, used when the search is disabled."""

    hidden_units: int = Field(16, ge=2, le=100)
    learning_rate: float = Field(1e-3, ge=1e-4, le=1e-1)
    activation: Literal["tanh", "relu"] = "tanh"
    n_hidden_layers: int = Field(1, ge=1, le=4)
    max_iterations: int = Field(500, ge=1, le=500)

    def to_spec(self, family: str) -> NetworkSpec:
        return NetworkSpec(family=family, **self.model_dump())


class ModelSelection(_Strict):
    """
    Which models enter the grid.

    An explicit ``names`` list wins; otherwise the grid is built from the
    families, strategies and switches.
    """

    names: Optional[list[str]] = None
    families: list[FamilyName] = Field(default_factory=lambda: ["MLP", "LSTM", "NBEATS"])
    strategies: list[ModeName] = Field(default_factory=lambda: ["recursive", "direct", "mimo"])
    arima: bool = True
    lee_carter: bool = True
    hybrids: bool = True
    singles: bool = True

    @field_validator("names")
    @classmethod
    def _known_names(cls, value):
        if value is not None:
            if not value:
                raise ValueError("names must not be empty")
            for name in value:
                parse_model_name(name)
            if len(set(value)) != len(value):
                raise ValueError("model names must be unique")
        return value

    def resolve(self) -> list[str]:
        if self.names is not None:
            return list(self.names)
        return model_names(
            self.families, self.strategies,
            arima=self.arima, lee_carter=self.lee_carter,
            hybrids=self.hybrids, singles=self.singles,
        )


def _check_key_ages(value: list[int]) -> list[int]:
    if len(value) < 2 or any(b <= a for a, b in zip(value, value[1:])):
        raise ValueError("key_ages must hold at least two strictly increasing ages")
    if value[0] < 0 or value[-1] > 100:
        raise ValueError("key_ages must lie in 0..100")
    return value


class BenchmarkConfig(_Strict):
    """
    Full benchmark description.

    Attributes:
        datasets: Datasets of the grid
        models: Model selection
        horizon: Test years after each dataset's ``train_end``
        val_fraction: Trailing share of the training window used for validation
        lag_order: Input width d of every network
        key_ages: Ages modeled individually, splined to full curves
        seed: Master seed every sub-seed derives from
        eval_seeds: Retraining seeds per network model
        aggregate: ``mean`` over seeds, or the ``best`` validation seed
        mape_ages: ``all`` interpolated ages or the ``key`` ages only
        mape_scale: ``log`` mortality or ``raw`` rates
        reference: Model PD is reported against; defaults to the best hybrid
    """

    datasets: list[DatasetSpec] = Field(min_length=1)
    models: ModelSelection = Field(default_factory=ModelSelection)
    horizon: int = Field(10, ge=1)
    val_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    lag_order: int = Field(2, ge=1)
    key_ages: list[int] = Field(default_factory=lambda: list(KEY_AGES))
    arima: ArimaSettings = Field(default_factory=ArimaSettings)
    hpo: HpoSettings = Field(default_factory=HpoSettings)
    network: NetworkSettings = Field(default_factory=NetworkSettings)
    seed: int = 0
    eval_seeds: int = Field(5, ge=1)
    aggregate: Literal["mean", "best"] = "mean"
    mape_ages: Literal["all", "key"] = "all"
    mape_scale: Literal["log", "raw"] = "log"
    reference: Optional[str] = None

    @field_validator("key_ages")
    @classmethod
    def _valid_key_ages(cls, value: list[int]) -> list[int]:
        return _check_key_ages(value)

    @model_validator(mode="after")
    def _consistent(self) -> BenchmarkConfig:
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ValueError("dataset names must be unique")
        if self.reference is not None and self.reference not in self.models.resolve():
            raise ValueError(f"reference model {self.reference!r} is not in the model grid")
        return self


class RunConfig(_Strict):
    """
    Resolved settings of one CLI command, echoed to the output directory.
    """

    command: Literal["ingest", "synth", "fit", "forecast", "hpo", "benchmark"]
    out: Path
    seed: int = 0
    jobs: int = 1
    inputs: list[Path] = Field(default_factory=list)
    age: Optional[int] = Field(None, ge=0, le=100)
    sex: Sex = "total"
    first_year: Optional[int] = None
    last_year: Optional[int] = None
    train_end: Optional[int] = None
    model: Optional[str] = None
    horizon: int = Field(10, ge=1)
    lag_order: int = Field(2, ge=1)
    val_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    arima: ArimaSettings = Field(default_factory=ArimaSettings)
    network: NetworkSettings = Field(default_factory=NetworkSettings)
    hpo: HpoSettings = Field(default_factory=HpoSettings)
    synthetic: Optional[SyntheticSpec] = None
    benchmark: Optional[BenchmarkConfig] = None

    @field_validator("model")
    @classmethod
    def _known_model(cls, value):
        if value is not None:
            parse_model_name(value)
        return value


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        where = ".".join(str(p) for p in error["loc"]) or "<root>"
        parts.append(f"{where}: {error['msg']}")
    return "; ".join(parts)


def config_from_dict(data: Any) -> BenchmarkConfig:
    """
    Validate a mapping as a benchmark configuration.

    Raises:
        ConfigError: unknown keys, wrong types or inconsistent values
    """
    if not isinstance(data, dict):
        raise ConfigError("benchmark configuration must be a mapping")
    try:
        return BenchmarkConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Union[str, Path]) -> BenchmarkConfig:
    """
    Read and validate a YAML benchmark configuration.

    Relative dataset paths are resolved against the file's directory.

    Raises:
        ConfigError: unreadable file, invalid YAML, or invalid content
    """
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    config = config_from_dict(data)
    datasets = [
        d.model_copy(update={"path": path.parent / d.path})
        if d.path is not None and not d.path.is_absolute() else d
        for d in config.datasets
    ]
    logger.info("loaded %s: %d datasets, %d models", path, len(datasets), len(config.models.resolve()))
    return config.model_copy(update={"datasets": datasets})


def dump_config(config: BaseModel, path: Union[str, Path]) -> None:
    """Write a configuration, defaults included, as YAML."""
    data = config.model_dump(mode="json")
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
