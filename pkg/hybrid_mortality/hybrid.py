"""
Additive ARIMA + machine-learning hybrid.

The series is decomposed as Z_t = L_t + N_t: ARIMA estimates the linear
part, a strategy model learns the ARIMA residuals, and the forecast is
the sum of both component forecasts on the original scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from . import arima, strategy
from .arima import ArimaConfig, ArimaModel
from .exceptions import DegenerateScaleError, ForecastingError, HorizonError, HybridError, ParseError
from .neural import NetworkSpec
from .records import Record
from .strategy import Mode, StrategyModel
from .timeseries import MinMaxScaler, SeriesLike, TimeSeries, as_series

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HybridModel:
    """
    Fitted additive hybrid.

    Attributes:
        linear: ARIMA model of the series
        residual_series: In-sample ARIMA residuals (warm-up excluded)
        nonlinear: Strategy trained on the normalized residuals
    """

    linear: ArimaModel
    residual_series: TimeSeries
    nonlinear: StrategyModel
    composition: str = "additive"

    def to_records(self) -> list[Record]:
        """Composite record: hybrid header, ARIMA record, strategy records."""
        header = Record("hybrid")
        header.set("composition", self.composition)
        return [header, self.linear.to_record(), *self.nonlinear.to_records()]

    @classmethod
    def from_records(cls, records: list[Record]) -> HybridModel:
        kinds = [r.kind for r in records[:2]]
        if kinds != ["hybrid", "arima"]:
            raise ParseError(f"hybrid records must start with [hybrid] and [arima], got {kinds}")
        linear = ArimaModel.from_record(records[1])
        nonlinear = StrategyModel.from_records(records[2:])
        return cls(linear, linear.residual_series, nonlinear, records[0].get("composition"))


def attach_nonlinear(
    linear: ArimaModel,
    ml_spec: NetworkSpec,
    mode: Mode,
    d: int,
    H: int,
    seed: int = 0,
    n_jobs: int = 1,
) -> HybridModel:
    """
    Residual and nonlinear stages on top of an already fitted linear model.

    Raises:
        HybridError: with stage ``residual`` or ``nonlinear``
    """
    residuals = linear.residual_series
    try:
        MinMaxScaler.fit(residuals.values)
    except DegenerateScaleError as exc:
        raise HybridError(str(exc), "residual") from exc
    try:
        nonlinear = strategy.fit_strategy(residuals, mode, d, H, ml_spec, seed=seed, n_jobs=n_jobs)
    except (ForecastingError, ValueError, FloatingPointError) as exc:
        raise HybridError(str(exc), "nonlinear") from exc
    return HybridModel(linear, residuals, nonlinear)


def fit_hybrid(
    series: SeriesLike,
    arima_cfg: ArimaConfig,
    ml_spec: NetworkSpec,
    mode: Mode,
    d: int,
    H: int,
    seed: int = 0,
    n_jobs: int = 1,
) -> HybridModel:
    """
    Fit ARIMA, extract its residuals, train a strategy on them.

    Args:
        series: Training series (log-mortality scale in the benchmark)
        arima_cfg: Fixed order or order-search settings
        ml_spec: Residual network hyperparameters
        mode: recursive, direct or mimo
        d: Lag order of the residual model
        H: Horizon
        seed: Seed of the residual model

    Returns:
        HybridModel holding all three artifacts

    Raises:
        HybridError: a stage failed; ``stage`` names it and the cause is chained
    """
    try:
        series = as_series(series)
        linear = arima.fit_configured(series, arima_cfg)
    except (ForecastingError, ValueError, np.linalg.LinAlgError) as exc:
        raise HybridError(str(exc), "linear") from exc
    logger.debug("linear stage ARIMA%s, %d residuals", linear.order, linear.residuals.size)
    return attach_nonlinear(linear, ml_spec, mode, d, H, seed=seed, n_jobs=n_jobs)


def forecast_components(
    model: HybridModel,
    H: int,
    history: Optional[SeriesLike] = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Linear and denormalized nonlinear forecasts, before summation.

    Args:
        model: Fitted hybrid
        H: Horizon
        history: Series to condition on instead of the training history

    Raises:
        HorizonError: direct or mimo residual model trained for another H
    """
    if model.nonlinear.mode != "recursive" and H != model.nonlinear.H:
        raise HorizonError(
            f"{model.nonlinear.mode} residual model was trained for H={model.nonlinear.H}, "
            f"asked for H={H}"
        )
    if history is None:
        residual_history = model.residual_series
    else:
        linear = model.linear
        refiltered = ArimaModel.from_coefficients(
            linear.order, history, linear.ar_coeffs, linear.ma_coeffs,
            linear.intercept, linear.sigma2,
        )
        residual_history = refiltered.residual_series
    linear_part = arima.forecast(model.linear, H, history)
    nonlinear_part = strategy.forecast(model.nonlinear, residual_history, H)
    return linear_part, nonlinear_part


def forecast_hybrid(model: HybridModel, H: int, history: Optional[SeriesLike] = None) -> NDArray[np.float64]:
    """
    Hybrid forecast: ARIMA forecast plus residual forecast, horizon by horizon.

    Example:
        >>> linear_part, nonlinear_part = forecast_components(model, 10)
        >>> np.array_equal(forecast_hybrid(model, 10), linear_part + nonlinear_part)
        True
    """
    linear_part, nonlinear_part = forecast_components(model, H, history)
    return linear_part + nonlinear_part
