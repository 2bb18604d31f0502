"""
Multi-step forecasting strategies.

A strategy turns one-step or multi-output learners into an H-step
forecaster:

- recursive: one learner f, iterated; each forecast becomes the newest lag
- direct: H learners f_1 .. f_H, learner h maps the observed lags to z_{N+h}
- mimo: one learner F with H outputs, slot k holding horizon k + 1

Learners see min-max normalized values. The strategy owns the scaler,
fitted on its training series, and returns forecasts on the original
scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Protocol, Sequence, runtime_checkable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import HorizonError, ParseError, StrategyError
from .neural import NetworkSpec, TrainedNetwork, init, train, with_widths
from .records import Record
from .timeseries import MinMaxScaler, SeriesLike, WindowMode, as_series, make_windows
from .utils import run_parallel

logger = logging.getLogger(__name__)

Mode = Literal["recursive", "direct", "mimo"]
MODES: tuple[str, ...] = ("recursive", "direct", "mimo")


@runtime_checkable
class Learner(Protocol):
    """Anything mapping (n, d) lag vectors to (n, output_width) outputs."""

    output_width: int

    def predict(self, X: ArrayLike) -> NDArray[np.float64]:
        ...


@dataclass(frozen=True)
class LinearLagLearner:
    """
    Fixed linear map of the lag vector.

    Attributes:
        coeffs: Weights, oldest lag first
        intercept: Constant term
    """

    coeffs: tuple[float, ...]
    intercept: float = 0.0
    output_width: int = 1

    @classmethod
    def from_ar(cls, ar: ArrayLike, intercept: float = 0.0) -> LinearLagLearner:
        """Learner for z_t = c + phi_1 z_{t-1} + ... + phi_p z_{t-p}."""
        ar = np.asarray(ar, dtype=np.float64).ravel()
        return cls(tuple(float(a) for a in ar[::-1]), float(intercept))

    @classmethod
    def from_arima(cls, model) -> LinearLagLearner:
        """Learner equivalent to a fitted pure AR model on undifferenced data."""
        if model.order.d != 0 or model.order.q != 0:
            raise StrategyError(f"ARIMA{model.order} is not a pure AR map")
        return cls.from_ar(model.ar_coeffs, model.intercept)

    def predict(self, X: ArrayLike) -> NDArray[np.float64]:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return (self.intercept + X @ np.asarray(self.coeffs))[:, None]


@dataclass(frozen=True)
class StrategyModel:
    """
    A trained multi-step forecaster.

    Attributes:
        mode: recursive, direct or mimo
        d: Lag order
        H: Horizon the model was trained for
        learners: One learner, or H learners for direct mode (index h - 1)
        scaler: Normalization applied to learner inputs and outputs

    Raises:
        StrategyError: learner count or widths inconsistent with the mode
    """

    mode: Mode
    d: int
    H: int
    learners: tuple[Learner, ...]
    scaler: MinMaxScaler

    def __post_init__(self):
        object.__setattr__(self, 'learners', tuple(self.learners))
        if self.mode not in MODES:
            raise StrategyError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.d < 1 or self.H < 1:
            raise StrategyError(f"d and H must be positive, got d={self.d}, H={self.H}")
        if self.mode == "direct":
            if len(self.learners) != self.H:
                raise StrategyError(f"direct mode needs {self.H} learners, got {len(self.learners)}")
        elif len(self.learners) != 1:
            raise StrategyError(f"{self.mode} mode needs exactly one learner, got {len(self.learners)}")
        expected = self.H if self.mode == "mimo" else 1
        for learner in self.learners:
            if learner.output_width != expected:
                raise StrategyError(
                    f"{self.mode} learners must have output width {expected}, "
                    f"got {learner.output_width}"
                )

    def to_records(self) -> list[Record]:
        """Header record followed by one record per learner."""
        header = Record("strategy")
        header.set("mode", self.mode)
        header.set("d", self.d)
        header.set("H", self.H)
        header.set("scaler_lo", float(self.scaler.lo))
        header.set("scaler_hi", float(self.scaler.hi))
        records = [header]
        for learner in self.learners:
            if isinstance(learner, TrainedNetwork):
                records.append(learner.to_record())
            elif isinstance(learner, LinearLagLearner):
                linear = Record("linear")
                linear.set("coeffs", np.asarray(learner.coeffs))
                linear.set("intercept", learner.intercept)
                records.append(linear)
            else:
                raise StrategyError(f"cannot serialize learner of type {type(learner).__name__}")
        return records

    @classmethod
    def from_records(cls, records: Sequence[Record]) -> StrategyModel:
        if not records or records[0].kind != "strategy":
            raise ParseError("strategy records must start with a [strategy] section")
        header = records[0]
        learners: list[Learner] = []
        for record in records[1:]:
            if record.kind == "network":
                learners.append(TrainedNetwork.from_record(record))
            elif record.kind == "linear":
                learners.append(LinearLagLearner(
                    tuple(record.get_floats("coeffs")), record.get_float("intercept")
                ))
            else:
                raise ParseError(f"unexpected [{record.kind}] section in a strategy")
        return cls(
            mode=header.get("mode"),
            d=header.get_int("d"),
            H=header.get_int("H"),
            learners=tuple(learners),
            scaler=MinMaxScaler(header.get_float("scaler_lo"), header.get_float("scaler_hi")),
        )


def _train_one(job: tuple[NDArray[np.float64], int, WindowMode, NetworkSpec, int]) -> TrainedNetwork:
    z, d, window_mode, spec, seed = job
    dataset = make_windows(z, d, window_mode)
    net_spec = with_widths(spec, d, window_mode.target_width)
    return train(init(net_spec, seed), dataset)


def fit_strategy(
    series: SeriesLike,
    mode: Mode,
    d: int,
    H: int,
    spec: NetworkSpec,
    seed: int = 0,
    n_jobs: int = 1,
    normalize: bool = True,
) -> StrategyModel:
    """
    Train the learner(s) of a strategy.

    Args:
        series: Training series
        mode: recursive, direct or mimo
        d: Lag order (overrides ``spec.input_width``)
        H: Horizon
        spec: Network hyperparameters; widths are set from d, H and mode
        seed: Initialization seed; direct learner h uses seed + h
        n_jobs: Workers for the direct learners
        normalize: Fit a min-max scaler on the series (off for pre-scaled input)

    Returns:
        StrategyModel

    Raises:
        WindowError: series too short for the mode's windows
        DegenerateScaleError: constant series
    """
    if mode not in MODES:
        raise StrategyError(f"mode must be one of {MODES}, got {mode!r}")
    series = as_series(series)
    scaler = MinMaxScaler.fit(series.values) if normalize else MinMaxScaler.identity()
    z = scaler.normalize(series.values)

    if mode == "recursive":
        jobs = [(z, d, WindowMode.recursive(), spec, seed)]
    elif mode == "direct":
        jobs = [(z, d, WindowMode.direct(h), spec, seed + h) for h in range(1, H + 1)]
    else:
        jobs = [(z, d, WindowMode.mimo(H), spec, seed)]

    # fail before any training when the longest window does not fit
    make_windows(z, d, jobs[-1][2])
    learners = run_parallel(_train_one, jobs, n_jobs)
    logger.debug("fitted %s strategy: %s x%d, d=%d, H=%d", mode, spec.family, len(learners), d, H)
    return StrategyModel(mode, d, H, tuple(learners), scaler)


def _lags(model: StrategyModel, history: SeriesLike) -> NDArray[np.float64]:
    values = as_series(history).values
    if values.size < model.d:
        raise StrategyError(f"history of {values.size} points is shorter than lag order {model.d}")
    return model.scaler.normalize(values[-model.d:])


def forecast_recursive(model: StrategyModel, history: SeriesLike, H: Optional[int] = None) -> NDArray[np.float64]:
    """
    Iterate the one-step learner H times.

    Step 1 uses observed lags only, steps 2..d mix forecasts with
    observations, later steps use forecasts only.

    Example:
        >>> fib = StrategyModel("recursive", 2, 3, (LinearLagLearner((1.0, 1.0)),),
        ...                     MinMaxScaler.identity())
        >>> forecast_recursive(fib, [1.0, 2.0])
        array([3., 5., 8.])
    """
    if model.mode != "recursive":
        raise StrategyError(f"expected a recursive model, got {model.mode}")
    H = model.H if H is None else H
    if H < 1:
        raise HorizonError(f"horizon must be at least 1, got {H}")
    window = list(_lags(model, history))
    learner = model.learners[0]
    out = np.empty(H)
    for h in range(H):
        value = float(learner.predict(np.asarray(window[-model.d:])[None, :])[0, 0])
        out[h] = value
        window.append(value)
    return model.scaler.denormalize(out)


def forecast_direct(model: StrategyModel, history: SeriesLike) -> NDArray[np.float64]:
    """Apply learner h to the observed lags for each horizon h."""
    if model.mode != "direct":
        raise StrategyError(f"expected a direct model, got {model.mode}")
    if len(model.learners) != model.H:
        raise StrategyError(f"direct model has {len(model.learners)} learners for H={model.H}")
    x = _lags(model, history)[None, :]
    out = np.array([float(learner.predict(x)[0, 0]) for learner in model.learners])
    return model.scaler.denormalize(out)


def forecast_mimo(model: StrategyModel, history: SeriesLike) -> NDArray[np.float64]:
    """
    One multi-output call; slot k is horizon k + 1.

    Raises:
        StrategyError: learner output width differs from H
    """
    if model.mode != "mimo":
        raise StrategyError(f"expected a mimo model, got {model.mode}")
    out = np.asarray(model.learners[0].predict(_lags(model, history)[None, :]), dtype=np.float64)
    if out.shape != (1, model.H):
        raise StrategyError(f"mimo learner returned shape {out.shape}, expected (1, {model.H})")
    return model.scaler.denormalize(out[0])


def forecast(model: StrategyModel, history: SeriesLike, H: Optional[int] = None) -> NDArray[np.float64]:
    """
    Dispatch on the strategy mode.

    Raises:
        HorizonError: direct or mimo model asked for a horizon it was not trained for
    """
    if model.mode == "recursive":
        return forecast_recursive(model, history, H)
    if H is not None and H != model.H:
        raise HorizonError(f"{model.mode} model was trained for H={model.H}, asked for H={H}")
    if model.mode == "direct":
        return forecast_direct(model, history)
    return forecast_mimo(model, history)


