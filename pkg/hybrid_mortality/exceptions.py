"""
Exception hierarchy for hybrid_mortality.

Every error raised by the library derives from ForecastingError. Errors
that describe a bad input value also derive from ValueError.
"""

from __future__ import annotations

from typing import Any, Optional


class ForecastingError(Exception):
    """Base class for all library errors."""


class DomainError(ForecastingError, ValueError):
    """A value lies outside the domain of a transform (e.g. log of a non-positive number)."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class DegenerateScaleError(ForecastingError, ValueError):
    """Min-max scaling of a series with zero range."""


class SplitError(ForecastingError, ValueError):
    """Series too short for the requested train/validation/test split."""

    def __init__(self, message: str, required: int = 0, available: int = 0):
        super().__init__(message)
        self.required = required
        self.available = available


class WindowError(ForecastingError, ValueError):
    """Series too short to build supervised windows."""


class OrderError(ForecastingError, ValueError):
    """Invalid or degenerate ARIMA order."""


class ConvergenceError(ForecastingError):
    """ARIMA estimation stopped before converging."""

    def __init__(self, message: str, best_params: Any = None):
        super().__init__(message)
        self.best_params = best_params


class SelectionError(ForecastingError):
    """No ARIMA order candidate could be fitted."""


class SpecError(ForecastingError, ValueError):
    """NetworkSpec field outside its allowed range."""


class ShapeError(ForecastingError, ValueError):
    """Input or output width does not match the network."""


class DivergenceError(ForecastingError):
    """Training loss became non-finite or exploded."""

    def __init__(self, message: str, iteration: int = -1):
        super().__init__(message)
        self.iteration = iteration


class StrategyError(ForecastingError, ValueError):
    """Invalid multi-step strategy usage."""


class HorizonError(StrategyError):
    """Requested horizon not supported by a fitted model."""


class HybridError(ForecastingError):
    """A stage of the hybrid pipeline failed; `stage` names it."""

    def __init__(self, message: str, stage: str):
        super().__init__(f"{stage}-stage: {message}")
        self.stage = stage


class HpoError(ForecastingError):
    """Hyperparameter optimization could not produce a result."""


class ParseError(ForecastingError, ValueError):
    """Malformed line in a mortality table."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.detail = message


class DataError(ForecastingError, ValueError):
    """Missing or invalid cell in a mortality table."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.detail = message


class DemographicError(ForecastingError, ValueError):
    """Invalid request against a mortality surface."""


class DegenerateSurfaceError(DemographicError):
    """Lee-Carter loadings cannot be normalized."""


class MetricError(ForecastingError, ValueError):
    """Metric undefined for the given inputs."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class ConfigError(ForecastingError, ValueError):
    """Invalid run configuration."""
