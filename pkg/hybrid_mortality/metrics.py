"""
Forecast error metrics.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import MetricError


def _pair(actual: ArrayLike, forecast: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    a = np.asarray(actual, dtype=np.float64).ravel()
    f = np.asarray(forecast, dtype=np.float64).ravel()
    if a.size == 0:
        raise MetricError("metrics need at least one value")
    if a.size != f.size:
        raise MetricError(f"length mismatch: {a.size} actual values, {f.size} forecasts")
    return a, f


def mape(actual: ArrayLike, forecast: ArrayLike) -> float:
    """
    Mean absolute percentage error, in percent.

    Raises:
        MetricError: a zero actual value (names the index) or mismatched lengths

    Example:
        >>> mape([100.0, 200.0], [110.0, 180.0])
        10.0
    """
    a, f = _pair(actual, forecast)
    zeros = np.flatnonzero(a == 0.0)
    if zeros.size:
        idx = int(zeros[0])
        raise MetricError(f"MAPE undefined: actual value at index {idx} is zero", index=idx)
    return float(100.0 * np.mean(np.abs(a - f) / np.abs(a)))


def rmse(actual: ArrayLike, forecast: ArrayLike) -> float:
    """
    Root mean squared error.

    Example:
        >>> rmse([0.0, 0.0], [3.0, 4.0])  # sqrt(12.5)
        3.5355339059327378
    """
    a, f = _pair(actual, forecast)
    return float(np.sqrt(np.mean((a - f) ** 2)))


def percentage_difference(error_alternative: float, error_reference: float) -> float:
    """
    Relative improvement of a reference model over an alternative, in percent.

    Formula: PD = 100 * (E_a - E_r) / E_a

    Raises:
        MetricError: alternative error not positive
    """
    if not error_alternative > 0.0:
        raise MetricError(f"percentage difference needs a positive alternative error, got {error_alternative}")
    return 100.0 * (error_alternative - error_reference) / error_alternative
