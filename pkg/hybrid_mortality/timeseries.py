"""
Core series representation shared by every model.

This module provides the TimeSeries container with transform provenance,
the natural-log and min-max transforms, the temporal train/validation/test
split, and supervised window construction for the three multi-step modes.

Lag vectors are stored oldest-first: the most recent observation is the
last column of every input row, in every mode.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from .exceptions import DegenerateScaleError, DomainError, SplitError, WindowError

logger = logging.getLogger(__name__)

WindowKind = Literal["recursive", "direct", "mimo"]


def _frozen_array(values: ArrayLike) -> NDArray[np.float64]:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


class Transform:
    """
    A reversible transformation recorded in a series' provenance log.

    Subclasses implement ``apply`` and ``invert`` on plain arrays.
    """

    name: str = "identity"

    def apply(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.asarray(values, dtype=np.float64)

    def invert(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.asarray(values, dtype=np.float64)


@dataclass(frozen=True)
class LogTransform(Transform):
    """Natural logarithm; inverse is the exponential."""

    name: str = "natural-log"

    def apply(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.log(values)

    def invert(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.exp(values)


@dataclass(frozen=True)
class MinMaxScaler(Transform):
    """
    Affine map of [lo, hi] onto [0, 1].

    Attributes:
        lo: Value mapped to 0
        hi: Value mapped to 1

    Example:
        >>> scaler = MinMaxScaler.fit([2.0, 4.0, 6.0])
        >>> scaler.normalize([4.0])
        array([0.5])
    """

    lo: float = 0.0
    hi: float = 1.0
    name: str = "minmax"

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi <= self.lo:
            raise DegenerateScaleError(
                f"scaler needs finite lo < hi, got lo={self.lo}, hi={self.hi}"
            )

    @classmethod
    def fit(cls, values: ArrayLike) -> MinMaxScaler:
        """
        Fit a scaler to the range of ``values``.

        Raises:
            DegenerateScaleError: fewer than two values or zero range
        """
        arr = np.asarray(values, dtype=np.float64).ravel()
        if arr.size < 2:
            raise DegenerateScaleError("min-max scaling needs at least 2 values")
        lo, hi = float(arr.min()), float(arr.max())
        if hi == lo:
            raise DegenerateScaleError(f"cannot scale a constant series (all values {lo})")
        return cls(lo, hi)

    @classmethod
    def identity(cls) -> MinMaxScaler:
        """Scaler that leaves values unchanged."""
        return cls(0.0, 1.0)

    @property
    def span(self) -> float:
        return self.hi - self.lo

    def normalize(self, values: ArrayLike) -> NDArray[np.float64]:
        return (np.asarray(values, dtype=np.float64) - self.lo) / self.span

    def denormalize(self, values: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(values, dtype=np.float64) * self.span + self.lo

    def apply(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.normalize(values)

    def invert(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.denormalize(values)


@dataclass(frozen=True)
class TimeSeries:
    """
    Ordered real-valued observations on consecutive integer time labels.

    Instances are immutable; transforms return new series and append to
    ``transform_log`` so the raw origin can always be restored.

    Attributes:
        values: Observations (read-only array, no NaN/Inf)
        start_index: Time label of the first value (e.g. a calendar year)
        transform_log: Transforms applied since the raw origin, oldest first

    Example:
        >>> s = TimeSeries([0.01, 0.009, 0.0085], start_index=1950)
        >>> s.end_index
        1952
    """

    values: NDArray[np.float64]
    start_index: int = 0
    transform_log: tuple[Transform, ...] = field(default_factory=tuple)

    def __post_init__(self):
        arr = _frozen_array(self.values).ravel()
        if arr.size == 0:
            raise ValueError("a TimeSeries needs at least one value")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValueError(f"non-finite value at index {bad}")
        arr.setflags(write=False)
        object.__setattr__(self, 'values', arr)
        object.__setattr__(self, 'start_index', int(self.start_index))
        object.__setattr__(self, 'transform_log', tuple(self.transform_log))

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def end_index(self) -> int:
        """Time label of the last value."""
        return self.start_index + len(self) - 1

    @property
    def index(self) -> NDArray[np.int64]:
        """Consecutive time labels."""
        return np.arange(self.start_index, self.end_index + 1)

    def position(self, label: int) -> int:
        """Array position of a time label (may fall outside the series)."""
        return int(label) - self.start_index

    def window(self, first: int, last: int) -> TimeSeries:
        """
        Sub-series between two time labels, both inclusive.

        Raises:
            ValueError: empty or out-of-range window
        """
        lo, hi = self.position(first), self.position(last)
        if lo < 0 or hi >= len(self) or hi < lo:
            raise ValueError(
                f"window [{first}, {last}] outside series [{self.start_index}, {self.end_index}]"
            )
        return TimeSeries(self.values[lo:hi + 1], first, self.transform_log)

    def derive(
        self,
        values: ArrayLike,
        transform: Transform,
        start_index: int | None = None
    ) -> TimeSeries:
        """New series produced from this one by ``transform``."""
        start = self.start_index if start_index is None else start_index
        return TimeSeries(values, start, self.transform_log + (transform,))

    def restore(self) -> TimeSeries:
        """
        Replay the transform log backwards to recover the raw series.

        Returns:
            Series on the raw scale with an empty transform log
        """
        values = np.asarray(self.values, dtype=np.float64)
        start = self.start_index
        for transform in reversed(self.transform_log):
            before = values.size
            values = transform.invert(values)
            start -= values.size - before
        return TimeSeries(values, start)

    def __repr__(self) -> str:
        names = ",".join(t.name for t in self.transform_log) or "raw"
        return f"TimeSeries(n={len(self)}, start={self.start_index}, transforms={names})"


SeriesLike = Union[TimeSeries, Sequence[float], NDArray[np.float64]]


def as_series(series: SeriesLike, start_index: int = 0) -> TimeSeries:
    """Wrap plain sequences in a TimeSeries, pass TimeSeries through."""
    if isinstance(series, TimeSeries):
        return series
    return TimeSeries(np.asarray(series, dtype=np.float64), start_index)


def log_transform(series: TimeSeries) -> TimeSeries:
    """
    Natural logarithm of every value.

    Args:
        series: Strictly positive series

    Returns:
        Log-scale series with ``natural-log`` appended to its transform log

    Raises:
        DomainError: a value is zero or negative (names the first index)

    Example:
        >>> log_transform(TimeSeries([1.0, np.e])).values
        array([0., 1.])
    """
    bad = np.flatnonzero(series.values <= 0)
    if bad.size:
        idx = int(bad[0])
        raise DomainError(
            f"log undefined for value {series.values[idx]} at index {idx}", index=idx
        )
    transform = LogTransform()
    return series.derive(transform.apply(series.values), transform)


def minmax_normalize(series: TimeSeries) -> tuple[TimeSeries, MinMaxScaler]:
    """
    Scale a series onto [0, 1].

    Args:
        series: Series with at least 2 distinct values

    Returns:
        Tuple of (normalized series, scaler used)

    Raises:
        DegenerateScaleError: constant or single-value series
    """
    scaler = MinMaxScaler.fit(series.values)
    return series.derive(scaler.normalize(series.values), scaler), scaler


def denormalize(series: TimeSeries, scaler: MinMaxScaler) -> TimeSeries:
    """Inverse of :func:`minmax_normalize`."""
    log = series.transform_log
    if log and log[-1] == scaler:
        log = log[:-1]
    return TimeSeries(scaler.denormalize(series.values), series.start_index, log)


@dataclass(frozen=True)
class SplitSpec:
    """
    Temporal split parameters.

    Attributes:
        train_end_index: Last time label of the training window
        val_fraction: Trailing share of the training window held out for validation
        horizon: Number of test points following ``train_end_index``
    """

    train_end_index: int
    val_fraction: float = 0.2
    horizon: int = 10

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be positive, got {self.horizon}")


def split(series: TimeSeries, spec: SplitSpec) -> tuple[TimeSeries, TimeSeries, TimeSeries]:
    """
    Split a series into train, validation and test windows.

    The test window is the ``horizon`` points after ``train_end_index``;
    validation is the trailing ``ceil(val_fraction * n)`` points of the
    n-point training window.

    Raises:
        SplitError: the series does not cover the requested windows

    Example:
        >>> years = TimeSeries(np.ones(70), start_index=1950)
        >>> [len(p) for p in split(years, SplitSpec(2009, 0.2, 10))]
        [48, 12, 10]
    """
    end = series.position(spec.train_end_index)
    required = end + 1 + spec.horizon
    if end < 1 or required > len(series):
        raise SplitError(
            f"split needs {required} points through label "
            f"{spec.train_end_index + spec.horizon}, series has {len(series)}",
            required=required,
            available=len(series),
        )
    window = end + 1
    n_val = math.ceil(round(spec.val_fraction * window, 9))
    n_train = window - n_val
    if n_train < 1:
        raise SplitError(
            f"training window of {window} points leaves no training data",
            required=window + 1,
            available=window,
        )
    values, start = series.values, series.start_index
    log = series.transform_log
    train = TimeSeries(values[:n_train], start, log)
    val = TimeSeries(values[n_train:window], start + n_train, log)
    test = TimeSeries(values[window:required], start + window, log)
    logger.debug("split %s -> train %d, val %d, test %d", series, n_train, n_val, spec.horizon)
    return train, val, test


@dataclass(frozen=True)
class WindowMode:
    """
    Window layout for one multi-step mode.

    ``step`` is the horizon offset h for direct windows, the horizon H
    for MIMO windows, and 1 for recursive windows.
    """

    kind: WindowKind
    step: int = 1

    def __post_init__(self):
        if self.kind not in ("recursive", "direct", "mimo"):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.step < 1:
            raise ValueError(f"window step must be positive, got {self.step}")
        if self.kind == "recursive" and self.step != 1:
            raise ValueError("recursive windows always have step 1")

    @classmethod
    def recursive(cls) -> WindowMode:
        return cls("recursive", 1)

    @classmethod
    def direct(cls, h: int) -> WindowMode:
        return cls("direct", h)

    @classmethod
    def mimo(cls, horizon: int) -> WindowMode:
        return cls("mimo", horizon)

    @property
    def target_width(self) -> int:
        return self.step if self.kind == "mimo" else 1

    def count(self, n: int, d: int) -> int:
        """Number of windows a series of length n yields with lag order d."""
        if self.kind == "recursive":
            return n - d
        if self.kind == "direct":
            return n - d - self.step + 1
        return n - d - self.step + 1


@dataclass(frozen=True)
class SupervisedDataset:
    """
    Lag-vector inputs paired with targets.

    Attributes:
        inputs: (n, d) array, oldest lag first
        targets: (n, w) array, nearest horizon first
        lag_order: d
        mode: Window layout that produced the pairs
    """

    inputs: NDArray[np.float64]
    targets: NDArray[np.float64]
    lag_order: int
    mode: WindowMode

    def __post_init__(self):
        object.__setattr__(self, 'inputs', _frozen_array(self.inputs))
        object.__setattr__(self, 'targets', _frozen_array(self.targets))

    def __len__(self) -> int:
        return int(self.inputs.shape[0])


def make_windows(series: SeriesLike, d: int, mode: WindowMode) -> SupervisedDataset:
    """
    Build supervised pairs from a series.

    Args:
        series: Source series (or plain array)
        d: Lag order
        mode: Recursive, direct(h) or mimo(H) layout

    Returns:
        SupervisedDataset with N - d, N - d - h + 1 or N - d - H + 1 pairs

    Raises:
        WindowError: not a single full window fits

    Example:
        >>> ds = make_windows(np.arange(1.0, 11.0), 2, WindowMode.recursive())
        >>> ds.inputs[0], ds.targets[0]
        (array([1., 2.]), array([3.]))
    """
    if d < 1:
        raise WindowError(f"lag order must be positive, got {d}")
    z = as_series(series).values
    n = mode.count(z.size, d)
    if n < 1:
        needed = z.size - n + 1
        raise WindowError(
            f"{mode.kind} windows with d={d}, step={mode.step} need at least "
            f"{needed} points, series has {z.size}"
        )
    lags = np.lib.stride_tricks.sliding_window_view(z, d)[:n]
    offset = d + mode.step - 1
    if mode.kind == "mimo":
        targets = np.lib.stride_tricks.sliding_window_view(z[d:], mode.step)[:n]
    else:
        targets = z[offset:offset + n, None]
    return SupervisedDataset(lags.copy(), targets.copy(), d, mode)


def read_series_csv(path: Union[str, Path]) -> TimeSeries:
    """
    Read a standalone series from CSV with columns ``index,value``.

    Raises:
        ValueError: missing columns or non-consecutive indices
    """
    frame = pd.read_csv(path)
    if list(frame.columns[:2]) != ["index", "value"]:
        raise ValueError(f"{path}: expected columns 'index,value', got {list(frame.columns)}")
    index = frame["index"].to_numpy(dtype=np.int64)
    if index.size > 1 and not np.all(np.diff(index) == 1):
        raise ValueError(f"{path}: indices must be consecutive integers")
    return TimeSeries(frame["value"].to_numpy(dtype=np.float64), int(index[0]))


def write_series_csv(series: TimeSeries, path: Union[str, Path]) -> None:
    """Write a series as CSV with columns ``index,value``."""
    frame = pd.DataFrame({"index": series.index, "value": series.values})
    frame.to_csv(path, index=False, float_format="%.17g")
