"""
Mortality-specific layer.

This module provides the mortality surface (year x age x sex grid of
crude death rates), HMD Mx_1x1 text ingestion and serialization, a
synthetic Lee-Carter surface generator, key-age series extraction,
natural cubic spline reconstruction of full age curves, and the
Lee-Carter baseline fitted by SVD.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import CubicSpline

from .exceptions import DataError, DegenerateSurfaceError, DemographicError, ParseError
from .records import Record
from .timeseries import TimeSeries

logger = logging.getLogger(__name__)

SEXES: tuple[str, ...] = ("female", "male", "total")
MAX_AGE = 100
ALL_AGES: tuple[int, ...] = tuple(range(MAX_AGE + 1))
KEY_AGES: tuple[int, ...] = (0, 1, 2, 5, 10, 12, 15, 18, 20, 22, 25, 28, 30, 40, 50, 60, 70, 80, 90, 100)

HMD_COLUMNS = ("Year", "Age", "Female", "Male", "Total")


def sex_index(sex: str) -> int:
    try:
        return SEXES.index(sex.lower())
    except ValueError:
        raise DemographicError(f"sex must be one of {SEXES}, got {sex!r}") from None


@dataclass(frozen=True)
class MortalitySurface:
    """
    Crude mortality rates on a complete year x age x sex grid.

    Attributes:
        years: Consecutive calendar years
        ages: Consecutive single ages
        rates: Array of shape (n_years, n_ages, 3), sexes ordered female, male, total

    Raises:
        DemographicError: non-consecutive labels, wrong shape, or non-positive rates
    """

    years: NDArray[np.int64]
    ages: NDArray[np.int64]
    rates: NDArray[np.float64]

    def __post_init__(self):
        years = np.asarray(self.years, dtype=np.int64).ravel()
        ages = np.asarray(self.ages, dtype=np.int64).ravel()
        rates = np.array(self.rates, dtype=np.float64)
        for name, labels in (("years", years), ("ages", ages)):
            if labels.size == 0 or np.any(np.diff(labels) != 1):
                raise DemographicError(f"{name} must be non-empty consecutive integers")
        if rates.shape != (years.size, ages.size, len(SEXES)):
            raise DemographicError(
                f"rates shape {rates.shape} does not match ({years.size}, {ages.size}, {len(SEXES)})"
            )
        if not np.all(np.isfinite(rates)) or np.any(rates <= 0.0):
            raise DemographicError("mortality rates must be finite and positive")
        for arr in (years, ages, rates):
            arr.setflags(write=False)
        object.__setattr__(self, 'years', years)
        object.__setattr__(self, 'ages', ages)
        object.__setattr__(self, 'rates', rates)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.rates.shape

    def summary(self) -> str:
        """Human-readable size, e.g. ``70 years, 101 ages, 3 sexes``."""
        return f"{self.years.size} years, {self.ages.size} ages, {len(SEXES)} sexes"

    def age_position(self, age: int) -> int:
        pos = int(age) - int(self.ages[0])
        if not 0 <= pos < self.ages.size:
            raise DemographicError(f"age {age} outside [{self.ages[0]}, {self.ages[-1]}]")
        return pos

    def year_position(self, year: int) -> int:
        pos = int(year) - int(self.years[0])
        if not 0 <= pos < self.years.size:
            raise DemographicError(f"year {year} outside [{self.years[0]}, {self.years[-1]}]")
        return pos

    def log_rates(self, sex: str) -> NDArray[np.float64]:
        """Log rates for one sex, shape (n_years, n_ages)."""
        return np.log(self.rates[:, :, sex_index(sex)])

    def select_years(self, first: int, last: int) -> MortalitySurface:
        """Sub-surface restricted to ``first..last`` inclusive."""
        lo, hi = self.year_position(first), self.year_position(last)
        if hi < lo:
            raise DemographicError(f"empty year range {first}-{last}")
        return MortalitySurface(self.years[lo:hi + 1], self.ages, self.rates[lo:hi + 1])


def _parse_rate(token: str, column: str, number: int) -> float:
    if token == ".":
        raise DataError(f"missing {column} rate", line=number)
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{column} rate {token!r} is not a number", line=number) from None
    if not np.isfinite(value) or value <= 0.0:
        raise DataError(f"{column} rate {token} is not positive", line=number)
    return value


def parse_surface(
    text: str,
    first_year: Optional[int] = None,
    last_year: Optional[int] = None,
    max_age: int = MAX_AGE,
) -> MortalitySurface:
    """
    Parse an HMD Mx_1x1 table.

    Lines before the ``Year Age Female Male Total`` header are skipped.
    Ages above ``max_age`` (including the open ``110+`` group) are dropped,
    as are years outside the optional range.

    Args:
        text: File contents
        first_year: Earliest year kept
        last_year: Latest year kept
        max_age: Oldest single age kept

    Returns:
        MortalitySurface

    Raises:
        ParseError: missing header or a malformed row (carries the line number)
        DataError: missing (``.``) or non-positive cell, duplicate or absent grid cells

    Example:
        >>> s = parse_surface("Year Age Female Male Total\\n1950 0 0.02 0.03 0.025\\n1950 1 0.002 0.003 0.0025\\n")
        >>> s.summary()
        '1 years, 2 ages, 3 sexes'
    """
    cells: dict[tuple[int, int], tuple[float, float, float]] = {}
    header_seen = False
    for number, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if not header_seen:
            if tokens[0] == "Year":
                if tuple(tokens) != HMD_COLUMNS:
                    raise ParseError(f"expected columns {' '.join(HMD_COLUMNS)}, got {raw.strip()!r}",
                                     line=number)
                header_seen = True
            continue
        if len(tokens) != len(HMD_COLUMNS):
            raise ParseError(f"expected {len(HMD_COLUMNS)} fields, got {len(tokens)}", line=number)
        try:
            year = int(tokens[0])
            age = int(tokens[1].rstrip("+"))
        except ValueError:
            raise ParseError(f"bad year/age {tokens[0]!r} {tokens[1]!r}", line=number) from None
        if age > max_age:
            continue
        if (first_year is not None and year < first_year) or (last_year is not None and year > last_year):
            continue
        values = tuple(_parse_rate(tok, col, number) for tok, col in zip(tokens[2:], HMD_COLUMNS[2:]))
        if (year, age) in cells:
            raise DataError(f"duplicate row for year {year}, age {age}", line=number)
        cells[(year, age)] = values

    if not header_seen:
        raise ParseError("no 'Year Age Female Male Total' header found", line=0)
    if not cells:
        raise DataError("no rows left after filtering", line=0)

    years = np.arange(min(y for y, _ in cells), max(y for y, _ in cells) + 1)
    ages = np.arange(min(a for _, a in cells), max(a for _, a in cells) + 1)
    rates = np.empty((years.size, ages.size, len(SEXES)))
    for i, year in enumerate(years):
        for j, age in enumerate(ages):
            try:
                rates[i, j] = cells[(int(year), int(age))]
            except KeyError:
                raise DataError(f"grid incomplete: no row for year {year}, age {age}", line=0) from None
    surface = MortalitySurface(years, ages, rates)
    logger.info("parsed surface: %s (%d-%d)", surface.summary(), years[0], years[-1])
    return surface


def serialize_surface(surface: MortalitySurface, title: str = "Mortality rates, Mx_1x1") -> str:
    """HMD-compatible text with exactly round-tripping floats."""
    lines = [title, "", "  ".join(HMD_COLUMNS)]
    for i, year in enumerate(surface.years):
        for j, age in enumerate(surface.ages):
            f, m, t = (repr(float(v)) for v in surface.rates[i, j])
            lines.append(f"{year}  {age}  {f}  {m}  {t}")
    return "\n".join(lines) + "\n"


def read_surface(
    path: Union[str, Path],
    first_year: Optional[int] = None,
    last_year: Optional[int] = None,
) -> MortalitySurface:
    """Parse an HMD Mx_1x1 file."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_surface(text, first_year, last_year)


def write_surface(surface: MortalitySurface, path: Union[str, Path]) -> None:
    Path(path).write_text(serialize_surface(surface), encoding="utf-8")


# ---------------------------------------------------------------------------
# Synthetic surfaces
# ---------------------------------------------------------------------------

def _default_sex_offsets() -> dict[str, float]:
    return {"female": -0.15, "male": 0.15, "total": 0.0}


@dataclass(frozen=True)
class SyntheticSurfaceParams:
    """
    Ground-truth Lee-Carter structure of a generated surface.

    log m(x, t) = a_x + offset_sex + b_x k_t + noise

    a_x follows a Heligman-Pollard-like shape (infant, hump-free adult
    level, Gompertz senescence), b_x declines linearly with age and sums
    to 1, and k_t is a centered linear path with slope ``drift`` plus an
    optional centered random walk of step size ``kt_volatility``.

    Attributes:
        first_year: First calendar year
        last_year: Last calendar year
        drift: Slope of k_t per year
        noise: Standard deviation of the i.i.d. log-rate noise
        kt_volatility: Step size of the random-walk component of k_t
        max_age: Oldest age
        sex_offsets: Additive log-level shift per sex
    """

    first_year: int = 1950
    last_year: int = 2019
    drift: float = -1.0
    noise: float = 0.02
    kt_volatility: float = 0.0
    max_age: int = MAX_AGE
    sex_offsets: dict[str, float] = field(default_factory=_default_sex_offsets)

    def __post_init__(self):
        if self.last_year <= self.first_year:
            raise DemographicError("a synthetic surface needs at least two years")
        if self.noise < 0 or self.kt_volatility < 0:
            raise DemographicError("noise and kt_volatility must be non-negative")

    @property
    def years(self) -> NDArray[np.int64]:
        return np.arange(self.first_year, self.last_year + 1)

    @property
    def ages(self) -> NDArray[np.int64]:
        return np.arange(self.max_age + 1)

    def a_x(self) -> NDArray[np.float64]:
        x = self.ages.astype(np.float64)
        return np.log(0.006 * np.exp(-1.5 * x) + 0.0002 + 0.00003 * np.exp(0.095 * x))

    def b_x(self) -> NDArray[np.float64]:
        raw = 1.5 - self.ages / 100.0
        return raw / raw.sum()

    def k_t(self) -> NDArray[np.float64]:
        t = self.years.astype(np.float64)
        return self.drift * (t - t.mean())


def expected_log_rates(params: SyntheticSurfaceParams, sex: str = "total") -> NDArray[np.float64]:
    """Noise-free log rates, shape (n_years, n_ages)."""
    offset = params.sex_offsets[SEXES[sex_index(sex)]]
    return params.a_x()[None, :] + offset + np.outer(params.k_t(), params.b_x())


def synthesize_surface(params: SyntheticSurfaceParams, seed: Optional[int] = None) -> MortalitySurface:
    """
    Generate a surface with known Lee-Carter structure.

    Example:
        >>> s = synthesize_surface(SyntheticSurfaceParams(noise=0.0), seed=1)
        >>> s.summary()
        '70 years, 101 ages, 3 sexes'
    """
    rng = np.random.default_rng(seed)
    years, ages = params.years, params.ages
    k = params.k_t()
    if params.kt_volatility > 0:
        walk = np.cumsum(rng.normal(0.0, params.kt_volatility, years.size))
        k = k + walk - walk.mean()
    base = params.a_x()[None, :] + np.outer(k, params.b_x())
    rates = np.empty((years.size, ages.size, len(SEXES)))
    for s, sex in enumerate(SEXES):
        noise = rng.normal(0.0, params.noise, (years.size, ages.size)) if params.noise > 0 else 0.0
        rates[:, :, s] = np.exp(base + params.sex_offsets[sex] + noise)
    return MortalitySurface(years, ages, rates)


# ---------------------------------------------------------------------------
# Series and curves
# ---------------------------------------------------------------------------

def extract_series(surface: MortalitySurface, age: int, sex: str) -> TimeSeries:
    """
    Crude rates of one age and sex over all years (not log-transformed).

    Raises:
        DemographicError: age outside the grid or unknown sex
    """
    column = surface.rates[:, surface.age_position(age), sex_index(sex)]
    return TimeSeries(column.copy(), int(surface.years[0]))


def _check_knots(key_ages: Sequence[int], values: NDArray[np.float64]) -> NDArray[np.float64]:
    knots = np.asarray(key_ages, dtype=np.float64)
    if knots.ndim != 1 or knots.size < 2:
        raise DemographicError("at least two key ages are needed")
    if np.any(np.diff(knots) <= 0):
        raise DemographicError(f"key ages must be strictly increasing, got {list(key_ages)}")
    if values.shape[-1] != knots.size:
        raise DemographicError(f"{knots.size} key ages but {values.shape[-1]} values")
    return knots


def interpolate_forecasts(
    key_ages: Sequence[int],
    values: ArrayLike,
    target_ages: Sequence[int] = ALL_AGES,
) -> NDArray[np.float64]:
    """
    Natural cubic spline through key-age values, row by row.

    Args:
        key_ages: Strictly increasing knot ages
        values: Array (..., n_keys), e.g. (H, 20) forecasts
        target_ages: Ages to evaluate, inside the knot range

    Returns:
        Array (..., len(target_ages))
    """
    values = np.asarray(values, dtype=np.float64)
    knots = _check_knots(key_ages, values)
    targets = np.asarray(target_ages, dtype=np.float64)
    if targets.min() < knots[0] or targets.max() > knots[-1]:
        raise DemographicError(
            f"target ages [{targets.min():g}, {targets.max():g}] exceed knots "
            f"[{knots[0]:g}, {knots[-1]:g}]"
        )
    spline = CubicSpline(knots, values, axis=-1, bc_type="natural")
    return spline(targets)


def interpolate_curve(
    key_ages: Sequence[int],
    log_rates_at_keys: ArrayLike,
    target_ages: Sequence[int] = ALL_AGES,
) -> NDArray[np.float64]:
    """
    Full log-mortality curve from its key-age values.

    Example:
        >>> keys = np.array(KEY_AGES)
        >>> curve = interpolate_curve(keys, np.log(0.001) + 0.08 * keys)
        >>> round(curve[35], 4)
        -4.1078
    """
    values = np.asarray(log_rates_at_keys, dtype=np.float64).ravel()
    return interpolate_forecasts(key_ages, values, target_ages)


def curves_frame(
    log_rates: ArrayLike,
    years: Sequence[int],
    ages: Sequence[int] = ALL_AGES,
) -> pd.DataFrame:
    """Long table with columns ``age, year, log_rate`` from a (years x ages) block."""
    block = np.asarray(log_rates, dtype=np.float64)
    grid_years, grid_ages = np.meshgrid(np.asarray(years), np.asarray(ages), indexing="ij")
    return pd.DataFrame({
        "age": grid_ages.ravel(),
        "year": grid_years.ravel(),
        "log_rate": block.ravel(),
    }).sort_values(["age", "year"], kind="stable").reset_index(drop=True)


# ---------------------------------------------------------------------------
# Lee-Carter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LeeCarterParams:
    """
    Fitted Lee-Carter model, log m(x, t) = a_x + b_x k_t.

    Attributes:
        ages: Ages of a_x and b_x
        years: Years of k_t
        a_x: Age-wise mean log rate
        b_x: Age loadings, summing to 1
        k_t: Period index, summing to 0
        drift: Mean first difference of k_t
        sigma2: Variance of the k_t first differences
    """

    ages: NDArray[np.int64]
    years: NDArray[np.int64]
    a_x: NDArray[np.float64]
    b_x: NDArray[np.float64]
    k_t: NDArray[np.float64]
    drift: float
    sigma2: float

    @property
    def drift_standard_error(self) -> float:
        n = self.k_t.size - 1
        return float(np.sqrt(self.sigma2 / n)) if n > 0 else float("inf")

    def fitted_log_rates(self) -> NDArray[np.float64]:
        return self.a_x[None, :] + np.outer(self.k_t, self.b_x)

    def to_record(self) -> Record:
        record = Record("lee_carter")
        record.set("first_age", int(self.ages[0]))
        record.set("first_year", int(self.years[0]))
        record.set("a_x", self.a_x)
        record.set("b_x", self.b_x)
        record.set("k_t", self.k_t)
        record.set("drift", self.drift)
        record.set("sigma2", self.sigma2)
        return record

    @classmethod
    def from_record(cls, record: Record) -> LeeCarterParams:
        a_x, k_t = record.get_floats("a_x"), record.get_floats("k_t")
        first_age, first_year = record.get_int("first_age"), record.get_int("first_year")
        return cls(
            ages=np.arange(first_age, first_age + a_x.size),
            years=np.arange(first_year, first_year + k_t.size),
            a_x=a_x,
            b_x=record.get_floats("b_x"),
            k_t=k_t,
            drift=record.get_float("drift"),
            sigma2=record.get_float("sigma2"),
        )


def fit_lee_carter(surface: MortalitySurface, sex: str = "total") -> LeeCarterParams:
    """
    Fit Lee-Carter by SVD of the centered log-rate matrix.

    A surface without temporal variation gives k_t = 0, uniform b_x and
    zero drift.

    Raises:
        DemographicError: fewer than 2 years or 2 ages
        DegenerateSurfaceError: leading loadings sum to zero and cannot be normalized
    """
    if surface.years.size < 2 or surface.ages.size < 2:
        raise DemographicError("Lee-Carter needs at least 2 years and 2 ages")
    log_m = surface.log_rates(sex)
    a_x = log_m.mean(axis=0)
    centered = log_m - a_x
    n_years, n_ages = centered.shape

    if np.abs(centered).max() <= 1e-12 * max(1.0, np.abs(log_m).max()):
        b_x = np.full(n_ages, 1.0 / n_ages)
        k_t = np.zeros(n_years)
    else:
        U, S, Vt = np.linalg.svd(centered, full_matrices=False)
        b_x = Vt[0].copy()
        k_t = S[0] * U[:, 0]
        scale = b_x.sum()
        if abs(scale) <= 1e-10 * np.abs(b_x).sum():
            raise DegenerateSurfaceError("leading age loadings sum to zero")
        b_x /= scale
        k_t = (k_t - k_t.mean()) * scale

    steps = np.diff(k_t)
    drift = float(steps.mean())
    sigma2 = float(steps.var(ddof=1)) if steps.size > 1 else 0.0
    logger.debug("Lee-Carter %s: drift %.4f, sigma2 %.4g", sex, drift, sigma2)
    return LeeCarterParams(surface.ages.copy(), surface.years.copy(), a_x, b_x, k_t, drift, sigma2)


def forecast_lee_carter(params: LeeCarterParams, H: int) -> NDArray[np.float64]:
    """
    Random walk with drift extrapolation of k_t.

    Returns:
        (H, n_ages) log-rate curves for the H years after the fit window
    """
    if H < 1:
        raise DemographicError(f"horizon must be at least 1, got {H}")
    k_future = params.k_t[-1] + params.drift * np.arange(1, H + 1)
    return params.a_x[None, :] + np.outer(k_future, params.b_x)
