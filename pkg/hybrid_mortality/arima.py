"""
Linear statistical engine of the hybrid.

This module provides differencing and integration, ARIMA(p, d, q)
estimation by conditional sum of squares, automatic order selection,
iterated multi-step forecasting and residual extraction.

On the d-times differenced series w the model is written in intercept
form::

    w_t = c + phi_1 w_{t-1} + ... + phi_p w_{t-p}
            + e_t + theta_1 e_{t-1} + ... + theta_q e_{t-q}

with pre-sample innovations set to zero. The first ``d + p`` observations
of the original series have no fitted value.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import least_squares
from scipy.signal import lfilter
from statsmodels.stats.diagnostic import acorr_ljungbox
from statsmodels.tsa.stattools import kpss

from .exceptions import ConvergenceError, HorizonError, OrderError, SelectionError
from .records import Record
from .timeseries import SeriesLike, TimeSeries, Transform, as_series
from .utils import run_parallel

logger = logging.getLogger(__name__)

# 5% critical value of the KPSS level-stationarity statistic
KPSS_CRITICAL_5PCT = 0.463
STATIONARITY_TOLERANCE = 1e-6
MIN_FIT_LENGTH = 10


@dataclass(frozen=True)
class ArimaOrder:
    """
    ARIMA order (p, d, q).

    Raises:
        OrderError: negative component, or the degenerate (0, 0, 0)
    """

    p: int
    d: int
    q: int

    def __post_init__(self):
        if min(self.p, self.d, self.q) < 0:
            raise OrderError(f"ARIMA orders must be non-negative, got {self}")
        if self.p + self.q == 0 and self.d == 0:
            raise OrderError("order (0, 0, 0) has no linear structure to fit")

    @property
    def has_intercept(self) -> bool:
        """An intercept (a drift when d = 1) is estimated whenever d <= 1."""
        return self.d <= 1

    @property
    def warmup(self) -> int:
        """Leading observations without a fitted value."""
        return self.d + self.p

    @property
    def min_length(self) -> int:
        return MIN_FIT_LENGTH + self.p + self.q + self.d

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})"


@dataclass(frozen=True)
class DifferenceTransform(Transform):
    """
    Repeated first differencing.

    ``heads[k]`` is the first value of the k-times differenced series,
    which is what integration needs to undo each level.
    """

    order: int = 1
    heads: tuple[float, ...] = ()
    name: str = "difference"

    def apply(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.diff(np.asarray(values, dtype=np.float64), n=self.order)

    def invert(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return integrate(values, self.heads)


def difference(series: SeriesLike, order: int) -> TimeSeries:
    """
    Difference a series ``order`` times.

    Args:
        series: Source series
        order: Number of differencing passes (0 returns the series unchanged)

    Returns:
        Series shorter by ``order``, starting ``order`` labels later

    Raises:
        ValueError: negative order, or order >= length

    Example:
        >>> difference(TimeSeries([1.0, 3.0, 6.0, 10.0]), 2).values
        array([1., 1.])
    """
    series = as_series(series)
    if order < 0:
        raise ValueError(f"differencing order must be non-negative, got {order}")
    if order == 0:
        return series
    if order >= len(series):
        raise ValueError(f"cannot difference {len(series)} points {order} times")
    heads = []
    level = series.values
    for _ in range(order):
        heads.append(float(level[0]))
        level = np.diff(level)
    transform = DifferenceTransform(order, tuple(heads))
    return series.derive(level, transform, series.start_index + order)


def integrate(values: ArrayLike, initial: float | Sequence[float]) -> NDArray[np.float64]:
    """
    Undo differencing.

    Args:
        values: Differenced values
        initial: First value of each differencing level, outermost first
            (a single float for order 1)

    Returns:
        Integrated values, longer by the number of initial values

    Example:
        >>> integrate([2.0, 3.0, 4.0], 1.0)
        array([ 1.,  3.,  6., 10.])
    """
    heads = [float(initial)] if np.isscalar(initial) else [float(h) for h in initial]
    out = np.asarray(values, dtype=np.float64)
    for head in reversed(heads):
        out = np.concatenate(([head], head + np.cumsum(out)))
    return out


def _ar_lags(w: NDArray[np.float64], p: int) -> NDArray[np.float64]:
    """Rows ``[w_{t-1}, ..., w_{t-p}]`` for t = p .. n-1."""
    if p == 0:
        return np.empty((w.size, 0))
    lags = np.lib.stride_tricks.sliding_window_view(w, p)[:w.size - p]
    return lags[:, ::-1]


def _innovations(
    w: NDArray[np.float64],
    intercept: float,
    ar: NDArray[np.float64],
    ma: NDArray[np.float64]
) -> NDArray[np.float64]:
    """
    Conditional innovations e_t for t >= p, with e_t = 0 before that.

    The MA recursion e_t + sum theta_j e_{t-j} = u_t is an IIR filter.
    """
    p = ar.size
    e = np.zeros_like(w)
    u = w[p:] - intercept - _ar_lags(w, p) @ ar
    e[p:] = lfilter([1.0], np.r_[1.0, ma], u)
    return e


def _unpack(params: NDArray[np.float64], order: ArimaOrder) -> tuple[float, NDArray, NDArray]:
    offset = int(order.has_intercept)
    intercept = float(params[0]) if offset else 0.0
    ar = np.asarray(params[offset:offset + order.p], dtype=np.float64)
    ma = np.asarray(params[offset + order.p:offset + order.p + order.q], dtype=np.float64)
    return intercept, ar, ma


def _initial_guess(w: NDArray[np.float64], order: ArimaOrder) -> NDArray[np.float64]:
    """OLS autoregression with zero MA terms."""
    columns = [_ar_lags(w, order.p)]
    if order.has_intercept:
        columns.insert(0, np.ones((w.size - order.p, 1)))
    design = np.hstack(columns)
    if design.shape[1] == 0:
        beta = np.empty(0)
    else:
        beta, *_ = np.linalg.lstsq(design, w[order.p:], rcond=None)
    return np.concatenate((beta, np.zeros(order.q)))


def is_stationary(ar: ArrayLike, tol: float = STATIONARITY_TOLERANCE) -> bool:
    """True when every root of 1 - phi_1 z - ... - phi_p z^p lies outside the unit circle."""
    ar = np.asarray(ar, dtype=np.float64)
    if ar.size == 0 or not np.any(ar):
        return True
    roots = np.roots(np.r_[-ar[::-1], 1.0])
    return bool(np.all(np.abs(roots) > 1.0 + tol))


@dataclass(frozen=True)
class ArimaModel:
    """
    A fitted ARIMA model.

    ``in_sample_fitted`` and ``residuals`` cover the history from position
    ``order.warmup`` onwards, on the original (undifferenced) scale, and
    ``residuals = history - in_sample_fitted`` holds exactly.

    Attributes:
        order: (p, d, q)
        ar_coeffs: phi_1 .. phi_p
        ma_coeffs: theta_1 .. theta_q
        intercept: c (drift when d = 1, zero when d >= 2)
        sigma2: Innovation variance
        in_sample_fitted: One-step fitted values
        residuals: Observed minus fitted
        training_log_likelihood: Conditional Gaussian log-likelihood
        history: Training series
        stationary: False when the AR polynomial has a root on or inside the unit circle
    """

    order: ArimaOrder
    ar_coeffs: NDArray[np.float64]
    ma_coeffs: NDArray[np.float64]
    intercept: float
    sigma2: float
    in_sample_fitted: NDArray[np.float64]
    residuals: NDArray[np.float64]
    training_log_likelihood: float
    history: TimeSeries
    stationary: bool = True

    @property
    def fitted_series(self) -> TimeSeries:
        return TimeSeries(self.in_sample_fitted, self.history.start_index + self.order.warmup)

    @property
    def residual_series(self) -> TimeSeries:
        """Residuals labelled with the time indices they belong to."""
        return TimeSeries(self.residuals, self.history.start_index + self.order.warmup)

    @property
    def n_params(self) -> int:
        """Estimated coefficients plus the innovation variance."""
        return self.order.p + self.order.q + int(self.order.has_intercept) + 1

    @property
    def aicc(self) -> float:
        """Corrected Akaike information criterion."""
        n_eff = len(self.history) - self.order.warmup
        k = self.n_params
        if n_eff - k - 1 <= 0:
            return math.inf
        aic = -2.0 * self.training_log_likelihood + 2.0 * k
        return aic + 2.0 * k * (k + 1) / (n_eff - k - 1)

    @classmethod
    def from_coefficients(
        cls,
        order: ArimaOrder,
        history: SeriesLike,
        ar: ArrayLike = (),
        ma: ArrayLike = (),
        intercept: float = 0.0,
        sigma2: Optional[float] = None,
        log_likelihood: Optional[float] = None,
    ) -> ArimaModel:
        """
        Build a model from known coefficients, filtering residuals from ``history``.

        Example:
            >>> m = ArimaModel.from_coefficients(ArimaOrder(1, 0, 0), [8.0] * 12, ar=[0.5])
            >>> forecast(m, 3)
            array([4., 2., 1.])
        """
        history = as_series(history)
        ar = np.asarray(ar, dtype=np.float64).ravel()
        ma = np.asarray(ma, dtype=np.float64).ravel()
        if ar.size != order.p or ma.size != order.q:
            raise OrderError(
                f"order {order} needs {order.p} AR and {order.q} MA coefficients, "
                f"got {ar.size} and {ma.size}"
            )
        z = history.values
        if z.size <= order.warmup:
            raise OrderError(f"history of {z.size} points is shorter than warm-up {order.warmup}")
        w = np.diff(z, n=order.d) if order.d else z
        e = _innovations(w, intercept, ar, ma)
        e_eff = e[order.p:]
        css = float(e_eff @ e_eff)
        if sigma2 is None:
            sigma2 = css / e_eff.size
        if log_likelihood is None:
            log_likelihood = _css_log_likelihood(sigma2, e_eff.size)

        # z_t = w_t + (z_t - w_t): the bracket only depends on earlier observations
        observed = z[order.warmup:]
        fitted_w = w[order.p:] - e_eff
        fitted = (observed - w[order.p:]) + fitted_w
        residuals = observed - fitted

        stationary = is_stationary(ar)
        if not stationary:
            warnings.warn(
                f"ARIMA{order} AR polynomial {ar.tolist()} is not stationary",
                RuntimeWarning,
                stacklevel=3,
            )
        return cls(
            order=order,
            ar_coeffs=_readonly(ar),
            ma_coeffs=_readonly(ma),
            intercept=float(intercept),
            sigma2=float(sigma2),
            in_sample_fitted=_readonly(fitted),
            residuals=_readonly(residuals),
            training_log_likelihood=float(log_likelihood),
            history=history,
            stationary=stationary,
        )

    def to_record(self) -> Record:
        """Plain-text record; residuals are re-filtered from the history on load."""
        record = Record("arima")
        record.set("order", f"{self.order.p} {self.order.d} {self.order.q}")
        record.set("ar", self.ar_coeffs)
        record.set("ma", self.ma_coeffs)
        record.set("intercept", self.intercept)
        record.set("sigma2", self.sigma2)
        record.set("log_likelihood", self.training_log_likelihood)
        record.set("start_index", self.history.start_index)
        record.set("history", self.history.values)
        return record

    @classmethod
    def from_record(cls, record: Record) -> ArimaModel:
        order = ArimaOrder(*record.get_ints("order"))
        history = TimeSeries(record.get_floats("history"), record.get_int("start_index"))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return cls.from_coefficients(
                order,
                history,
                ar=record.get_floats("ar"),
                ma=record.get_floats("ma"),
                intercept=record.get_float("intercept"),
                sigma2=record.get_float("sigma2"),
                log_likelihood=record.get_float("log_likelihood"),
            )


def _readonly(arr: NDArray[np.float64]) -> NDArray[np.float64]:
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _css_log_likelihood(sigma2: float, n_eff: int) -> float:
    if sigma2 <= 0.0:
        return math.inf
    return -0.5 * n_eff * (math.log(2.0 * math.pi * sigma2) + 1.0)


@dataclass(frozen=True)
class ArimaConfig:
    """
    How the linear stage obtains its model.

    Attributes:
        order: Fixed order, or None to run :func:`select_order`
        max_p: Largest AR order searched
        max_d: Largest differencing order searched
        max_q: Largest MA order searched
        max_evaluations: Residual evaluations allowed per least-squares fit
        n_jobs: Workers for the order grid
    """

    order: Optional[ArimaOrder] = None
    max_p: int = 5
    max_d: int = 2
    max_q: int = 5
    max_evaluations: int = 2000
    n_jobs: int = 1


def fit(series: SeriesLike, order: ArimaOrder, max_evaluations: int = 2000) -> ArimaModel:
    """
    Estimate an ARIMA model by conditional sum of squares.

    Pure AR models are solved exactly by least squares; models with MA
    terms are refined from the OLS autoregression with Levenberg-Marquardt.

    Args:
        series: Training series (original scale)
        order: (p, d, q)
        max_evaluations: Evaluation budget of the nonlinear solver

    Returns:
        Fitted ArimaModel

    Raises:
        OrderError: series shorter than 10 + p + q + d
        ConvergenceError: solver budget exhausted (carries the best parameters)
    """
    series = as_series(series)
    if len(series) < order.min_length:
        raise OrderError(
            f"ARIMA{order} needs at least {order.min_length} points, series has {len(series)}"
        )
    z = series.values
    w = np.diff(z, n=order.d) if order.d else z
    params = _initial_guess(w, order)

    if order.q > 0:
        def css_residuals(x: NDArray[np.float64]) -> NDArray[np.float64]:
            c, ar, ma = _unpack(x, order)
            return _innovations(w, c, ar, ma)[order.p:]

        result = least_squares(css_residuals, params, method="lm", max_nfev=max_evaluations)
        if result.status <= 0:
            raise ConvergenceError(
                f"ARIMA{order} CSS did not converge in {result.nfev} evaluations: {result.message}",
                best_params=result.x,
            )
        params = result.x

    intercept, ar, ma = _unpack(params, order)
    model = ArimaModel.from_coefficients(order, series, ar=ar, ma=ma, intercept=intercept)
    logger.debug(
        "fitted ARIMA%s: c=%.6g ar=%s ma=%s sigma2=%.6g",
        order, intercept, ar.round(4).tolist(), ma.round(4).tolist(), model.sigma2
    )
    return model


def kpss_statistic(values: ArrayLike) -> float:
    """KPSS level-stationarity statistic with automatic lag selection."""
    with warnings.catch_warnings():
        # p-values outside the lookup table are irrelevant, only the statistic is used
        warnings.simplefilter("ignore")
        stat, *_ = kpss(np.asarray(values, dtype=np.float64), regression="c", nlags="auto")
    return float(stat)


def choose_differencing(values: ArrayLike, max_d: int = 2) -> int:
    """
    Pick d by successive KPSS tests.

    Each pass differences again while the KPSS statistic rejects level
    stationarity at 5% and differencing reduces the variance.
    """
    x = np.asarray(values, dtype=np.float64)
    d = 0
    while d < max_d and x.size > MIN_FIT_LENGTH:
        dx = np.diff(x)
        if np.ptp(x) == 0.0:
            break
        if kpss_statistic(x) <= KPSS_CRITICAL_5PCT or np.var(dx) >= np.var(x):
            break
        x = dx
        d += 1
    return d


def _score_candidate(job: tuple[TimeSeries, ArimaOrder, int]) -> tuple[ArimaOrder, float]:
    series, order, max_evaluations = job
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            model = fit(series, order, max_evaluations)
    except (ConvergenceError, OrderError, np.linalg.LinAlgError) as exc:
        logger.debug("ARIMA%s skipped: %s", order, exc)
        return order, math.nan
    return order, model.aicc


def select_order(
    series: SeriesLike,
    max_p: int = 5,
    max_d: int = 2,
    max_q: int = 5,
    n_jobs: int = 1,
    max_evaluations: int = 2000,
) -> ArimaOrder:
    """
    Choose an ARIMA order automatically.

    d is fixed first by :func:`choose_differencing`; (p, q) then minimizes
    AICc over the grid, ties going to smaller p + q and then smaller p.

    Raises:
        SelectionError: constant series, or no candidate could be fitted
    """
    series = as_series(series)
    z = series.values
    if np.ptp(z) == 0.0:
        raise SelectionError("cannot select an ARIMA order for a constant series")
    d = choose_differencing(z, max_d)

    candidates = []
    for p, q in product(range(max_p + 1), range(max_q + 1)):
        if p + q == 0 and d == 0:
            continue
        order = ArimaOrder(p, d, q)
        if len(series) >= order.min_length:
            candidates.append(order)
    if not candidates:
        raise SelectionError(f"series of {len(series)} points is too short for any candidate")

    scored = run_parallel(
        _score_candidate, [(series, order, max_evaluations) for order in candidates], n_jobs
    )
    valid = [(aicc, order.p + order.q, order.p, order) for order, aicc in scored if not math.isnan(aicc)]
    if not valid:
        raise SelectionError(f"none of {len(candidates)} ARIMA candidates could be fitted")
    best = min(valid, key=lambda item: item[:3])[3]
    logger.info("selected ARIMA%s (d by KPSS, %d candidates)", best, len(candidates))
    return best


def fit_configured(series: SeriesLike, config: ArimaConfig) -> ArimaModel:
    """Fit with the configured order, selecting one first when none is set."""
    order = config.order
    if order is None:
        order = select_order(
            series, config.max_p, config.max_d, config.max_q,
            n_jobs=config.n_jobs, max_evaluations=config.max_evaluations,
        )
    return fit(series, order, config.max_evaluations)


def forecast(model: ArimaModel, H: int, history: Optional[SeriesLike] = None) -> NDArray[np.float64]:
    """
    Iterated conditional-expectation forecasts.

    Future innovations are zero. Forecasts are integrated back to the
    original scale.

    Args:
        model: Fitted model
        H: Horizon
        history: Series to condition on; defaults to the training history

    Returns:
        Array of H forecasts

    Raises:
        HorizonError: H < 1
    """
    if H < 1:
        raise HorizonError(f"forecast horizon must be at least 1, got {H}")
    order = model.order
    if history is None:
        z = model.history.values
        e_tail = np.asarray(model.residuals, dtype=np.float64)
    else:
        z = as_series(history).values
        if z.size <= order.warmup:
            raise OrderError(f"history of {z.size} points is shorter than warm-up {order.warmup}")
        w_hist = np.diff(z, n=order.d) if order.d else z
        e_tail = _innovations(w_hist, model.intercept, model.ar_coeffs, model.ma_coeffs)[order.p:]

    w = list(np.diff(z, n=order.d) if order.d else z)
    e = list(e_tail[-order.q:]) if order.q else []
    ar, ma = model.ar_coeffs, model.ma_coeffs
    n = len(w)
    out_w = np.empty(H)
    for h in range(H):
        value = model.intercept
        for i in range(order.p):
            value += ar[i] * w[n + h - 1 - i]
        # innovation e_{n+h-j} is known only while it lies in the sample
        for j in range(h + 1, order.q + 1):
            value += ma[j - 1] * e[len(e) - (j - h)]
        w.append(value)
        out_w[h] = value

    levels = [z]
    for _ in range(order.d):
        levels.append(np.diff(levels[-1]))
    out = out_w
    for k in range(order.d - 1, -1, -1):
        out = levels[k][-1] + np.cumsum(out)
    return out


def ljung_box(residuals: ArrayLike, lags: int = 10, fitted_params: int = 0) -> tuple[float, float]:
    """
    Ljung-Box portmanteau test of residual whiteness.

    Args:
        residuals: Model residuals
        lags: Autocorrelation lags pooled into the statistic
        fitted_params: Degrees of freedom consumed by the model (p + q)

    Returns:
        Tuple of (Q statistic, p-value)
    """
    table = acorr_ljungbox(np.asarray(residuals, dtype=np.float64), lags=[lags],
                           model_df=fitted_params)
    return float(table["lb_stat"].iloc[0]), float(table["lb_pvalue"].iloc[0])


def simulate_arma(
    ar: ArrayLike = (),
    ma: ArrayLike = (),
    n: int = 100,
    sigma: float = 1.0,
    seed: Optional[int] = None,
    intercept: float = 0.0,
    burn_in: int = 100,
    d: int = 0,
) -> NDArray[np.float64]:
    """
    Simulate an ARIMA process with Gaussian innovations.

    Args:
        ar: phi_1 .. phi_p
        ma: theta_1 .. theta_q
        n: Number of returned points
        sigma: Innovation standard deviation
        seed: RNG seed
        intercept: c in the intercept form (mean c / (1 - sum phi) when d = 0)
        burn_in: Leading points discarded so the start is close to stationary
        d: Integration order applied after simulation

    Example:
        >>> z = simulate_arma(ar=[0.8], n=500, seed=1)
        >>> z.shape
        (500,)
    """
    ar = np.asarray(ar, dtype=np.float64).ravel()
    ma = np.asarray(ma, dtype=np.float64).ravel()
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, sigma, n + burn_in)
    x = lfilter(np.r_[1.0, ma], np.r_[1.0, -ar], eps)[burn_in:]
    x = x + intercept / (1.0 - ar.sum()) if ar.sum() != 1.0 else x
    for _ in range(d):
        x = np.cumsum(x)
    return x
