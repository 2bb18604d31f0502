"""
hybrid_mortality - Hybrid ARIMA + Neural Network Mortality Forecasting

An ARIMA model captures the linear structure of each age-specific
log-mortality series and a neural network (MLP, LSTM or N-BEATS) learns
the residuals, under a recursive, direct or MIMO multi-step strategy.
"""

__version__ = "1.0.0"

from .timeseries import TimeSeries, SplitSpec, log_transform, minmax_normalize, denormalize, split, make_windows
from .arima import ArimaOrder, ArimaModel, ArimaConfig, select_order, difference, integrate
from .neural import NetworkSpec, TrainedNetwork, init, train, grad_check
from .strategy import StrategyModel, fit_strategy, forecast_recursive, forecast_direct, forecast_mimo
from .hybrid import HybridModel, fit_hybrid, forecast_hybrid
from .hpo import SearchSpace, optimize, random_search, validation_objective
from .demographic import (
    KEY_AGES,
    MortalitySurface,
    LeeCarterParams,
    parse_surface,
    synthesize_surface,
    extract_series,
    interpolate_curve,
    fit_lee_carter,
    forecast_lee_carter,
)
from .metrics import mape, rmse, percentage_difference
from .evaluation import BenchmarkReport, run_benchmark, rank_models

__all__ = [
    "TimeSeries",
    "SplitSpec",
    "log_transform",
    "minmax_normalize",
    "denormalize",
    "split",
    "make_windows",
    "ArimaOrder",
    "ArimaModel",
    "ArimaConfig",
    "select_order",
    "difference",
    "integrate",
    "NetworkSpec",
    "TrainedNetwork",
    "init",
    "train",
    "grad_check",
    "StrategyModel",
    "fit_strategy",
    "forecast_recursive",
    "forecast_direct",
    "forecast_mimo",
    "HybridModel",
    "fit_hybrid",
    "forecast_hybrid",
    "SearchSpace",
    "optimize",
    "random_search",
    "validation_objective",
    "KEY_AGES",
    "MortalitySurface",
    "LeeCarterParams",
    "parse_surface",
    "synthesize_surface",
    "extract_series",
    "interpolate_curve",
    "fit_lee_carter",
    "forecast_lee_carter",
    "mape",
    "rmse",
    "percentage_difference",
    "BenchmarkReport",
    "run_benchmark",
    "rank_models",
]
