"""
Command-line entry point.

    python -m hybrid_mortality ingest Mx_1x1.txt --first-year 1950 --out data
    python -m hybrid_mortality synth --seed 3 --out data
    python -m hybrid_mortality fit data/surface.txt --age 40 --sex female --model ARIMA-LSTM-recursive
    python -m hybrid_mortality forecast data/surface.txt out/model.txt --horizon 10
    python -m hybrid_mortality hpo data/surface.txt --age 40 --model ARIMA-MLP-recursive --train-end 2009
    python -m hybrid_mortality benchmark configs/smoke.yaml --out results

Exit codes: 0 success, 1 runtime failure (or failed benchmark cells),
2 invalid configuration or usage. Nothing is written on exit code 2.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml
from pydantic import ValidationError

from . import __version__, arima, evaluation, hpo, hybrid, strategy
from .config import (
    ArimaSettings,
    HpoSettings,
    NetworkSettings,
    RunConfig,
    SyntheticSpec,
    dump_config,
    load_config,
)
from .demographic import (
    LeeCarterParams,
    MortalitySurface,
    curves_frame,
    extract_series,
    fit_lee_carter,
    forecast_lee_carter,
    read_surface,
    synthesize_surface,
    write_surface,
)
from .exceptions import ConfigError, DataError, ForecastingError, ParseError
from .hybrid import HybridModel
from .neural import NetworkSpec
from .records import Record, read_records, write_records
from .strategy import StrategyModel
from .timeseries import SplitSpec, TimeSeries, log_transform, split

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Master seed (default 0)")
    parser.add_argument("--jobs", type=int, default=-1, help="Worker processes, -1 for every core")
    parser.add_argument("--out", type=Path, default=Path("out"), help="Output directory")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")


def _add_series(parser: argparse.ArgumentParser, model_required: bool = True) -> None:
    parser.add_argument("--age", type=int, default=None, help="Single age, 0..100")
    parser.add_argument("--sex", choices=("female", "male", "total"), default="total")
    parser.add_argument("--train-end", type=int, default=None, help="Last year used for fitting")
    parser.add_argument("--model", required=model_required,
                        help="ARIMA, LC, <family>-<mode> or ARIMA-<family>-<mode>")
    parser.add_argument("--horizon", type=int, default=10)
    parser.add_argument("--lag-order", type=int, default=2)


def _add_network(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--order", type=int, nargs=3, metavar=("P", "D", "Q"), default=None,
                        help="Fixed ARIMA order (default: select by AICc)")
    parser.add_argument("--hidden-units", type=int, default=16)
    parser.add_argument("--learning-rate", type=float, default=1e-3)
    parser.add_argument("--activation", choices=("tanh", "relu"), default="tanh")
    parser.add_argument("--layers", type=int, default=1, help="Layers per N-BEATS block")
    parser.add_argument("--max-iterations", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybrid-mortality",
        description="Hybrid ARIMA + neural network mortality forecasting.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    ingest = commands.add_parser("ingest", help="Parse an HMD Mx_1x1 file")
    ingest.add_argument("path", type=Path)
    ingest.add_argument("--first-year", type=int, default=None)
    ingest.add_argument("--last-year", type=int, default=None)
    _add_common(ingest)

    synth = commands.add_parser("synth", help="Generate a synthetic Lee-Carter surface")
    synth.add_argument("--first-year", type=int, default=1950)
    synth.add_argument("--last-year", type=int, default=2019)
    synth.add_argument("--drift", type=float, default=-1.0)
    synth.add_argument("--noise", type=float, default=0.02)
    synth.add_argument("--kt-volatility", type=float, default=0.0)
    _add_common(synth)

    fit = commands.add_parser("fit", help="Fit one model to one age of a surface")
    fit.add_argument("surface", type=Path)
    _add_series(fit)
    _add_network(fit)
    _add_common(fit)

    forecast = commands.add_parser("forecast", help="Forecast with a fitted model")
    forecast.add_argument("surface", type=Path)
    forecast.add_argument("model_file", type=Path)
    forecast.add_argument("--horizon", type=int, default=10)
    _add_common(forecast)

    search = commands.add_parser("hpo", help="Tune a network model on the validation window")
    search.add_argument("surface", type=Path)
    _add_series(search)
    search.add_argument("--order", type=int, nargs=3, metavar=("P", "D", "Q"), default=None)
    search.add_argument("--val-fraction", type=float, default=0.2)
    search.add_argument("--method", choices=("bayes", "random"), default="bayes")
    search.add_argument("--trials", type=int, default=10)
    search.add_argument("--seeds", type=int, default=5)
    search.add_argument("--max-iterations", type=int, default=500)
    _add_common(search)

    benchmark = commands.add_parser("benchmark", help="Run a benchmark configuration")
    benchmark.add_argument("config", type=Path)
    _add_common(benchmark)
    return parser


def _arima_settings(args: argparse.Namespace) -> ArimaSettings:
    order = getattr(args, "order", None)
    return ArimaSettings(order=tuple(order) if order else None)


def _run_config(args: argparse.Namespace) -> RunConfig:
    """
    Resolve and validate the command's settings before anything runs.

    Raises:
        ConfigError: invalid values or an invalid benchmark file
    """
    values: dict = {
        "command": args.command,
        "out": args.out,
        "seed": args.seed if args.seed is not None else 0,
        "jobs": args.jobs,
    }
    try:
        if args.command == "ingest":
            values.update(inputs=[args.path], first_year=args.first_year, last_year=args.last_year)
        elif args.command == "synth":
            values["synthetic"] = SyntheticSpec(
                first_year=args.first_year, last_year=args.last_year, drift=args.drift,
                noise=args.noise, kt_volatility=args.kt_volatility, seed=values["seed"],
            )
        elif args.command in ("fit", "hpo"):
            values.update(
                inputs=[args.surface], age=args.age, sex=args.sex, train_end=args.train_end,
                model=args.model, horizon=args.horizon, lag_order=args.lag_order,
                arima=_arima_settings(args),
            )
            if args.command == "fit":
                values["network"] = NetworkSettings(
                    hidden_units=args.hidden_units, learning_rate=args.learning_rate,
                    activation=args.activation, n_hidden_layers=args.layers,
                    max_iterations=args.max_iterations,
                )
            else:
                values["val_fraction"] = args.val_fraction
                values["hpo"] = HpoSettings(
                    method=args.method, n_trials=args.trials, n_seeds=args.seeds,
                    max_iterations=args.max_iterations,
                )
        elif args.command == "forecast":
            values.update(inputs=[args.surface, args.model_file], horizon=args.horizon)
        else:
            benchmark = load_config(args.config)
            if args.seed is not None:
                benchmark = benchmark.model_copy(update={"seed": args.seed})
            values.update(inputs=[args.config], seed=benchmark.seed, benchmark=benchmark)
        config = RunConfig(**values)
    except ValidationError as exc:
        raise ConfigError("; ".join(
            f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()
        )) from exc
    _check_required(config)
    return config


def _check_required(config: RunConfig) -> None:
    if config.command in ("fit", "hpo"):
        key = evaluation.parse_model_name(config.model)
        if key.kind != "lee_carter" and config.age is None:
            raise ConfigError(f"{config.model} needs --age")
        if config.command == "hpo":
            if not key.is_network:
                raise ConfigError(f"hpo tunes network models, got {config.model}")
            if config.train_end is None:
                raise ConfigError("hpo needs --train-end")


def _age_series(surface: MortalitySurface, age: int, sex: str, train_end: Optional[int]) -> TimeSeries:
    series = log_transform(extract_series(surface, age, sex))
    if train_end is None:
        return series
    return series.window(series.start_index, train_end)


def _cmd_ingest(config: RunConfig) -> int:
    surface = read_surface(config.inputs[0], config.first_year, config.last_year)
    write_surface(surface, config.out / "surface.txt")
    print(surface.summary())
    return EXIT_OK


def _cmd_synth(config: RunConfig) -> int:
    spec = config.synthetic
    surface = synthesize_surface(spec.to_params(), spec.seed)
    write_surface(surface, config.out / "surface.txt")
    print(surface.summary())
    return EXIT_OK


def _cmd_fit(config: RunConfig) -> int:
    surface = read_surface(config.inputs[0])
    key = evaluation.parse_model_name(config.model)
    header = Record("model")
    header.set("name", config.model)
    header.set("sex", config.sex)
    header.set("train_end", config.train_end if config.train_end is not None else int(surface.years[-1]))

    if key.kind == "lee_carter":
        fitted = surface if config.train_end is None else surface.select_years(int(surface.years[0]),
                                                                               config.train_end)
        records = [fit_lee_carter(fitted, config.sex).to_record()]
    else:
        header.set("age", config.age)
        series = _age_series(surface, config.age, config.sex, config.train_end)
        arima_cfg = config.arima.to_config(config.jobs)
        seed = config.seed
        if key.kind == "arima":
            records = [arima.fit_configured(series, arima_cfg).to_record()]
        elif key.kind == "hybrid":
            spec = config.network.to_spec(key.family)
            model = hybrid.fit_hybrid(series, arima_cfg, spec, key.mode, config.lag_order,
                                      config.horizon, seed, config.jobs)
            records = model.to_records()
        else:
            spec = config.network.to_spec(key.family)
            records = strategy.fit_strategy(series, key.mode, config.lag_order, config.horizon,
                                            spec, seed, config.jobs).to_records()
    path = config.out / "model.txt"
    write_records([header, *records], path)
    print(f"{config.model} written to {path}")
    return EXIT_OK


def _cmd_forecast(config: RunConfig) -> int:
    surface = read_surface(config.inputs[0])
    header, *records = read_records(config.inputs[1])
    if header.kind != "model":
        raise ParseError("model file must start with a [model] section", line=1)
    name, sex, train_end = header.get("name"), header.get("sex"), header.get_int("train_end")
    key = evaluation.parse_model_name(name)
    H = config.horizon
    years = np.arange(train_end + 1, train_end + H + 1)

    if key.kind == "lee_carter":
        params = LeeCarterParams.from_record(records[0])
        frame = curves_frame(forecast_lee_carter(params, H), years, params.ages)
    else:
        age = header.get_int("age")
        history = _age_series(surface, age, sex, train_end)
        if key.kind == "arima":
            values = arima.forecast(arima.ArimaModel.from_record(records[0]), H, history)
        elif key.kind == "hybrid":
            values = hybrid.forecast_hybrid(HybridModel.from_records(records), H, history)
        else:
            values = strategy.forecast(StrategyModel.from_records(records), history, H)
        frame = curves_frame(np.asarray(values)[:, None], years, [age])
    path = config.out / "forecast.csv"
    frame.to_csv(path, index=False, float_format="%.10g")
    print(f"{H}-year {name} forecast written to {path}")
    return EXIT_OK


def _cmd_hpo(config: RunConfig) -> int:
    surface = read_surface(config.inputs[0])
    key = evaluation.parse_model_name(config.model)
    series = log_transform(extract_series(surface, config.age, config.sex))
    train, val, _ = split(series, SplitSpec(config.train_end, config.val_fraction, config.horizon))
    objective = hpo.validation_objective(
        key.family, key.mode, train, val, config.lag_order,
        hybrid=key.kind == "hybrid", arima_config=config.arima.to_config(config.jobs),
    )
    settings = config.hpo
    space = hpo.SearchSpace(key.family, base=NetworkSpec(family=key.family,
                                                             max_iterations=settings.max_iterations))
    search = hpo.optimize if settings.method == "bayes" else hpo.random_search
    best, history = search(objective, space, settings.n_trials, settings.n_seeds, config.seed,
                           n_jobs=config.jobs)
    hpo.write_history_csv(history, config.out / "hpo_history.csv")
    (config.out / "best_config.yaml").write_text(yaml.safe_dump(best.to_dict(), sort_keys=False),
                                                 encoding="utf-8")
    score = min(t.mean_rmse for t in history)
    print(f"best {config.model}: hidden_units={best.hidden_units} "
          f"learning_rate={best.learning_rate:.3g} validation RMSE {score:.6g}")
    return EXIT_OK


def _cmd_benchmark(config: RunConfig) -> int:
    report = evaluation.run_benchmark(config.benchmark, n_jobs=config.jobs)
    written = evaluation.write_report(report, config.out)
    print(evaluation.render_text(report), end="")
    print(f"{len(written)} files written to {config.out}")
    if not report.ok:
        print(f"{len(report.failures)} cells failed", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


COMMANDS = {
    "ingest": _cmd_ingest,
    "synth": _cmd_synth,
    "fit": _cmd_fit,
    "forecast": _cmd_forecast,
    "hpo": _cmd_hpo,
    "benchmark": _cmd_benchmark,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command.

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        config = _run_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    config.out.mkdir(parents=True, exist_ok=True)
    dump_config(config, config.out / "run_config.yaml")
    try:
        return COMMANDS[config.command](config)
    except (ParseError, DataError) as exc:
        source = config.inputs[0] if config.inputs else "<input>"
        print(f"{source}:{exc.line}: {exc.detail}", file=sys.stderr)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except ForecastingError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
