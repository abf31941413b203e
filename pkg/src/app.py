"""Command-line front end: generate, fit, compare and eval."""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import Dict, List, NoReturn, Optional, Sequence, Tuple, Union

# Try to import uvloop for faster concurrent fitting on Unix systems
try:
    import uvloop
    UVLOOP_AVAILABLE = True
except ImportError:
    UVLOOP_AVAILABLE = False

import orjson

from src import __version__
from src.config import config
from src.data import series_stats
from src.errors import (
    AllStartsFailed,
    DataError,
    DegenerateConfig,
    DomainError,
    ParseError,
    TooFewPoints,
    UsageError,
)
from src.metrics import rank_models
from src.models import DatasetDescriptor, FitOptions, FitResult, NoiseConfig, Report, ReportEntry, TimeSeries
from src.registry import registry
from src.scenarios import SCENARIOS, generate, load_preset
from src.series_io import (
    MIN_CURVE_STEPS,
    emit_curve,
    format_csv,
    format_curve_csv,
    grid_times,
    parse_grid,
    read_csv,
    write_report,
)
from src.solver import multi_start_fit

# Set up logging: diagnostics on stderr, optionally mirrored to LOG_FILE
_handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
if config.LOG_FILE:
    _handlers.append(logging.FileHandler(config.LOG_FILE))

logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=_handlers,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NOT_CONVERGED = 3
EXIT_DOMAIN = 4


class ArgumentParser(argparse.ArgumentParser):
    """Parser that reports bad flags as UsageError instead of exiting."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(message)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="ode-curvefit", description="Fit and compare ODE-derived curve models")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("generate", help="Sample a scenario closed form, optionally with noise")
    gen.add_argument("--scenario", required=True, choices=list(SCENARIOS))
    gen.add_argument("--preset", required=True, help="Preset name (eq4, eq7, eq18, ...) or JSON file")
    gen.add_argument("--grid", required=True, help="start:end:count")
    gen.add_argument("--noise-sd", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    fit = commands.add_parser("fit", help="Fit one model to a CSV series")
    fit.add_argument("--data", required=True)
    fit.add_argument("--model", required=True)
    _add_solver_flags(fit)
    fit.add_argument("--out", required=True)

    compare = commands.add_parser("compare", help="Fit several models and rank them")
    compare.add_argument("--data", required=True)
    compare.add_argument("--models", default="all", help="Comma-separated model ids or 'all'")
    _add_solver_flags(compare)
    compare.add_argument("--out", required=True)
    compare.add_argument("--curves-dir", help="Write one fitted-curve CSV per model here")

    ev = commands.add_parser("eval", help="Evaluate a model on a grid")
    ev.add_argument("--model", required=True)
    ev.add_argument("--params", required=True, help="JSON object or path to a JSON file")
    ev.add_argument("--grid", required=True, help="start:end:count, count >= 3")
    ev.add_argument("--out", required=True)

    return parser


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--starts", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--max-iter", type=int)


def _write(path: Union[str, Path], data: bytes) -> None:
    target = Path(path)
    try:
        target.write_bytes(data)
    except OSError as e:
        raise DataError(f"cannot write {target}: {e}") from e
    logger.info(f"Wrote {target}")


class CurveFitApp:
    """Runs one parsed CLI invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args

    def solver_options(self) -> FitOptions:
        """Config defaults overridden by --starts, --seed and --max-iter."""
        overrides = {
            "starts": self.args.starts,
            "seed": self.args.seed,
            "max_iterations": self.args.max_iter,
        }
        try:
            return FitOptions(**{name: value for name, value in overrides.items() if value is not None})
        except ValueError as e:
            raise UsageError(f"invalid solver flags: {e}") from e

    def dispatch(self) -> int:
        command = self.args.command
        if command == "compare":
            if UVLOOP_AVAILABLE:
                return uvloop.run(self.compare())
            return asyncio.run(self.compare())
        if command == "generate":
            return self.generate()
        if command == "fit":
            return self.fit()
        return self.eval()

    def generate(self) -> int:
        cfg = load_preset(self.args.scenario, self.args.preset)
        start, end, count = parse_grid(self.args.grid)
        try:
            noise = NoiseConfig(sd=self.args.noise_sd, seed=self.args.seed)
        except ValueError as e:
            raise UsageError(f"invalid noise flags: {e}") from e

        series = generate(self.args.scenario, cfg, grid_times(start, end, count), noise)
        _write(self.args.out, format_csv(series.times, series.values).encode())
        return EXIT_OK

    def fit(self) -> int:
        registry.get(self.args.model)
        opts = self.solver_options()
        series = read_csv(self.args.data)
        self._warn_literal([self.args.model])

        results, failures = self._fit_serially([self.args.model], series, opts)
        return self._finish(series, results, failures, opts)

    async def compare(self) -> int:
        model_ids = self._selected_models()
        opts = self.solver_options()
        series = read_csv(self.args.data)
        self._warn_literal(model_ids)

        results, failures = await self.fit_models(model_ids, series, opts)
        if self.args.curves_dir:
            self._write_curves(series, results)
        return self._finish(series, results, failures, opts)

    def eval(self) -> int:
        model_id = self.args.model
        registry.get(model_id)
        params = self._load_params(self.args.params)
        start, end, count = parse_grid(self.args.grid, min_count=MIN_CURVE_STEPS + 1)

        rows = emit_curve(model_id, params, start, end, count - 1)
        _write(self.args.out, format_curve_csv(rows).encode())
        return EXIT_OK

    async def fit_models(self, model_ids: Sequence[str], series: TimeSeries,
                         opts: FitOptions) -> Tuple[List[FitResult], Dict[str, str]]:
        """Fit models concurrently; results come back in model_ids order."""
        semaphore = asyncio.Semaphore(config.MAX_CONCURRENT_FITS)

        async def fit_one(model_id: str) -> Union[FitResult, str]:
            async with semaphore:
                try:
                    return await asyncio.to_thread(multi_start_fit, model_id, series, opts)
                except (AllStartsFailed, TooFewPoints) as e:
                    logger.warning(f"Skipping {model_id}: {e}")
                    return str(e)

        outcomes = await asyncio.gather(*(fit_one(model_id) for model_id in model_ids))
        return self._split(model_ids, outcomes)

    def _fit_serially(self, model_ids: Sequence[str], series: TimeSeries,
                      opts: FitOptions) -> Tuple[List[FitResult], Dict[str, str]]:
        outcomes: List[Union[FitResult, str]] = []
        for model_id in model_ids:
            try:
                outcomes.append(multi_start_fit(model_id, series, opts))
            except AllStartsFailed as e:
                logger.warning(f"Skipping {model_id}: {e}")
                outcomes.append(str(e))
        return self._split(model_ids, outcomes)

    @staticmethod
    def _split(model_ids: Sequence[str],
               outcomes: Sequence[Union[FitResult, str]]) -> Tuple[List[FitResult], Dict[str, str]]:
        results = [outcome for outcome in outcomes if isinstance(outcome, FitResult)]
        failures = {
            model_id: outcome for model_id, outcome in zip(model_ids, outcomes) if isinstance(outcome, str)
        }
        return results, failures

    def _finish(self, series: TimeSeries, results: List[FitResult], failures: Dict[str, str],
                opts: FitOptions) -> int:
        """Write the report and pick the exit code."""
        ranked = rank_models(results)
        report = Report(
            dataset=DatasetDescriptor(source=str(self.args.data), n=series.n, sst=series_stats(series).sst),
            entries=[
                ReportEntry(
                    model_id=r.model_id,
                    params=r.params,
                    statistics=r.statistics,
                    converged=r.converged,
                    termination_reason=r.termination_reason,
                    start_index=r.start_index,
                    iterations=r.iterations,
                )
                for r in results
            ],
            ranking=[r.model_id for r in ranked],
            failures=failures,
            version=__version__,
            seed=opts.seed,
        )
        _write(self.args.out, write_report(report))

        if ranked:
            best = ranked[0].statistics
            logger.info(f"Best model: {ranked[0].model_id} (adj R^2 {best.adj_r_squared:.4f}, RMSE {best.rmse:.4g})")
        if not any(r.converged for r in results):
            logger.warning("No model converged")
            return EXIT_NOT_CONVERGED
        return EXIT_OK

    def _selected_models(self) -> List[str]:
        if self.args.models.strip() == "all":
            return [spec.id for spec in registry.all_models()]

        model_ids = list(dict.fromkeys(m.strip() for m in self.args.models.split(",") if m.strip()))
        if not model_ids:
            raise UsageError("--models needs at least one model id")
        for model_id in model_ids:
            registry.get(model_id)
        return model_ids

    def _write_curves(self, series: TimeSeries, results: Sequence[FitResult]) -> None:
        directory = Path(self.args.curves_dir)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise DataError(f"cannot create {directory}: {e}") from e

        for result in results:
            try:
                rows = emit_curve(result.model_id, result.params, series.times[0], series.times[-1],
                                  config.CURVE_STEPS)
            except (DomainError, UsageError) as e:
                logger.warning(f"No curve for {result.model_id}: {e}")
                continue
            _write(directory / f"{result.model_id}.csv", format_curve_csv(rows).encode())

    @staticmethod
    def _warn_literal(model_ids: Sequence[str]) -> None:
        literal = [model_id for model_id in model_ids if registry.get(model_id).literal_rendering]
        if literal:
            logger.warning(f"Models rendered literally from their published formulas: {', '.join(literal)}")

    @staticmethod
    def _load_params(source: str) -> Dict[str, float]:
        path = Path(source)
        document: Union[str, bytes] = source
        if not source.lstrip().startswith("{"):
            try:
                document = path.read_bytes()
            except OSError as e:
                raise DataError(f"cannot read parameters from {path}: {e}") from e

        try:
            params = orjson.loads(document)
        except orjson.JSONDecodeError as e:
            raise ParseError(f"invalid parameter JSON: {e}") from e

        if not isinstance(params, dict) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in params.values()
        ):
            raise ParseError("parameters must be a JSON object of numbers")
        return {str(name): float(value) for name, value in params.items()}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and map errors to exit codes.

    Returns:
        0 success, 1 usage error, 2 data error, 3 no converged model, 4 domain error
    """
    try:
        args = build_parser().parse_args(argv)
        if not config.validate():
            logger.warning("Configuration validation failed - continuing with per-command validation")
        return CurveFitApp(args).dispatch()
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else EXIT_OK
    except UsageError as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except DataError as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA
    except (DomainError, DegenerateConfig) as e:
        logger.error(f"Domain error: {e}")
        return EXIT_DOMAIN


def main() -> None:
    """Console script entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
