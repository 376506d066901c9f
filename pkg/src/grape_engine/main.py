"""
Command-line entry point.

    grape-engine run --problem problems/three_spin_inversion.toml --out results/
    grape-engine sweep --problem ... --waveform results/waveform.csv --out results/
    grape-engine gradcheck --problem ... --method-a series_exact --method-b eigen_exact
    grape-engine gradcheck --problem ... --method-b objective_fd

Exit status: 0 converged or target reached, 3 iteration budget exhausted
or stalled, 1 numerical failure, 2 problem-file or usage error.
"""

from pathlib import Path
from typing import Callable, NoReturn, Optional, TypeVar

import click
import structlog
from pydantic import ValidationError

from grape_engine.adapters.problem_file import build_problem
from grape_engine.adapters.result_writer import ResultWriter, read_table
from grape_engine.analysis import DT_GRID, OBJECTIVE_FD, gradient_check, sweep_offsets
from grape_engine.config.log_setup import configure_logging
from grape_engine.config.settings import (
    Algorithm,
    DerivativeMethod,
    ProblemFile,
    SweepSettings,
    load_problem_file,
)
from grape_engine.core.propagation import ControlProblem, PulseSequence
from grape_engine.errors import (
    CapacityError,
    GrapeEngineError,
    InvalidMethodError,
    NonFiniteObjectiveError,
    ProblemFileError,
)
from grape_engine.strategies.optimizer import GrapeOptimizer, initial_pulse

log = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3

F = TypeVar("F", bound=Callable)

_ALGORITHMS = click.Choice([a.value for a in Algorithm])
_METHODS = click.Choice([m.value for m in DerivativeMethod])
_REFERENCES = click.Choice([*_METHODS.choices, OBJECTIVE_FD])
_LOG_LEVELS = click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False)


def problem_option(fn: F) -> F:
    return click.option(
        "--problem",
        "problem_path",
        required=True,
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        help="TOML problem file",
    )(fn)


def threads_option(fn: F) -> F:
    return click.option(
        "--threads", type=click.IntRange(min=1), default=None, help="Worker threads"
    )(fn)


def _fail(message: str, code: int) -> NoReturn:
    click.echo(f"error: {message}", err=True)
    raise SystemExit(code)


def _load(
    path: Path,
    algorithm: Optional[str] = None,
    gradient_method: Optional[str] = None,
    max_iters: Optional[int] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> ProblemFile:
    problem_file = load_problem_file(path)
    try:
        return problem_file.with_overrides(
            algorithm=algorithm,
            gradient_method=gradient_method,
            max_iters=max_iters,
            seed=seed,
            threads=threads,
        )
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first.get("loc", ())) or None
        raise ProblemFileError(f"Invalid override: {first.get('msg')}", field=field) from e


def _setup(ctx: click.Context, problem_file: ProblemFile) -> None:
    level = ctx.obj.get("log_level") or problem_file.engine.log_level
    fmt = ctx.obj.get("log_format") or problem_file.engine.log_format
    configure_logging(level, fmt)


def _read_waveform(path: Path, problem: ControlProblem) -> PulseSequence:
    frame = read_table(path)
    columns = [c for c in frame.columns if c != "t"]
    pulse = PulseSequence(frame[columns].to_numpy(dtype=float))
    pulse.check_against(problem)
    return pulse


@click.group()
@click.option("--log-level", type=_LOG_LEVELS, default=None)
@click.option("--log-format", type=click.Choice(["console", "json"]), default=None)
@click.pass_context
def cli(ctx: click.Context, log_level: Optional[str], log_format: Optional[str]) -> None:
    """GRAPE pulse design for spin systems."""
    ctx.ensure_object(dict)
    ctx.obj["log_level"] = log_level
    ctx.obj["log_format"] = log_format


@cli.command()
@problem_option
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("results"),
    show_default=True,
)
@click.option("--algorithm", type=_ALGORITHMS, default=None, help="Override [optimizer].algorithm")
@click.option("--gradient-method", type=_METHODS, default=None, help="Override [method].name")
@click.option("--max-iters", type=click.IntRange(min=0), default=None)
@click.option("--seed", type=int, default=None)
@threads_option
@click.pass_context
def run(
    ctx: click.Context,
    problem_path: Path,
    out_dir: Path,
    algorithm: Optional[str],
    gradient_method: Optional[str],
    max_iters: Optional[int],
    seed: Optional[int],
    threads: Optional[int],
) -> None:
    """Optimize a pulse and write iterations, timings, waveform and profile tables."""
    try:
        problem_file = _load(problem_path, algorithm, gradient_method, max_iters, seed, threads)
        _setup(ctx, problem_file)
        problem = build_problem(problem_file)
        optimizer = GrapeOptimizer(
            problem,
            problem_file.method,
            problem_file.optimizer,
            init=initial_pulse(problem, problem_file.optimizer.seed),
        )
    except (ProblemFileError, CapacityError, InvalidMethodError) as e:
        _fail(str(e), EXIT_USAGE)

    try:
        result = optimizer.run()
    except NonFiniteObjectiveError as e:
        _fail(f"{e} at iteration {e.state.get('iteration')}", EXIT_NUMERICAL)
    except GrapeEngineError as e:
        _fail(f"{e} at iteration {optimizer.state.iteration}", EXIT_NUMERICAL)

    writer = ResultWriter(out_dir)
    writer.write_iterations(result.records)
    writer.write_timings(result.records)
    writer.write_waveform(result.pulse, problem.dt)
    if problem_file.sweep is not None:
        rows = sweep_offsets(
            problem, result.pulse, problem_file.sweep.grid(), problem_file.system.relaxation_rate
        )
        writer.write_profile(rows)

    click.echo(
        f"{result.status.value}: fidelity {result.fidelity:.10f} after "
        f"{len(result.records) - 1} iterations"
    )
    for path in writer.written:
        click.echo(f"  wrote {path}")
    ctx.exit(EXIT_OK if result.status.succeeded else EXIT_BUDGET)


@cli.command()
@problem_option
@click.option(
    "--waveform",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="waveform.csv from a previous run; defaults to <out>/waveform.csv",
)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("results"),
    show_default=True,
)
@click.option("--start", "start_hz", type=float, default=None, help="First offset (Hz)")
@click.option("--stop", "stop_hz", type=float, default=None, help="Last offset (Hz)")
@click.option("--points", type=click.IntRange(min=0), default=None)
@threads_option
@click.pass_context
def sweep(
    ctx: click.Context,
    problem_path: Path,
    waveform: Optional[Path],
    out_dir: Path,
    start_hz: Optional[float],
    stop_hz: Optional[float],
    points: Optional[int],
    threads: Optional[int],
) -> None:
    """Inversion profile of a waveform over resonance offsets."""
    try:
        problem_file = _load(problem_path, threads=threads)
        _setup(ctx, problem_file)
        problem = build_problem(problem_file)
        waveform = waveform or out_dir / "waveform.csv"
        if not waveform.exists():
            raise ProblemFileError(f"Waveform file {waveform} not found")
        pulse = _read_waveform(waveform, problem)
    except (ProblemFileError, CapacityError, ValueError) as e:
        _fail(str(e), EXIT_USAGE)

    settings = problem_file.sweep or SweepSettings()
    overrides = {
        k: v
        for k, v in (("start_hz", start_hz), ("stop_hz", stop_hz), ("points", points))
        if v is not None
    }
    if overrides:
        settings = SweepSettings(**{**settings.model_dump(), **overrides, "offsets_hz": None})

    rows = sweep_offsets(problem, pulse, settings.grid(), problem_file.system.relaxation_rate)
    path = ResultWriter(out_dir).write_profile(rows)
    if rows:
        worst = max(sz for _, sz in rows)
        click.echo(f"{len(rows)} offsets, worst <Sz> {worst:.6f}")
    click.echo(f"  wrote {path}")


@cli.command()
@problem_option
@click.option("--method-a", type=_METHODS, default=DerivativeMethod.SERIES_EXACT.value)
@click.option(
    "--method-b",
    type=_REFERENCES,
    default=DerivativeMethod.FIRST_ORDER.value,
    help=f"Reference method; {OBJECTIVE_FD} differences the fidelity itself",
)
@click.option(
    "--waveform",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Evaluate at this waveform instead of the seeded initial pulse",
)
@click.option("--seed", type=int, default=None)
@click.option("--no-scaling", is_flag=True, help="Skip the first-order Δt scaling fit")
@threads_option
@click.pass_context
def gradcheck(
    ctx: click.Context,
    problem_path: Path,
    method_a: str,
    method_b: str,
    waveform: Optional[Path],
    seed: Optional[int],
    no_scaling: bool,
    threads: Optional[int],
) -> None:
    """Compare two gradient methods on one pulse."""
    try:
        problem_file = _load(problem_path, seed=seed, threads=threads)
        _setup(ctx, problem_file)
        problem = build_problem(problem_file)
        pulse = (
            _read_waveform(waveform, problem)
            if waveform is not None
            else initial_pulse(problem, problem_file.optimizer.seed)
        )
        base = problem_file.method.model_dump()
        first = problem_file.method.model_validate({**base, "name": method_a})
        second = (
            OBJECTIVE_FD
            if method_b == OBJECTIVE_FD
            else problem_file.method.model_validate({**base, "name": method_b})
        )
    except (ProblemFileError, CapacityError, ValidationError, ValueError) as e:
        _fail(str(e), EXIT_USAGE)

    try:
        report = gradient_check(problem, pulse, first, second, None if no_scaling else DT_GRID)
    except InvalidMethodError as e:
        _fail(str(e), EXIT_USAGE)
    except GrapeEngineError as e:
        _fail(str(e), EXIT_NUMERICAL)

    click.echo(f"{report.method_a} vs {report.method_b}")
    click.echo(f"  max |deviation|       {report.max_abs_deviation:.6e}")
    click.echo(f"  mean |deviation|      {report.mean_abs_deviation:.6e}")
    click.echo(f"  relative max          {report.relative_max_deviation:.6e}")
    if report.first_order_slope is not None:
        for dt, err in zip(report.dt_grid, report.first_order_errors):
            click.echo(f"  first-order error at dt={dt:.1e} s: {err:.6e}")
        click.echo(f"  first-order error slope {report.first_order_slope:.3f}")


def main() -> None:
    cli(obj={})


if __name__ == "__main__":
    main()
