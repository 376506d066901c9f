"""
Compare Optimizers

Run every search strategy on the same problem, initial pulse and gradient
method, and print the fidelity reached, iterations, objective evaluations
and wall time of each.

Usage:
    python scripts/compare_optimizers.py --problem problems/three_spin_inversion.toml
    python scripts/compare_optimizers.py --problem ... --max-iters 50 --out results/compare
"""

import sys
import time
from pathlib import Path
from typing import Optional, Tuple

import click

# Add project sources
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root / "src"))

from grape_engine.adapters.problem_file import build_problem  # noqa: E402
from grape_engine.adapters.result_writer import ResultWriter  # noqa: E402
from grape_engine.config.log_setup import configure_logging  # noqa: E402
from grape_engine.config.settings import Algorithm, load_problem_file  # noqa: E402
from grape_engine.strategies.optimizer import initial_pulse, optimize  # noqa: E402


@click.command()
@click.option(
    "--problem",
    "problem_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
)
@click.option(
    "--algorithm",
    "algorithms",
    multiple=True,
    type=click.Choice([a.value for a in Algorithm]),
    help="Restrict to these strategies (repeatable); default all",
)
@click.option("--max-iters", type=click.IntRange(min=0), default=None)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Write each strategy's iteration log to <out>/<algorithm>/",
)
def main(
    problem_path: Path,
    algorithms: Tuple[str, ...],
    max_iters: Optional[int],
    out_dir: Optional[Path],
) -> None:
    configure_logging("WARNING")
    problem_file = load_problem_file(problem_path).with_overrides(max_iters=max_iters)
    problem = build_problem(problem_file)
    init = initial_pulse(problem, problem_file.optimizer.seed)

    print("\n" + "=" * 72)
    print(f"Strategy comparison: {problem_path.name}")
    print(f"  method {problem_file.method.name.value}, "
          f"{problem.n_steps} steps x {problem.n_controls} controls, "
          f"budget {problem_file.optimizer.max_iters} iterations")
    print("=" * 72)
    print(f"{'algorithm':<10} {'status':<18} {'fidelity':>14} {'iters':>6} {'evals':>6} {'s':>8}")

    for algorithm in algorithms or [a.value for a in Algorithm]:
        config = problem_file.optimizer.model_copy(update={"algorithm": Algorithm(algorithm)})
        started = time.perf_counter()
        result = optimize(problem, init, problem_file.method, config)
        elapsed = time.perf_counter() - started

        print(
            f"{algorithm:<10} {result.status.value:<18} {result.fidelity:>14.10f} "
            f"{len(result.records) - 1:>6} {result.state.evals:>6} {elapsed:>8.2f}"
        )
        if out_dir is not None:
            writer = ResultWriter(out_dir / algorithm)
            writer.write_iterations(result.records)
            writer.write_waveform(result.pulse, problem.dt)

    print("=" * 72)


if __name__ == "__main__":
    main()
