"""
Finite-Difference Step Sweep

Error of the propagator-level finite-difference derivatives against the
exact commutator-series derivative over a range of amplitude steps, for
one time step of a problem at its seeded initial pulse. Marks the step
picked by the round-off rule for the configured error threshold.

Usage:
    python scripts/fd_step_sweep.py --problem problems/three_spin_inversion.toml
    python scripts/fd_step_sweep.py --problem ... --step 10 --control 1 --threshold 1e-6
"""

import sys
from pathlib import Path
from typing import Tuple

import click
import numpy as np

# Add project sources
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root / "src"))

from grape_engine.adapters.problem_file import build_problem  # noqa: E402
from grape_engine.config.log_setup import configure_logging  # noqa: E402
from grape_engine.config.settings import FdStepPolicy, load_problem_file  # noqa: E402
from grape_engine.core import expkernel  # noqa: E402
from grape_engine.core.gradient import PROPAGATOR_NORM  # noqa: E402
from grape_engine.strategies.optimizer import initial_pulse  # noqa: E402

SCHEMES = ("forward", "central", "central4")


@click.command()
@click.option(
    "--problem",
    "problem_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
)
@click.option("--step", "step_index", type=click.IntRange(min=1), default=1, help="Time step n")
@click.option("--control", type=click.IntRange(min=0), default=0, help="Control index k")
@click.option("--threshold", type=float, default=1e-8, help="Error threshold for the step rule")
@click.option("--decades", type=(int, int), default=(-10, 2), show_default=True)
def main(
    problem_path: Path,
    step_index: int,
    control: int,
    threshold: float,
    decades: Tuple[int, int],
) -> None:
    configure_logging("WARNING")
    problem_file = load_problem_file(problem_path)
    problem = build_problem(problem_file)
    if step_index > problem.n_steps or control >= problem.n_controls:
        raise click.BadParameter(
            f"problem has {problem.n_steps} steps and {problem.n_controls} controls"
        )

    pulse = initial_pulse(problem, problem_file.optimizer.seed)
    generator = problem.generator(pulse.amplitudes[step_index - 1])
    lk = problem.liouvillians.controls[control]
    exact = expkernel.dexp_series(generator, lk, problem.dt).derivative
    scale = float(np.max(np.abs(exact)))

    policy = FdStepPolicy(error_threshold=threshold)
    chosen = expkernel.fd_step_select(policy, PROPAGATOR_NORM)

    print("\n" + "=" * 60)
    print(f"Finite-difference step sweep: {problem_path.name}")
    print(f"  step {step_index}, control {control}")
    print(f"  round-off rule picks h = {chosen:.3e} Hz for threshold {threshold:.1e}")
    print("=" * 60)
    print(f"{'h (Hz)':>12} " + " ".join(f"{s:>14}" for s in SCHEMES))

    steps = sorted(set(np.logspace(decades[0], decades[1], decades[1] - decades[0] + 1)) | {chosen})
    for h in steps:
        errors = []
        for scheme in SCHEMES:
            approx = expkernel.dexp_fd(generator, lk, problem.dt, h, scheme)
            errors.append(float(np.max(np.abs(approx - exact))) / scale)
        marker = "  <- rule" if h == chosen else ""
        print(f"{h:>12.3e} " + " ".join(f"{e:>14.3e}" for e in errors) + marker)

    print("=" * 60)


if __name__ == "__main__":
    main()
