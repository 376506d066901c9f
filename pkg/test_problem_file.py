"""
Test problem-file loading, validation errors and problem construction.
"""

from pathlib import Path

import numpy as np
import pytest

from grape_engine.adapters.problem_file import build_problem, resolve_state
from grape_engine.config.settings import (
    Algorithm,
    DerivativeMethod,
    SweepSettings,
    load_problem_file,
)
from grape_engine.core.spinsys import spin_operators, vectorize
from grape_engine.errors import ProblemFileError

PROBLEMS = Path(__file__).parent / "problems"

SMALL = """
[system]
n_spins = 2
offsets_hz = [-300.0, 300.0]
j_hz = 12.0
b1_max_hz = 1500.0

[pulse]
n_steps = 8
dt = 1.0e-4
seed = 4

[method]
name = "eigen_exact"
"""


def write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "problem.toml"
    path.write_text(text, encoding="utf-8")
    return path


def test_bundled_problems_load():
    inversion = load_problem_file(PROBLEMS / "three_spin_inversion.toml")
    assert inversion.system.n_spins == 3
    assert inversion.method.name is DerivativeMethod.SERIES_EXACT
    assert inversion.optimizer.algorithm is Algorithm.LBFGS
    assert len(inversion.sweep.grid()) == 81

    chain = load_problem_file(PROBLEMS / "proton_chain_ppm.toml")
    assert chain.system.span_ppm == 6.0
    assert np.allclose(chain.system.offsets_in_hz(600.0), [-1800.0, -600.0, 600.0, 1800.0])
    assert chain.system.relaxation_rate > 0


def test_defaults_and_seed_sharing(tmp_path):
    problem_file = load_problem_file(write(tmp_path, SMALL))
    assert problem_file.transfer.initial == "sum_sz"
    assert problem_file.transfer.target == "minus_sum_sz"
    assert problem_file.optimizer.seed == 4
    assert problem_file.engine.threads == 1
    assert problem_file.sweep is None


def test_overrides_take_precedence(tmp_path):
    problem_file = load_problem_file(write(tmp_path, SMALL))
    changed = problem_file.with_overrides(
        algorithm="dfp", gradient_method="fd_central", max_iters=7, seed=99, threads=3
    )
    assert changed.optimizer.algorithm is Algorithm.DFP
    assert changed.method.name is DerivativeMethod.FD_CENTRAL
    assert changed.optimizer.max_iters == 7
    assert changed.optimizer.seed == 99
    assert changed.pulse.seed == 99
    assert changed.engine.threads == 3
    assert problem_file.optimizer.max_iters == 200


def test_malformed_toml_reports_line(tmp_path):
    with pytest.raises(ProblemFileError) as exc:
        load_problem_file(write(tmp_path, "[system]\nn_spins = = 2\n"))
    assert exc.value.line == 2


def test_invalid_field_is_named(tmp_path):
    text = SMALL.replace("n_steps = 8", "n_steps = 0")
    with pytest.raises(ProblemFileError) as exc:
        load_problem_file(write(tmp_path, text))
    assert exc.value.field == "pulse.n_steps"
    assert exc.value.line == text.splitlines().index("n_steps = 0") + 1
    assert "pulse.n_steps" in str(exc.value)


def test_unknown_method_is_rejected(tmp_path):
    with pytest.raises(ProblemFileError) as exc:
        load_problem_file(write(tmp_path, SMALL.replace("eigen_exact", "magnus")))
    assert exc.value.field == "method.name"


def test_eigen_method_with_relaxation_is_rejected(tmp_path):
    text = SMALL.replace("b1_max_hz = 1500.0", "b1_max_hz = 1500.0\nrelaxation_rate = 2.0")
    with pytest.raises(ProblemFileError):
        load_problem_file(write(tmp_path, text))


def test_truncated_series_needs_order(tmp_path):
    with pytest.raises(ProblemFileError):
        load_problem_file(write(tmp_path, SMALL.replace("eigen_exact", "series_truncated")))
    text = SMALL.replace('name = "eigen_exact"', 'name = "series_truncated"\nseries_order = 3')
    assert load_problem_file(write(tmp_path, text)).method.series_order == 3


def test_missing_file():
    with pytest.raises(ProblemFileError):
        load_problem_file(Path("does/not/exist.toml"))


def test_named_states():
    ops = spin_operators(2)
    total = ops[0][2] + ops[1][2]
    assert np.allclose(resolve_state("sum_sz", 2), vectorize(total))
    assert np.allclose(resolve_state("minus_sum_sz", 2), vectorize(-total))
    assert np.allclose(resolve_state("sz:2", 2), vectorize(ops[1][2]))
    assert np.allclose(resolve_state("SX:1", 2), vectorize(ops[0][0]))
    assert np.allclose(resolve_state("sy:1", 2), vectorize(ops[0][1]))


@pytest.mark.parametrize("spec", ["sz:0", "sz:3", "sz:x", "iz:1", "magnetization"])
def test_bad_state_names(spec):
    with pytest.raises(ProblemFileError):
        resolve_state(spec, 2)


def test_explicit_states():
    pairs = [[1.0, 0.0], [0.0, 0.5], [0.0, -0.5], [-1.0, 0.0]]
    v = resolve_state(pairs, 1)
    assert np.array_equal(v, np.array([1.0, 0.5j, -0.5j, -1.0]))
    with pytest.raises(ProblemFileError):
        resolve_state(pairs[:3], 1)
    with pytest.raises(ProblemFileError):
        resolve_state([[1.0, 0.0, 0.0]] * 4, 1)


def test_build_problem(tmp_path):
    problem = build_problem(load_problem_file(write(tmp_path, SMALL)))
    assert problem.shape == (8, 2)
    assert problem.bounds.tolist() == [1500.0, 1500.0]
    assert problem.hamiltonians is not None
    assert not problem.liouvillians.has_relaxation
    assert problem.threads == 1
    assert build_problem(load_problem_file(write(tmp_path, SMALL)), threads=4).threads == 4


def test_build_problem_with_relaxation_and_ppm():
    problem = build_problem(load_problem_file(PROBLEMS / "proton_chain_ppm.toml"))
    assert problem.liouvillians.has_relaxation
    assert problem.liouvillians.dim == 256


def test_zero_target_is_a_problem_file_error(tmp_path):
    text = SMALL + '\n[transfer]\ntarget = [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]\n'
    text = text.replace("n_spins = 2", "n_spins = 1").replace("[-300.0, 300.0]", "[0.0]")
    with pytest.raises(ProblemFileError) as exc:
        build_problem(load_problem_file(write(tmp_path, text)))
    assert exc.value.field == "transfer"


def test_sweep_grid():
    assert SweepSettings(start_hz=-10.0, stop_hz=10.0, points=5).grid() == [
        -10.0,
        -5.0,
        0.0,
        5.0,
        10.0,
    ]
    assert SweepSettings(points=0).grid() == []
    assert SweepSettings(start_hz=3.0, points=1).grid() == [3.0]
    assert SweepSettings(offsets_hz=[1.0, 2.0]).grid() == [1.0, 2.0]
