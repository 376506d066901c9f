"""
Test the GRAPE optimization loop: stopping rules, bounds, determinism,
checkpoint/resume and failure handling.
"""

import numpy as np
import pytest

from grape_engine.config.settings import (
    Algorithm,
    DerivativeMethod,
    GradientMethod,
    OptimizerConfig,
)
from grape_engine.core.gradient import GradientReport
from grape_engine.core.propagation import PulseSequence
from grape_engine.errors import NonFiniteObjectiveError
from grape_engine.strategies.optimizer import (
    GrapeOptimizer,
    OptimizationStatus,
    initial_pulse,
    optimize,
)

SERIES = GradientMethod(name=DerivativeMethod.SERIES_EXACT)
EIGEN = GradientMethod(name=DerivativeMethod.EIGEN_EXACT)

# A fidelity target no pulse can reach, so runs stop on the budget.
UNREACHABLE = 2.0


def trace(result):
    return [(r.iteration, r.fidelity, r.grad_norm, r.step, r.evals) for r in result.records]


@pytest.fixture
def single_spin(chain_problem):
    return chain_problem(n_spins=1, n_steps=10, dt=1e-4)


@pytest.fixture
def two_spin(chain_problem):
    return chain_problem(n_spins=2, n_steps=12, dt=1e-4)


@pytest.mark.parametrize("algorithm", [Algorithm.DFP, Algorithm.BFGS, Algorithm.LBFGS])
def test_single_spin_inversion_reaches_target(single_spin, algorithm):
    config = OptimizerConfig(algorithm=algorithm, max_iters=100, fidelity_target=0.9999)
    result = optimize(single_spin, None, SERIES, config)
    assert result.status is OptimizationStatus.TARGET_REACHED
    assert result.status.succeeded
    assert result.fidelity >= 0.9999
    assert result.pulse.within(single_spin.bounds, tol=1e-9)


def test_fidelity_increases_every_iteration(two_spin):
    config = OptimizerConfig(max_iters=8, fidelity_target=UNREACHABLE)
    result = optimize(two_spin, None, EIGEN, config)
    fidelities = [r.fidelity for r in result.records]
    assert all(b > a for a, b in zip(fidelities, fidelities[1:]))


def test_budget_and_iteration_log(two_spin):
    config = OptimizerConfig(max_iters=3, fidelity_target=UNREACHABLE)
    result = optimize(two_spin, None, EIGEN, config)
    assert result.status is OptimizationStatus.BUDGET_EXHAUSTED
    assert not result.status.succeeded
    assert [r.iteration for r in result.records] == [0, 1, 2, 3]
    first = result.records[0]
    assert first.step == 0.0
    assert first.evals == 1
    assert all(r.evals >= 1 and r.step > 0 for r in result.records[1:])
    assert result.fidelity == result.records[-1].fidelity


def test_zero_budget_reports_initial_pulse(two_spin):
    init = initial_pulse(two_spin, seed=3)
    config = OptimizerConfig(max_iters=0, fidelity_target=UNREACHABLE)
    result = optimize(two_spin, init, EIGEN, config)
    assert len(result.records) == 1
    assert np.array_equal(result.pulse.amplitudes, init.amplitudes)


def test_immediate_stopping_rules(two_spin):
    reached = optimize(two_spin, None, EIGEN, OptimizerConfig(fidelity_target=-1.0))
    assert reached.status is OptimizationStatus.TARGET_REACHED
    assert len(reached.records) == 1

    flat = optimize(
        two_spin, None, EIGEN, OptimizerConfig(grad_tol=1e3, fidelity_target=UNREACHABLE)
    )
    assert flat.status is OptimizationStatus.CONVERGED


def test_tight_bounds_are_respected(chain_problem):
    problem = chain_problem(n_spins=2, n_steps=10, b1_max_hz=150.0)
    config = OptimizerConfig(max_iters=15, fidelity_target=UNREACHABLE)
    result = optimize(problem, None, EIGEN, config)
    amps = np.abs(result.pulse.amplitudes)
    assert np.all(amps <= 150.0 + 1e-9)
    assert np.any(amps >= 150.0 - 1e-9)


def test_runs_are_deterministic(two_spin):
    config = OptimizerConfig(max_iters=5, fidelity_target=UNREACHABLE, seed=12)
    a = optimize(two_spin, None, SERIES, config)
    b = optimize(two_spin, None, SERIES, config)
    assert trace(a) == trace(b)
    assert np.array_equal(a.pulse.amplitudes, b.pulse.amplitudes)


@pytest.mark.parametrize("algorithm", [Algorithm.BFGS, Algorithm.LBFGS, Algorithm.STEEPEST])
def test_checkpoint_resume_matches_straight_run(two_spin, algorithm):
    init = initial_pulse(two_spin, seed=5)
    short = OptimizerConfig(algorithm=algorithm, max_iters=3, fidelity_target=UNREACHABLE)
    full = short.model_copy(update={"max_iters": 6})

    first = GrapeOptimizer(two_spin, EIGEN, short, init=init)
    first.run()
    resumed = GrapeOptimizer(two_spin, EIGEN, full, resume=first.checkpoint()).run()
    straight = GrapeOptimizer(two_spin, EIGEN, full, init=init).run()

    assert trace(resumed) == trace(straight)
    assert np.array_equal(resumed.pulse.amplitudes, straight.pulse.amplitudes)


def test_checkpoint_is_independent_of_optimizer(two_spin):
    optimizer = GrapeOptimizer(
        two_spin, EIGEN, OptimizerConfig(max_iters=2, fidelity_target=UNREACHABLE)
    )
    snapshot = optimizer.checkpoint()
    optimizer.run()
    assert snapshot.iteration == 0
    assert len(snapshot.records) == 0


def test_rejected_curvature_pairs_are_counted(two_spin, mocker):
    config = OptimizerConfig(algorithm=Algorithm.BFGS, max_iters=3, fidelity_target=UNREACHABLE)
    optimizer = GrapeOptimizer(two_spin, EIGEN, config)
    mocker.patch.object(optimizer.strategy, "update", return_value=False)
    result = optimizer.run()
    assert result.curvature_rejections == len(result.records) - 1
    assert result.curvature_rejections > 0


def test_non_finite_objective_is_reported(two_spin, mocker):
    def broken(problem, pulse, method):
        return GradientReport(
            fidelity=float("nan"),
            grad=np.zeros(problem.shape),
            method=method,
            series_terms_used=np.zeros(problem.n_steps, dtype=int),
        )

    mocker.patch("grape_engine.strategies.optimizer.gradient_and_fidelity_fused", broken)
    with pytest.raises(NonFiniteObjectiveError) as exc:
        GrapeOptimizer(two_spin, EIGEN, OptimizerConfig())
    dump = exc.value.state
    assert dump["iteration"] == 0
    assert dump["method"] == "eigen_exact"
    assert dump["x"].shape == (two_spin.n_steps * two_spin.n_controls,)


def test_steepest_descent_restarts_each_search_from_first_trial(two_spin, mocker):
    config = OptimizerConfig(
        algorithm=Algorithm.STEEPEST, max_iters=3, fidelity_target=UNREACHABLE
    )
    optimizer = GrapeOptimizer(two_spin, SERIES, config, init=initial_pulse(two_spin, seed=2))
    spy = mocker.spy(optimizer.search, "search")
    result = optimizer.run()
    assert spy.call_count >= len(result.records) - 1 > 0
    for call in spy.call_args_list:
        p, alpha0 = call.args[4], call.args[5]
        assert alpha0 * np.max(np.abs(p)) == pytest.approx(250.0)


def test_initial_pulse_is_seeded_and_bounded(chain_problem):
    bounded = chain_problem(n_spins=1, n_steps=50, b1_max_hz=1000.0)
    a = initial_pulse(bounded, seed=1)
    assert np.array_equal(a.amplitudes, initial_pulse(bounded, seed=1).amplitudes)
    assert not np.array_equal(a.amplitudes, initial_pulse(bounded, seed=2).amplitudes)
    assert np.max(np.abs(a.amplitudes)) <= 400.0

    unbounded = chain_problem(n_spins=1, n_steps=50, b1_max_hz=None)
    assert np.max(np.abs(initial_pulse(unbounded, seed=1).amplitudes)) <= 1000.0


def test_initial_pulse_outside_bounds_is_rejected(two_spin):
    outside = PulseSequence(np.full(two_spin.shape, 3000.0))
    with pytest.raises(ValueError):
        GrapeOptimizer(two_spin, EIGEN, OptimizerConfig(), init=outside)


def test_projected_gradient_drops_blocked_components(two_spin):
    optimizer = GrapeOptimizer(two_spin, EIGEN, OptimizerConfig(max_iters=0))
    n = optimizer.state.x.size
    x = np.zeros(n)
    x[0], x[1] = 2500.0, -2500.0
    g = np.ones(n)
    g[0], g[1] = -1.0, 1.0
    projected = optimizer.projected_gradient(x, g)
    assert projected[0] == 0.0 and projected[1] == 0.0
    assert np.all(projected[2:] == 1.0)


@pytest.mark.slow
def test_three_spin_inversion_converges(chain_problem):
    problem = chain_problem(n_spins=3, n_steps=50, dt=1e-4)
    config = OptimizerConfig(max_iters=200, fidelity_target=0.99, seed=7)
    result = optimize(problem, None, SERIES, config)
    assert result.fidelity >= 0.99
    assert result.status is OptimizationStatus.TARGET_REACHED


@pytest.mark.slow
def test_quasi_newton_outpaces_steepest_descent(two_spin):
    init = initial_pulse(two_spin, seed=9)
    results = {}
    for algorithm in (Algorithm.STEEPEST, Algorithm.LBFGS):
        config = OptimizerConfig(algorithm=algorithm, max_iters=15, fidelity_target=UNREACHABLE)
        results[algorithm] = optimize(two_spin, init, EIGEN, config).fidelity
    assert results[Algorithm.LBFGS] > results[Algorithm.STEEPEST]


@pytest.fixture
def three_spin(chain_problem):
    return chain_problem(n_spins=3, n_steps=50, dt=1e-4)


@pytest.mark.slow
def test_method_ordering_on_three_spin_inversion(three_spin):
    init = initial_pulse(three_spin, seed=7)
    results = {}
    for algorithm in Algorithm:
        config = OptimizerConfig(algorithm=algorithm, max_iters=100, fidelity_target=UNREACHABLE)
        results[algorithm] = optimize(three_spin, init, SERIES, config)
    fid = {algorithm: result.fidelity for algorithm, result in results.items()}

    assert fid[Algorithm.LBFGS] > 0.999
    assert fid[Algorithm.BFGS] > 0.999
    assert fid[Algorithm.LBFGS] == pytest.approx(fid[Algorithm.BFGS], abs=1e-3)
    assert fid[Algorithm.BFGS] >= fid[Algorithm.DFP] - 1e-6
    assert fid[Algorithm.DFP] > fid[Algorithm.STEEPEST]

    steepest = results[Algorithm.STEEPEST].records[1:]
    assert sum(r.evals for r in steepest) / len(steepest) >= 5


@pytest.mark.slow
def test_first_order_gradient_falls_short_of_exact(three_spin):
    init = initial_pulse(three_spin, seed=7)
    config = OptimizerConfig(max_iters=200, fidelity_target=UNREACHABLE)
    exact = optimize(three_spin, init, SERIES, config)
    first = optimize(three_spin, init, GradientMethod(name=DerivativeMethod.FIRST_ORDER), config)
    assert exact.fidelity >= 0.99
    assert first.fidelity < exact.fidelity
