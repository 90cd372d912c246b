from __future__ import annotations

import math

import numpy as np
import pytest

from fracmild.errors import ConvergenceError, DomainError, EvaluationError
from fracmild.integral_ops import TrajectoryGrid, exp_abs, linear_lag
from fracmild.mild_solver import (
    MildOperator, ProblemSpec, SolverConfig, apply_Q, residual, solve_picard,
    solve_reference)
from fracmild.operator_family import diagonal_family, random_spd_family, scalar_family
from fracmild.problems import build_scalar_benchmark
from fracmild.specfun import mittag_leffler


def _memory_problem(alpha=0.7, dim=3):
    op = random_spd_family(dim, seed=11)

    def f(t, u, tu, su):
        return np.sin(u) + 0.5 * tu + 0.3 * su + np.cos(t)[:, None]

    return ProblemSpec(alpha=alpha, a=1.0, op=op, u0=np.linspace(1.0, -1.0, dim), f=f,
                       K=linear_lag(0.5), H=exp_abs(0.2, 1.0), name="memory")


def test_config_validation_and_grid(monkeypatch):
    with pytest.raises(DomainError):
        SolverConfig(grid_points=4)
    with pytest.raises(DomainError):
        SolverConfig(grading="log")
    with pytest.raises(DomainError):
        SolverConfig(damping=1.0)
    g = SolverConfig(grid_points=8, grading="graded").time_grid(2.0, 0.5)
    np.testing.assert_allclose(g, 2.0 * (np.arange(9) / 8) ** 2)
    monkeypatch.setenv("FRAC_MILD_THREADS", "3")
    assert SolverConfig().worker_count() == 3
    monkeypatch.setenv("FRAC_MILD_THREADS", "zero")
    with pytest.raises(DomainError):
        SolverConfig().worker_count()
    assert SolverConfig(threads=2).worker_count() == 2


def test_problem_validation():
    op = scalar_family(1.0)
    with pytest.raises(DomainError):
        ProblemSpec(alpha=1.2, a=1.0, op=op, u0=[1.0])
    with pytest.raises(DomainError):
        ProblemSpec(alpha=0.5, a=2.0, op=op, u0=[1.0])
    with pytest.raises(DomainError):
        ProblemSpec(alpha=0.5, a=1.0, op=op, u0=[1.0, 2.0])


@pytest.mark.parametrize("alpha", (0.4, 1.0))
def test_constant_forcing_is_exact(alpha):
    # u = x0 E_a(-lam t^a) + c t^a E_{a, a+1}(-lam t^a) with x0 = u0 / lam
    lam, c = 2.0, 1.5
    p = ProblemSpec(alpha=alpha, a=1.0, op=scalar_family(lam), u0=[1.0],
                    f=lambda t, u, tu, su: np.full_like(u, c))
    sol = solve_picard(p, SolverConfig(grid_points=64))
    t = sol.trajectory.times
    x = -lam * t**alpha
    exact = mittag_leffler(alpha, 1.0, x) / lam + c * t**alpha * mittag_leffler(
        alpha, alpha + 1.0, x)
    np.testing.assert_allclose(sol.trajectory.values[:, 0], exact, atol=1e-13)


def test_fixed_point_consistency_and_residual():
    p = _memory_problem()
    cfg = SolverConfig(grid_points=64, picard_tol=1e-10)
    sol = solve_picard(p, cfg)
    assert sol.converged and sol.residual <= cfg.picard_tol
    assert residual(p, cfg, sol.trajectory) == pytest.approx(sol.residual, rel=1e-12, abs=1e-16)
    assert all(r < 1 for r in sol.contraction_estimates)
    qu = apply_Q(p, cfg, sol.trajectory)
    assert isinstance(qu, TrajectoryGrid)
    with pytest.raises(DomainError):
        apply_Q(p, cfg, TrajectoryGrid(np.linspace(0, 1, 5), np.zeros((5, 3))))


def test_picard_self_convergence_with_memory_terms():
    p = _memory_problem(alpha=0.8)
    coarse = solve_picard(p, SolverConfig(grid_points=64, picard_tol=1e-12))
    fine = solve_picard(p, SolverConfig(grid_points=128, picard_tol=1e-12))
    gap = np.abs(fine.trajectory.values[::2] - coarse.trajectory.values).max()
    assert gap < 1e-3
    ref = solve_reference(p, SolverConfig(grid_points=128, picard_tol=1e-12))
    assert np.abs(ref.trajectory.values - fine.trajectory.values).max() < 2e-2


def test_vectorized_and_pointwise_f_agree():
    p = _memory_problem()
    f = p.f
    q = ProblemSpec(alpha=p.alpha, a=p.a, op=p.op, u0=p.u0,
                    f=lambda t, u, tu, su: f(np.atleast_1d(t), u[None], tu[None], su[None])[0],
                    K=p.K, H=p.H, f_vectorized=False)
    cfg = SolverConfig(grid_points=32)
    np.testing.assert_allclose(solve_picard(p, cfg).trajectory.values,
                               solve_picard(q, cfg).trajectory.values, rtol=1e-14, atol=1e-15)


def test_threads_give_identical_bits():
    p = _memory_problem()
    a = solve_picard(p, SolverConfig(grid_points=48, threads=1)).trajectory.values
    b = solve_picard(p, SolverConfig(grid_points=48, threads=3)).trajectory.values
    assert a.tobytes() == b.tobytes()


def test_damping_reaches_the_same_fixed_point():
    p = _memory_problem()
    a = solve_picard(p, SolverConfig(grid_points=32, picard_tol=1e-12))
    b = solve_picard(p, SolverConfig(grid_points=32, picard_tol=1e-12, damping=0.3))
    assert b.iterations > a.iterations
    np.testing.assert_allclose(a.trajectory.values, b.trajectory.values, atol=1e-10)


def test_nonconvergence_carries_partial_solution():
    p = ProblemSpec(alpha=0.5, a=1.0, op=scalar_family(1.0), u0=[1.0],
                    f=lambda t, u, tu, su: 40.0 * np.sin(u))
    cfg = SolverConfig(grid_points=16, picard_max_iters=3)
    with pytest.raises(ConvergenceError) as info:
        solve_picard(p, cfg)
    sol = info.value.solution
    assert not sol.converged and sol.iterations == 3 and len(sol.residual_history) == 4
    assert solve_picard(p, cfg, raise_on_failure=False).residual == sol.residual


def test_non_finite_f_is_reported():
    p = ProblemSpec(alpha=0.5, a=1.0, op=scalar_family(1.0), u0=[1.0],
                    f=lambda t, u, tu, su: np.where(t[:, None] > 0.5, np.nan, u))
    with pytest.raises(EvaluationError) as info:
        solve_picard(p, SolverConfig(grid_points=16))
    assert info.value.node[0] > 0.5


def test_reference_solver_orders():
    for alpha, expected in ((1.0, 1.0), (0.8, 0.8)):
        bm = build_scalar_benchmark(1.0, alpha)
        errs = []
        for n in (64, 128):
            sol = solve_reference(bm.problem, SolverConfig(grid_points=n))
            errs.append(np.abs(sol.trajectory.values - bm.exact(sol.trajectory.times)).max())
        assert math.log2(errs[0] / errs[1]) == pytest.approx(expected, abs=0.05)


def test_initial_state_override():
    op = diagonal_family([1.0, 4.0])
    p = ProblemSpec(alpha=0.5, a=1.0, op=op, u0=[1.0, 1.0])
    np.testing.assert_allclose(p.initial_state(), [1.0, 0.25])
    q = ProblemSpec(alpha=0.5, a=1.0, op=op, u0=[1.0, 1.0],
                    initial_state_override=np.array([2.0, 3.0]))
    np.testing.assert_array_equal(solve_picard(q, SolverConfig(grid_points=8))
                                  .trajectory.values[0], [2.0, 3.0])
    assert MildOperator(q, SolverConfig(grid_points=8)).x0.tolist() == [2.0, 3.0]
