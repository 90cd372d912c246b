from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

import _oracle_values as ov
from fracmild.errors import DomainError
from fracmild.mild_solver import SolverConfig, solve_picard
from fracmild.problems import (
    HeatProblemConfig, SineTransform, build_example_41, build_nonautonomous_benchmark,
    build_scalar_benchmark, heat_operator, parabola_coeffs, phi_sup_41, psi_r_41,
    verify_f_assumptions_41)


def test_sine_transform_roundtrip_and_norm():
    tr = SineTransform(6)
    c = np.random.default_rng(2).standard_normal((3, 6))
    np.testing.assert_allclose(tr.analyze(tr.synthesize(c)), c, atol=1e-14)
    # e_1 = sqrt(2) sin(pi x) has unit L2 norm
    vals = tr.synthesize(np.eye(6)[0])
    np.testing.assert_allclose(vals, math.sqrt(2) * np.sin(np.pi * tr.x), atol=1e-14)
    assert tr.l2_norm(vals) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(DomainError):
        SineTransform(0)


def test_parabola_coefficients():
    for k, c in enumerate(parabola_coeffs(5), start=1):
        ref = integrate.quad(lambda x: x * (1 - x) * math.sqrt(2) * math.sin(k * math.pi * x),
                             0, 1)[0]
        assert c == pytest.approx(ref, abs=1e-14)


def test_heat_operator_and_initial_states():
    cfg = HeatProblemConfig(n_modes=4)
    op = heat_operator(cfg)
    np.testing.assert_allclose(np.diag(op.matrix(1.0)),
                               1.5 * (np.pi * np.arange(1, 5)) ** 2, rtol=1e-14)
    p = build_example_41(cfg)
    np.testing.assert_allclose(p.initial_state(),
                               parabola_coeffs(4) / (np.pi * np.arange(1, 5)) ** 2, rtol=1e-14)
    q = build_example_41(HeatProblemConfig(n_modes=4, initial_state="pointwise"))
    np.testing.assert_allclose(q.initial_state(), parabola_coeffs(4), rtol=1e-14)
    assert heat_operator(HeatProblemConfig(n_modes=2, kappa_amplitude=0.0)).autonomous
    with pytest.raises(DomainError):
        HeatProblemConfig(initial_state="guess")
    with pytest.raises(DomainError):
        heat_operator(HeatProblemConfig(kappa=lambda t: 1.0 - 2.0 * t))


def test_heat_picard_converges_and_graded_grid_agrees():
    p = build_example_41(HeatProblemConfig(n_modes=4))
    a = solve_picard(p, SolverConfig(grid_points=64))
    b = solve_picard(p, SolverConfig(grid_points=64, grading="graded"))
    assert a.converged and b.converged
    assert abs(a.trajectory.values[-1] - b.trajectory.values[-1]).max() < 1e-3


def test_f_assumptions_hold():
    rep = verify_f_assumptions_41(HeatProblemConfig(n_modes=6), samples=100)
    assert rep.growth_ok and rep.growth_max_ratio <= 1.0
    assert rep.lipschitz_ok and max(rep.lipschitz) <= 1.0
    assert (rep.K0, rep.H0) == (1.0, 1.0)


def test_phi_sup():
    assert phi_sup_41() == pytest.approx(ov.PHI_SUP_HEAT, rel=1e-14)
    assert psi_r_41(0.0) == 2.0


def test_benchmarks():
    bm = build_scalar_benchmark(4.0, 0.8)
    assert bm.exact(1.0)[0, 0] == pytest.approx(ov.SCALAR_AT_1[4.0, 0.8], rel=1e-13)
    nb = build_nonautonomous_benchmark(1.0)
    ode = integrate.solve_ivp(lambda t, y: 1.0 - (1 + t) * y, (0, 1), [1.0],
                              rtol=1e-12, atol=1e-14, dense_output=True)
    t = np.linspace(0, 1, 7)
    np.testing.assert_allclose(nb.exact(t)[:, 0], ode.sol(t)[0], rtol=1e-9)


def test_parseval_consistency():
    tr = SineTransform(8)
    c = np.random.default_rng(3).standard_normal((5, 8))
    np.testing.assert_allclose(tr.l2_norm(tr.synthesize(c)), np.linalg.norm(c, axis=1),
                               rtol=1e-10)


def test_heat_trajectory_stays_in_radius_ball():
    from fracmild import hypotheses as hyp

    p = build_example_41(HeatProblemConfig(n_modes=8))
    inp = hyp.HypothesisInputs(alpha=0.6, beta_exp=0.0, gamma_exp=0.5, C=1.0, a=1.0,
                               L1=1.0, L2=1.0, L3=1.0, K0=1.0, H0=1.0,
                               u0_norm=float(np.linalg.norm(p.u0)), phi_norm=phi_sup_41(),
                               Phi=lambda r: 1.0)
    R = hyp.find_radius(inp)
    sol = solve_picard(p, SolverConfig(grid_points=64))
    assert sol.trajectory.sup_norm() <= R


def test_mode_truncation_convergence():
    norms = {}
    for n in (4, 8):
        sol = solve_picard(build_example_41(HeatProblemConfig(n_modes=n)),
                           SolverConfig(grid_points=64))
        norms[n] = np.linalg.norm(sol.trajectory.values, axis=1)
    # tail of the datum's coefficients beyond mode 4
    tail = np.linalg.norm(parabola_coeffs(64)[4:])
    assert np.abs(norms[8] - norms[4]).max() < tail


def test_nonautonomous_phi_truncation_is_measurable():
    from fracmild.kernels import KernelConfig, phi_apply

    op = build_nonautonomous_benchmark().problem.op
    one = phi_apply(op, 1.0, 0.0, 1.0, KernelConfig(phi_max_terms=1))
    full = phi_apply(op, 1.0, 0.0, 1.0)
    assert np.abs(full).max() > 0.1
    assert np.abs(full - one).max() > 1e-3
