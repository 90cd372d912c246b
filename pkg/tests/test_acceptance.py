"""Acceptance criteria 1 to 10, one test each.

Every test records a single ``PASS``/``FAIL`` line in :data:`RESULTS`; the
conftest prints them after the run. ``python3 tests/test_acceptance.py`` runs
the same checks without pytest.
"""

from __future__ import annotations

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import expm

import _oracle_values as ov
from fracmild import hypotheses as hyp
from fracmild.kernels import U_apply, phi_apply, psi_apply
from fracmild.mild_solver import SolverConfig, solve_picard, solve_reference
from fracmild.operator_family import ml_matrix_apply, random_spd_family, semigroup_apply
from fracmild.problems import (
    HeatProblemConfig, build_example_41, build_nonautonomous_benchmark,
    build_scalar_benchmark)
from fracmild.quadrature import (
    double_singular_integrate, double_singular_integrate_direct, semi_infinite_quad)
from fracmild.specfun import mittag_leffler, xi_density

ROOT = Path(__file__).resolve().parents[1]
RESULTS: dict[int, str] = {}

ALPHAS = (0.3, 0.5, 0.7, 0.9)
XS = (0.1, 1.0, 5.0, 10.0)


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


# {{{ 1-3: identities


def test_criterion_01_laplace_transform_of_xi():
    t0 = time.perf_counter()
    worst = 0.0
    for al in ALPHAS:
        for x in XS:
            val = semi_infinite_quad(lambda th: np.exp(-x * th) * xi_density(al, th))
            ref = ov.ML_NEG[al, x]
            worst = max(worst, abs(val / ref - 1.0),
                        abs(mittag_leffler(al, 1.0, -x) / ref - 1.0))
    dt = time.perf_counter() - t0
    record(1, worst <= 1e-6 and dt < 10.0, f"max rel err {worst:.2e} (tol 1e-6), {dt:.2f} s (< 10 s)")


def test_criterion_02_subordination_identity():
    worst = 0.0
    for al in ALPHAS:
        for x in XS:
            val = al * semi_infinite_quad(lambda th: th * np.exp(-x * th) * xi_density(al, th))
            ref = ov.ML2_NEG[al, x]
            worst = max(worst, abs(val / ref - 1.0),
                        abs(mittag_leffler(al, al, -x) / ref - 1.0))
    record(2, worst <= 1e-6, f"max rel err {worst:.2e} (tol 1e-6)")


def test_criterion_03_double_integral_reduction():
    t0 = time.perf_counter()
    gs = {"one": np.ones_like, "s": lambda s: s, "exp": np.exp}
    worst = worst_oracle = 0.0
    for al in (0.4, 0.6, 1.0):
        for ga in (0.4, 0.6, 1.0):
            for name, g in gs.items():
                red = double_singular_integrate(al, ga, 1.0, g)
                direct = double_singular_integrate_direct(al, ga, 1.0, g)
                worst = max(worst, abs(red / direct - 1.0))
                worst_oracle = max(worst_oracle, abs(red / ov.DOUBLE[al, ga, name] - 1.0))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and worst_oracle <= 1e-6 and dt < 5.0
    record(3, ok, f"reduced vs double {worst:.2e}, vs mpmath {worst_oracle:.2e} "
                  f"(tol 1e-6), {dt:.2f} s (< 5 s)")


# }}}


# {{{ 4: alpha = 1 reduction


def test_criterion_04_alpha_one_reduction():
    rng = np.random.default_rng(4)
    worst_psi = worst_phi = worst_U = 0.0
    for dim in range(1, 9):
        op = random_spd_family(dim, seed=dim)
        for _ in range(3):
            s = rng.uniform(0.0, 1.0)
            dt = rng.uniform(1e-3, 1.0)
            v = rng.standard_normal(dim)
            ref = expm(-dt * op.matrix(s)) @ v
            for got in (psi_apply(op, dt, s, 1.0, v), semigroup_apply(op, s, dt, v),
                        ml_matrix_apply(op, s, 1.0, 1.0, dt, v)):
                worst_psi = max(worst_psi, np.abs(got - ref).max() / max(1.0, np.abs(ref).max()))

        auto = random_spd_family(dim, seed=dim, autonomous=True)
        for t, eta in ((1.0, 0.0), (0.7, 0.2)):
            for alpha in (0.5, 1.0):
                worst_phi = max(worst_phi, np.abs(phi_apply(auto, t, eta, alpha)).max())
        for t in (0.0, 0.5, 1.0):
            worst_U = max(worst_U, np.abs(U_apply(auto, t, 0.7) + np.eye(dim)).max())
    # U = -A A^{-1}(0) is exact up to the roundoff of one eigen-solve
    ok = worst_psi <= 1e-8 and worst_phi == 0.0 and worst_U <= 1e-12
    record(4, ok, f"psi vs semigroup {worst_psi:.2e} (tol 1e-8), max|phi| {worst_phi:.1e} "
                  f"(exact 0), max|U + I| {worst_U:.1e}")


# }}}


# {{{ 5-7: solver oracles


def test_criterion_05_scalar_fractional_oracle():
    t0 = time.perf_counter()
    worst = worst_exact = 0.0
    for lam in (1.0, 4.0):
        for al in (0.5, 0.8):
            bm = build_scalar_benchmark(lam, al)
            sol = solve_picard(bm.problem, SolverConfig(grid_points=256))
            tr = sol.trajectory
            worst = max(worst, float(np.abs(tr.values - bm.exact(tr.times)).max()))
            worst_exact = max(worst_exact,
                              abs(float(bm.exact(1.0)[0, 0]) - ov.SCALAR_AT_1[lam, al]))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-4 and worst_exact <= 1e-10 and dt < 30.0
    record(5, ok, f"sup err {worst:.2e} (tol 1e-4), closed form vs mpmath {worst_exact:.1e}, "
                  f"{dt:.2f} s (< 30 s)")


def test_criterion_06_classical_nonautonomous_oracle():
    worst = worst_exact = 0.0
    for f in (0.0, 1.0):
        bm = build_nonautonomous_benchmark(f)
        sol = solve_picard(bm.problem, SolverConfig(grid_points=256))
        tr = sol.trajectory
        worst = max(worst, float(np.abs(tr.values - bm.exact(tr.times)).max()))
        worst_exact = max(worst_exact, abs(float(bm.exact(1.0)[0, 0]) - ov.NONAUT_AT_1[f]))
    ok = worst <= 1e-4 and worst_exact <= 1e-12
    record(6, ok, f"sup err {worst:.2e} (tol 1e-4), closed form vs mpmath {worst_exact:.1e}")


def test_criterion_07_dual_solver_cross_check():
    p = build_example_41(HeatProblemConfig(n_modes=8, alpha=0.6))
    cfg = SolverConfig(grid_points=256)
    pic = solve_picard(p, cfg)
    ref = solve_reference(p, cfg)
    diff = float(np.linalg.norm(pic.trajectory.values - ref.trajectory.values, axis=1).max())
    ok = pic.converged and pic.residual <= 1e-6 and diff <= 5e-3
    record(7, ok, f"sup |picard - L1| {diff:.2e} (budget 5e-3), picard residual "
                  f"{pic.residual:.1e} (tol 1e-6)")


# }}}


# {{{ 8-9: hypothesis audit


def _heat_inputs() -> hyp.HypothesisInputs:
    return hyp.HypothesisInputs(alpha=0.6, beta_exp=0.0, gamma_exp=0.5, C=1.0, a=1.0,
                                rho=0.0, L1=1.0, L2=1.0, L3=1.0, K0=1.0, H0=1.0,
                                u0_norm=1.0, phi_norm=ov.PHI_SUP_HEAT,
                                Phi=lambda r: 1.0, Phi_slope=0.0)


def test_criterion_08_hypothesis_audit():
    rep = hyp.audit(_heat_inputs(), legacy_l123=(1.0, 1.0, 1.0))
    t1, leg = rep.verdicts["theorem1"], rep.verdicts["legacy_split"]
    ok = (t1.passed and t1.lhs == 0.0 and t1.rhs == 1.0
          and not leg.passed and leg.lhs == pytest.approx(6.0, abs=1e-14)
          and rep.delta1 == pytest.approx(ov.DELTA1_HEAT, rel=1e-13)
          and rep.delta2 == pytest.approx(ov.DELTA2_HEAT, rel=1e-13))
    record(8, ok, f"theorem1: {t1.lhs:g} < 1 {'pass' if t1.passed else 'fail'}; "
                  f"legacy_split: {leg.lhs:g} >= 1 {'fails' if not leg.passed else 'passes'}; "
                  f"delta1 {rep.delta1:.12g}, delta2 {rep.delta2:.12g}")


# (C, M, alpha, gamma, a): the heat example and two reference sets
PARAMETER_SETS = tuple(ov.N0)


def _sadovskii_expr(C, M, alpha, gamma, a):
    g = math.gamma
    return (4 * C * M * g(alpha) * a**alpha / g(1 + alpha)
            + 8 * C * C * M * g(alpha) * g(gamma) * a**(alpha + gamma) / g(1 + alpha + gamma))


def test_criterion_09_n0_machinery():
    t0 = time.perf_counter()
    problems = []
    for ps in PARAMETER_SETS:
        c1 = hyp.mnc_bound_coeff(1, *ps)
        if abs(c1 / _sadovskii_expr(*ps) - 1.0) > 1e-12:
            problems.append(f"c_1 mismatch at {ps}")
        n0 = hyp.find_n0(*ps)
        if n0 != ov.N0[ps]:
            problems.append(f"n0 {n0} != {ov.N0[ps]} at {ps}")
        if n0 > 1 and hyp.log_mnc_bound_coeff(n0 - 1, *ps) < 0.0:
            problems.append(f"n0 not minimal at {ps}")
        logs = [hyp.log_mnc_bound_coeff(n, *ps) for n in range(n0, n0 + 31)]
        if np.any(np.diff(logs) >= 0):
            problems.append(f"not decreasing past n0 at {ps}")
        if logs[-1] >= math.log(1e-3):
            problems.append(f"c_(n0+30) = {math.exp(logs[-1]):.2e} >= 1e-3 at {ps}")
    dt = time.perf_counter() - t0
    heat = PARAMETER_SETS[0]
    tail = hyp.log_mnc_bound_coeff(ov.N0[heat] + 30, *heat)
    if abs(tail - ov.LOG_C_HEAT_N0_PLUS_30) > 1e-9 * abs(tail):
        problems.append("heat tail coefficient differs from mpmath")
    ok = not problems and dt < 1.0
    record(9, ok, f"n0 = {[ov.N0[p] for p in PARAMETER_SETS]}, heat c_(n0+30) = "
                  f"{math.exp(tail):.2e} (< 1e-3), {dt:.2f} s (< 1 s)"
                  + (f"; {'; '.join(problems)}" if problems else ""))


# }}}


# {{{ 10: determinism


def _solve_csv(tmp: Path, threads: int) -> bytes:
    out = tmp / f"t{threads}"
    env = dict(os.environ, FRAC_MILD_THREADS=str(threads))
    subprocess.run([sys.executable, "-m", "fracmild.cli", "solve", "--config",
                    str(ROOT / "configs" / "heat.toml"), "--out", str(out)],
                   check=True, env=env, capture_output=True)
    return (out / "trajectory.csv").read_bytes()


def test_criterion_10_determinism(tmp_path):
    a = _solve_csv(tmp_path, 1)
    b = _solve_csv(tmp_path, 4)
    record(10, a == b and len(a) > 0,
           f"trajectory.csv with 1 and 4 threads: {'byte-identical' if a == b else 'DIFFERENT'} "
           f"({len(a)} bytes)")


# }}}


if __name__ == "__main__":
    import tempfile

    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_")):
        try:
            if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
