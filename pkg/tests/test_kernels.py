from __future__ import annotations

import math

import numpy as np
import pytest

from fracmild.errors import ConvergenceError, DomainError
from fracmild.kernels import (
    KernelConfig, KernelTable, U_apply, fit_kernel_bounds, local_grid, phi1, phi_apply,
    psi_apply, psi_matrix, psi_U_integral)
from fracmild.operator_family import (
    diagonal_family, heat_family, linear_family, random_spd_family, scalar_family)
from fracmild.specfun import mittag_leffler


def test_psi_scalar_closed_form():
    op = scalar_family(3.0)
    for alpha in (0.4, 0.9):
        got = psi_apply(op, 0.7, 0.0, alpha, [1.0])[0]
        ref = 0.7 ** (alpha - 1) * mittag_leffler(alpha, alpha, -3.0 * 0.7**alpha)
        assert got == pytest.approx(ref, rel=1e-14)
    with pytest.raises(DomainError):
        psi_apply(op, 0.0, 0.0, 0.5, [1.0])
    with pytest.raises(DomainError):
        psi_apply(op, 0.1, 0.0, 1.5, [1.0])


def test_psi_matrix_is_symmetric():
    op = random_spd_family(4, seed=5)
    m = psi_matrix(op, 0.3, 0.2, 0.6)
    np.testing.assert_allclose(m, m.T, atol=1e-14)


def test_phi1_sign_and_value():
    # A = 1 + t, alpha = 1: phi1(t, eta) = -(t - eta) exp(-(t - eta)(1 + eta))
    op = linear_family([[1.0]])
    t, eta = 1.0, 0.2
    assert phi1(op, t, eta, 1.0)[0, 0] == pytest.approx(
        -(t - eta) * math.exp(-(t - eta) * (1 + eta)), rel=1e-14)
    np.testing.assert_array_equal(phi1(scalar_family(2.0), 1.0, 0.0, 0.5), 0.0)
    with pytest.raises(DomainError):
        phi1(op, 0.2, 0.2, 1.0)


@pytest.mark.parametrize("alpha", (0.5, 1.0))
def test_table_integrates_linear_data_exactly(alpha):
    # int_0^t psi(t - eta) eta^p d eta = t^(alpha + p) p! E_{alpha, alpha + p + 1}(-lam t^alpha)
    lam = 2.5
    times = np.sort(np.concatenate([[0.0, 1.0], np.random.default_rng(1).uniform(0, 1, 10)]))
    table = KernelTable(scalar_family(lam), alpha, times)
    for p in (0, 1):
        got = table.psi_integral(times[:, None] ** p)[:, 0]
        ref = (times ** (alpha + p) * math.factorial(p)
               * mittag_leffler(alpha, alpha + p + 1.0, -lam * times**alpha))
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-15)


def test_phi_series_structure():
    op = linear_family([[1.0]])
    cfg1 = KernelConfig(phi_max_terms=1)
    np.testing.assert_allclose(phi_apply(op, 0.9, 0.1, 0.7, cfg1), phi1(op, 0.9, 0.1, 0.7),
                               rtol=1e-15)
    res = phi_apply(op, 1.0, 0.0, 0.7, full=True)
    assert res.terms >= 2
    assert all(b < a for a, b in zip(res.term_norms, res.term_norms[1:]))
    np.testing.assert_array_equal(phi_apply(scalar_family(1.0), 1.0, 0.0, 0.5), 0.0)
    with pytest.raises(ConvergenceError):
        phi_apply(op, 1.0, 0.0, 0.7, KernelConfig(phi_max_terms=2, phi_series_tol=1e-15))


def test_phi_resolvent_reproduces_fundamental_solution():
    # alpha = 1, A = 1 + t: exp(-int_0^t A) = psi(t, 0) + int_0^t psi(t - s, s) phi(s, 0) ds
    op = linear_family([[1.0]])
    x, w = np.polynomial.legendre.leggauss(20)
    s, w = (x + 1) / 2, w / 2
    exact = math.exp(-1.5)
    errs = []
    for panels in (32, 64):
        cfg = KernelConfig(quad_panels=panels)
        integral = sum(wk * math.exp(-(1 - sk) * (1 + sk)) * phi_apply(op, sk, 0.0, 1.0, cfg)[0, 0]
                       for sk, wk in zip(s, w))
        errs.append(abs(math.exp(-1.0) + integral - exact))
    assert errs[1] <= 2e-5 * exact
    # product integration on the local grid is second order
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)


def test_U_and_psi_U_for_autonomous_family():
    lam = 3.0
    op = scalar_family(lam)
    np.testing.assert_allclose(U_apply(op, 0.6, 0.5), [[-1.0]], rtol=1e-15)
    for alpha in (0.5, 1.0):
        got = psi_U_integral(op, 0.8, alpha, [2.0])[0]
        ref = -2.0 * 0.8**alpha * mittag_leffler(alpha, alpha + 1.0, -lam * 0.8**alpha)
        assert got == pytest.approx(ref, rel=1e-12)
    assert np.all(psi_U_integral(op, 0.0, 0.5, [2.0]) == 0.0)


def test_U_nonautonomous_at_zero():
    op = diagonal_family([1.0, 2.0], kappa=lambda t: 1.0 + t)
    np.testing.assert_allclose(U_apply(op, 0.0, 0.5), -np.eye(2), atol=1e-15)


def test_local_grid():
    g = local_grid(0.2, 1.0, 8, grading=2.0)
    assert g[0] == 0.2 and g[-1] == 1.0 and g.size == 9
    assert np.all(np.diff(np.diff(g)) > 0)


def test_fit_kernel_bounds_heat():
    op = heat_family(4).with_hoelder(0.5, 0.5)
    kb = fit_kernel_bounds(op, 0.6, samples=3)
    for v in (kb.psi, kb.phi, kb.U, kb.psi_U):
        assert 0.0 < v <= 1.0
