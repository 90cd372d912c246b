r"""Evolution kernels of the non-autonomous fractional problem.

.. math::

    \psi(\tau, s) = \tau^{\alpha - 1} E_{\alpha,\alpha}(-\tau^\alpha A(s)),
    \qquad
    \varphi_1(t, \eta) = -[A(t) - A(\eta)] \psi(t - \eta, \eta),

    \varphi = \sum_{k \ge 1} \varphi_k, \qquad
    \varphi_{k + 1}(t, \eta) = \int_\eta^t \varphi_1(t, s) \varphi_k(s, \eta) \,\mathrm{d}s,

    U(t) = -A(t) A^{-1}(0) - \int_0^t \varphi(t, s) A(s) A^{-1}(0) \,\mathrm{d}s.

Integrals against :math:`\psi` use product integration. On each grid interval
the smooth factor is replaced by its linear interpolant and the second
argument of :math:`\psi` is frozen at the node that carries the hat function.
The remaining moments of the Mittag-Leffler kernel are exact:

.. math::

    \int_0^\tau \sigma^{\alpha - 1} E_{\alpha,\alpha}(-\lambda \sigma^\alpha) \,\mathrm{d}\sigma
        = \tau^\alpha E_{\alpha,\alpha+1}(-\lambda \tau^\alpha),

    \int_0^\tau \sigma^{\alpha} E_{\alpha,\alpha}(-\lambda \sigma^\alpha) \,\mathrm{d}\sigma
        = \tau^{\alpha + 1} [E_{\alpha,\alpha+1} - E_{\alpha,\alpha+2}](-\lambda \tau^\alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fracmild.errors import ConvergenceError, DomainError
from fracmild.operator_family import TimeDependentOperator, semigroup_apply
from fracmild.specfun import MLEvalConfig, beta, mittag_leffler


@dataclass(frozen=True)
class KernelConfig:
    phi_series_tol: float = 1.0e-12
    """Relative size of the last retained term of the resolvent series."""
    phi_max_terms: int = 200
    quad_panels: int = 64
    """Local grid intervals used by :func:`phi_apply`, :func:`U_apply`, ..."""
    epsilon_guard: float = 1.0e-9
    """Pairs closer than this to ``t = eta`` are skipped by the bound fits."""
    ml: MLEvalConfig = MLEvalConfig()

    def __post_init__(self) -> None:
        if not self.phi_series_tol > 0:
            raise DomainError(f"phi_series_tol must be positive: {self.phi_series_tol}")
        if self.phi_max_terms < 1:
            raise DomainError(f"phi_max_terms must be positive: {self.phi_max_terms}")
        if self.quad_panels < 2:
            raise DomainError(f"quad_panels must be at least 2: {self.quad_panels}")
        if not self.epsilon_guard > 0:
            raise DomainError(f"epsilon_guard must be positive: {self.epsilon_guard}")


DEFAULT_KERNEL = KernelConfig()

PHI_ABS_FLOOR = 1.0e-14


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1]: {alpha}")


# {{{ pointwise kernels


def psi_apply(op: TimeDependentOperator, dt: float, s: float, alpha: float, v,
              ml_cfg: MLEvalConfig | None = None) -> np.ndarray:
    """``psi(dt, s) v``; for ``alpha = 1`` this is ``exp(-dt A(s)) v``."""
    _check_alpha(alpha)
    if not dt > 0:
        raise DomainError(f"psi is evaluated only for dt > 0, got {dt}")
    if alpha == 1.0:
        return semigroup_apply(op, s, dt, v)

    w, vecs = op.eig(s)
    v = np.asarray(v, dtype=float)
    mult = dt ** (alpha - 1.0) * mittag_leffler(alpha, alpha, -dt**alpha * w, ml_cfg)
    return vecs @ (mult[:, None] * (vecs.T @ v) if v.ndim == 2 else mult * (vecs.T @ v))


def psi_matrix(op: TimeDependentOperator, dt: float, s: float, alpha: float,
               ml_cfg: MLEvalConfig | None = None) -> np.ndarray:
    return psi_apply(op, dt, s, alpha, np.eye(op.dim), ml_cfg)


def phi1(op: TimeDependentOperator, t: float, eta: float, alpha: float,
         ml_cfg: MLEvalConfig | None = None) -> np.ndarray:
    """First resolvent term ``-[A(t) - A(eta)] psi(t - eta, eta)``."""
    if not eta < t:
        raise DomainError(f"phi1 needs eta < t, got eta={eta}, t={t}")
    diff = op.matrix(t) - op.matrix(eta)
    if not diff.any():
        return np.zeros((op.dim, op.dim))
    return -diff @ psi_matrix(op, t - eta, eta, alpha, ml_cfg)


# }}}


# {{{ product integration table


def _moments(alpha: float, lam: np.ndarray, tau: np.ndarray,
             ml_cfg: MLEvalConfig | None) -> tuple[np.ndarray, np.ndarray]:
    # I0 = int_0^tau psi, I1 = int_0^tau sigma psi for the scalar kernel
    ta = tau**alpha
    x = -lam * ta
    e1 = mittag_leffler(alpha, alpha + 1.0, x, ml_cfg)
    e2 = mittag_leffler(alpha, alpha + 2.0, x, ml_cfg)
    return ta * e1, tau * ta * (e1 - e2)


class KernelTable:
    r"""Product-integration weights of :math:`\psi` on a fixed time grid.

    ``weights[i, m]`` holds, per eigenvalue of :math:`A(t_m)`, the integral of
    the scalar kernel :math:`\psi_\lambda(t_i - \eta)` against the hat function
    of node ``m`` over :math:`[0, t_i]`. Rows are independent, so every
    reduction below is done row by row with shapes that depend only on the
    row index; the results do not depend on how rows are scheduled.
    """

    def __init__(self, op: TimeDependentOperator, alpha: float, times: Sequence[float],
                 ml_cfg: MLEvalConfig | None = None) -> None:
        _check_alpha(alpha)
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
            raise DomainError("kernel table needs a strictly increasing grid")

        self.op = op
        self.alpha = alpha
        self.times = times
        n = times.size

        eigs = [op.eig(t) for t in times]
        self.lam = np.stack([w for w, _ in eigs])
        self.vec = np.stack([v for _, v in eigs])
        self.mats = np.stack([op.matrix(t) for t in times])
        # True when all eigenvector bases agree (diagonal families, autonomous ...)
        self.common_basis = bool(np.all(self.vec == self.vec[0]))

        ii, mm = np.tril_indices(n)
        lam = self.lam[mm]
        w = np.zeros((ii.size, op.dim))

        # rising half of the hat on [t_{m-1}, t_m]
        sel = mm >= 1
        ta = (times[ii] - times[mm - 1])[sel, None]
        tb = (times[ii] - times[mm])[sel, None]
        i0a, i1a = _moments(alpha, lam[sel], ta, ml_cfg)
        i0b, i1b = _moments(alpha, lam[sel], tb, ml_cfg)
        h = (times[mm] - times[mm - 1])[sel, None]
        w[sel] += (ta * (i0a - i0b) - (i1a - i1b)) / h

        # falling half on [t_m, t_{m+1}], present when m < i
        sel = mm < ii
        mp = np.minimum(mm + 1, n - 1)
        ta = (times[ii] - times[mm])[sel, None]
        tb = (times[ii] - times[mp])[sel, None]
        i0a, i1a = _moments(alpha, lam[sel], ta, ml_cfg)
        i0b, i1b = _moments(alpha, lam[sel], tb, ml_cfg)
        h = (times[mp] - times[mm])[sel, None]
        w[sel] += ((i1a - i1b) - tb * (i0a - i0b)) / h

        self.weights = np.zeros((n, n, op.dim))
        self.weights[ii, mm] = w

    @property
    def size(self) -> int:
        return self.times.size

    def _to_eig(self, g: np.ndarray) -> np.ndarray:
        # coefficients V_m^T g_m for every node
        if self.common_basis:
            return np.einsum("jk,mj...->mk...", self.vec[0], g)
        return np.einsum("mjk,mj...->mk...", self.vec, g)

    def _row(self, i: int, c: np.ndarray) -> np.ndarray:
        # sum_{m <= i} V_m (w[i, m] * c_m)
        wc = self.weights[i, :i + 1].reshape(i + 1, -1, *([1] * (c.ndim - 2))) * c[:i + 1]
        if self.common_basis:
            return self.vec[0] @ wc.sum(axis=0)
        return np.einsum("mjk,mk...->j...", self.vec[:i + 1], wc)

    def psi_integral_row(self, i: int, g: np.ndarray, c: np.ndarray | None = None) -> np.ndarray:
        r""":math:`\int_0^{t_i} \psi(t_i - \eta, \eta) g(\eta) \,\mathrm{d}\eta` from nodal values."""
        if c is None:
            c = self._to_eig(g)
        return self._row(i, c)

    def psi_integral(self, g: np.ndarray, rows: Sequence[int] | None = None) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        c = self._to_eig(g)
        rows = range(self.size) if rows is None else rows
        return np.stack([self._row(i, c) for i in rows])

    def phi1_row(self, i: int, g: np.ndarray, upto: int | None = None) -> np.ndarray:
        r""":math:`\int_0^{t_i} \varphi_1(t_i, s) g(s) \,\mathrm{d}s` using nodes ``m < upto``."""
        upto = i if upto is None else upto
        if upto == 0:
            return np.zeros_like(g[0])
        w = self.weights[i, :upto].reshape(upto, -1, *([1] * (g.ndim - 2)))
        if self.common_basis:
            # A(t_i) - A(t_m) is diagonal in the shared basis
            c = np.einsum("jk,mj...->mk...", self.vec[0], g[:upto])
            dl = (self.lam[i] - self.lam[:upto]).reshape(w.shape)
            return -(self.vec[0] @ (dl * w * c).sum(axis=0))
        c = np.einsum("mjk,mj...->mk...", self.vec[:upto], g[:upto])
        x = np.einsum("mjk,mk...->mj...", self.vec[:upto], w * c)
        diff = self.mats[i][None] - self.mats[:upto]
        return -np.einsum("mjk,mk...->j...", diff, x)

    def phi1_apply(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        return np.stack([self.phi1_row(i, g) for i in range(self.size)])

    def resolve(self, h: np.ndarray) -> np.ndarray:
        r"""Nodal values of :math:`Y(t) = \int_0^t \varphi(t, s) h(s) \,\mathrm{d}s`.

        Uses the resolvent equation :math:`Y = \int \varphi_1 (h + Y)`, which is
        lower triangular on the grid and is solved by forward substitution.
        """
        h = np.asarray(h, dtype=float)
        y = np.zeros_like(h)
        if self.op.autonomous:
            return y
        for i in range(1, self.size):
            y[i] = self.phi1_row(i, h + y, upto=i)
        return y


def local_grid(start: float, stop: float, panels: int, grading: float = 1.0) -> np.ndarray:
    """``panels + 1`` nodes on ``[start, stop]`` clustered toward *start*."""
    x = np.linspace(0.0, 1.0, panels + 1) ** grading
    out = start + (stop - start) * x
    out[-1] = stop
    return out


# }}}


# {{{ resolvent and U


@dataclass(frozen=True)
class PhiResult:
    value: np.ndarray
    terms: int
    term_norms: tuple[float, ...]


def phi_apply(op: TimeDependentOperator, t: float, eta: float, alpha: float,
              cfg: KernelConfig = DEFAULT_KERNEL, *, full: bool = False) -> np.ndarray | PhiResult:
    r"""Partial sum of the resolvent series :math:`\varphi(t, \eta)`.

    The terms are built on a local grid over :math:`[\eta, t]` by
    :math:`\varphi_{k+1}(\cdot, \eta) = \int \varphi_1(\cdot, s) \varphi_k(s, \eta) \,\mathrm{d}s`.
    With ``cfg.phi_max_terms = 1`` the result equals :func:`phi1`.
    """
    _check_alpha(alpha)
    if not eta < t:
        raise DomainError(f"phi needs eta < t, got eta={eta}, t={t}")

    zero = np.zeros((op.dim, op.dim))
    if op.autonomous:
        return PhiResult(zero, 0, ()) if full else zero

    grid = local_grid(eta, t, cfg.quad_panels, grading=2.0)
    z = np.zeros((grid.size, op.dim, op.dim))
    for p in range(1, grid.size):
        z[p] = phi1(op, grid[p], eta, alpha, cfg.ml)

    # truncation is judged on the whole local grid, not only at s = t
    acc = z.copy()
    norms = [float(np.linalg.norm(z[-1], 2))]
    if cfg.phi_max_terms == 1 or not z.any():
        return PhiResult(acc[-1], 1, tuple(norms)) if full else acc[-1]

    table = KernelTable(op, alpha, grid, cfg.ml)
    for k in range(2, cfg.phi_max_terms + 1):
        z = table.phi1_apply(z)
        acc += z
        norms.append(float(np.linalg.norm(z[-1], 2)))
        if np.abs(z).max() <= max(cfg.phi_series_tol * np.abs(acc).max(), PHI_ABS_FLOOR):
            return PhiResult(acc[-1], k, tuple(norms)) if full else acc[-1]

    raise ConvergenceError(f"resolvent series did not settle in {cfg.phi_max_terms} terms",
                           history=norms)


def _b_values(op: TimeDependentOperator, grid: np.ndarray) -> np.ndarray:
    # B(s) = A(s) A^{-1}(0) at every node
    w0, v0 = op.eig(0.0)
    inv0 = (v0 / w0) @ v0.T
    return np.stack([op.matrix(s) @ inv0 for s in grid])


def U_apply(op: TimeDependentOperator, t: float, alpha: float,
            cfg: KernelConfig = DEFAULT_KERNEL) -> np.ndarray:
    r""":math:`U(t) = -A(t) A^{-1}(0) - \int_0^t \varphi(t, s) A(s) A^{-1}(0) \,\mathrm{d}s`."""
    _check_alpha(alpha)
    if t < 0 or t > op.a * (1.0 + 1.0e-12):
        raise DomainError(f"time {t} lies outside [0, {op.a}]")
    if t == 0.0 or op.autonomous:
        return -_b_values(op, np.array([t]))[0]

    grid = local_grid(0.0, t, cfg.quad_panels)
    b = _b_values(op, grid)
    y = KernelTable(op, alpha, grid, cfg.ml).resolve(b)
    return -b[-1] - y[-1]


def psi_U_integral(op: TimeDependentOperator, t: float, alpha: float, u0_vec,
                   cfg: KernelConfig = DEFAULT_KERNEL) -> np.ndarray:
    r""":math:`\int_0^t \psi(t - \eta, \eta) U(\eta) u_0 \,\mathrm{d}\eta`."""
    _check_alpha(alpha)
    u0 = np.asarray(u0_vec, dtype=float)
    if t < 0 or t > op.a * (1.0 + 1.0e-12):
        raise DomainError(f"time {t} lies outside [0, {op.a}]")
    if t == 0.0:
        return np.zeros_like(u0)

    grid = local_grid(0.0, t, cfg.quad_panels)
    table = KernelTable(op, alpha, grid, cfg.ml)
    bu = np.einsum("mjk,k->mj", _b_values(op, grid), u0)
    uu = -bu - table.resolve(bu)
    return table.psi_integral_row(grid.size - 1, uu)


# }}}


# {{{ bound constants


@dataclass(frozen=True)
class KernelBounds:
    """Fitted constants of the kernel bounds, one per inequality."""

    psi: float
    """``||psi(t - eta, eta)|| <= C (t - eta)^(alpha - 1)``"""
    phi: float
    """``||phi(t, eta)|| <= C (t - eta)^(gamma - 1)``"""
    U: float
    """``||U(t)|| <= C (1 + t^gamma)``"""
    psi_U: float
    """``||int psi U u0|| <= C^2 t^alpha (1/alpha + t^gamma B(alpha, gamma + 1)) ||u0||``"""


def fit_kernel_bounds(op: TimeDependentOperator, alpha: float,
                      cfg: KernelConfig = DEFAULT_KERNEL, samples: int = 6,
                      u0=None) -> KernelBounds:
    """Fit the constants of the kernel bounds on a coarse sample grid."""
    gam = op.hoelder_gamma
    ts = np.linspace(0.0, op.a, samples + 1)

    c_psi = c_phi = 0.0
    for t in ts[1:]:
        for eta in ts[ts < t]:
            dt = t - eta
            if dt <= cfg.epsilon_guard:
                continue
            c_psi = max(c_psi, np.linalg.norm(psi_matrix(op, dt, eta, alpha, cfg.ml), 2)
                        * dt ** (1.0 - alpha))
            if not op.autonomous:
                c_phi = max(c_phi, np.linalg.norm(phi_apply(op, t, eta, alpha, cfg), 2)
                            * dt ** (1.0 - gam))

    c_u = max(np.linalg.norm(U_apply(op, t, alpha, cfg), 2) / (1.0 + t**gam) for t in ts)

    u0 = np.ones(op.dim) if u0 is None else np.asarray(u0, dtype=float)
    c_pu = 0.0
    for t in ts[1:]:
        val = np.linalg.norm(psi_U_integral(op, t, alpha, u0, cfg))
        den = t**alpha * (1.0 / alpha + t**gam * beta(alpha, gam + 1.0)) * np.linalg.norm(u0)
        c_pu = max(c_pu, math.sqrt(val / den))

    return KernelBounds(psi=float(c_psi), phi=float(c_phi), U=float(c_u), psi_U=float(c_pu))


# }}}
