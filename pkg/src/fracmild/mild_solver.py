r"""Mild solutions by Picard iteration of the solution operator :math:`Q`.

For the problem

.. math::

    {}^C\!D^\alpha_t u + A(t) u = f(t, u, Tu, Su), \qquad u(0) = A^{-1}(0) u_0,

the operator is

.. math::

    (Qu)(t) = A^{-1}(0) u_0 + \int_0^t \psi(t - \eta, \eta) U(\eta) u_0 \,\mathrm{d}\eta
        + \int_0^t \psi(t - \eta, \eta) F(\eta) \,\mathrm{d}\eta
        + \int_0^t \psi(t - \eta, \eta) \int_0^\eta \varphi(\eta, s) F(s)
            \,\mathrm{d}s \,\mathrm{d}\eta

with :math:`F = f(\cdot, u, Tu, Su)`. Expanding :math:`U` shows that the three
integrals combine into

.. math::

    \int_0^t \psi(t - \eta, \eta) [h(\eta) + Y(\eta)] \,\mathrm{d}\eta,
    \qquad h = F - A(\cdot) A^{-1}(0) u_0, \qquad
    Y(\eta) = \int_0^\eta \varphi(\eta, s) h(s) \,\mathrm{d}s,

and :math:`Y` solves the Volterra equation :math:`Y = \int \varphi_1 (h + Y)`.
So one evaluation of :math:`f` per node and one forward substitution per
application of :math:`Q` suffice; the resolvent series is never summed
explicitly.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from fracmild.errors import ConditioningError, ConvergenceError, DomainError, EvaluationError
from fracmild.integral_ops import (
    BivariateKernel, TrajectoryGrid, constant, fredholm_matrix, volterra_matrix)
from fracmild.kernels import DEFAULT_KERNEL, KernelConfig, KernelTable
from fracmild.operator_family import TimeDependentOperator, apply_A_inverse


# {{{ problem and configuration


NonlinearityFn = Callable[..., np.ndarray]


def zero_nonlinearity(t, u, tu, su):
    return np.zeros_like(u)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Data of the initial value problem.

    ``f(t, u, Tu, Su)`` returns a vector of length ``dim``. With
    ``f_vectorized=True`` it is called once with ``t`` of shape ``(n,)`` and
    the states of shape ``(n, dim)``.
    """

    alpha: float
    a: float
    op: TimeDependentOperator
    u0: np.ndarray
    f: NonlinearityFn = zero_nonlinearity
    K: BivariateKernel = field(default_factory=lambda: constant(0.0, "triangle"))
    H: BivariateKernel = field(default_factory=lambda: constant(0.0, "square"))
    f_vectorized: bool = True
    initial_state_override: np.ndarray | None = None
    """Use this as ``u(0)`` instead of ``A^{-1}(0) u0`` (see the heat problem)."""
    name: str = "custom"

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in (0, 1]: {self.alpha}")
        if not self.a > 0:
            raise DomainError(f"a must be positive: {self.a}")
        if abs(self.op.a - self.a) > 1.0e-12 * self.a:
            raise DomainError(f"operator horizon {self.op.a} differs from a={self.a}")
        u0 = np.atleast_1d(np.asarray(self.u0, dtype=float))
        if u0.shape != (self.op.dim,):
            raise DomainError(f"u0 has shape {u0.shape}, expected ({self.op.dim},)")
        object.__setattr__(self, "u0", u0)
        if self.initial_state_override is not None:
            x0 = np.asarray(self.initial_state_override, dtype=float)
            if x0.shape != u0.shape:
                raise DomainError("initial state override has the wrong shape")
            object.__setattr__(self, "initial_state_override", x0)

    @property
    def dim(self) -> int:
        return self.op.dim

    def initial_state(self) -> np.ndarray:
        if self.initial_state_override is not None:
            return self.initial_state_override.copy()
        return apply_A_inverse(self.op, 0.0, self.u0)

    def eval_f(self, times: np.ndarray, u: np.ndarray, tu: np.ndarray,
               su: np.ndarray) -> np.ndarray:
        if self.f_vectorized:
            out = np.asarray(self.f(times, u, tu, su), dtype=float)
            out = np.broadcast_to(out, u.shape)
        else:
            out = np.stack([np.asarray(self.f(t, u[i], tu[i], su[i]), dtype=float)
                            for i, t in enumerate(times)])
        bad = ~np.isfinite(out).all(axis=1)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise EvaluationError(
                f"f is not finite at t={times[i]!r} (||u(t)||={np.linalg.norm(u[i]):.6g})",
                node=(float(times[i]), float(np.linalg.norm(u[i]))))
        return out


@dataclass(frozen=True)
class SolverConfig:
    grid_points: int = 256
    """Number of time steps; the grid has ``grid_points + 1`` nodes."""
    picard_tol: float = 1.0e-8
    picard_max_iters: int = 200
    kernel_cfg: KernelConfig = DEFAULT_KERNEL
    grading: str = "uniform"
    """``uniform`` or ``graded`` (nodes ``a (m/N)^(1/alpha)``)."""
    damping: float = 0.0
    """Explicit relaxation ``u <- (1 - d) Q u + d u``; zero means plain Picard."""
    threads: int | None = None
    """Worker threads for applying ``Q``; ``None`` reads ``FRAC_MILD_THREADS``."""

    def __post_init__(self) -> None:
        if self.grid_points < 8:
            raise DomainError(f"grid_points must be at least 8: {self.grid_points}")
        if not self.picard_tol > 0:
            raise DomainError(f"picard_tol must be positive: {self.picard_tol}")
        if self.picard_max_iters < 1:
            raise DomainError(f"picard_max_iters must be positive: {self.picard_max_iters}")
        if self.grading not in ("uniform", "graded"):
            raise DomainError(f"grading must be 'uniform' or 'graded': {self.grading!r}")
        if not 0.0 <= self.damping < 1.0:
            raise DomainError(f"damping must lie in [0, 1): {self.damping}")
        if self.threads is not None and self.threads < 1:
            raise DomainError(f"threads must be positive: {self.threads}")

    def time_grid(self, a: float, alpha: float) -> np.ndarray:
        x = np.linspace(0.0, 1.0, self.grid_points + 1)
        if self.grading == "graded":
            x = x ** (1.0 / alpha)
        out = a * x
        out[-1] = a
        return out

    def worker_count(self) -> int:
        if self.threads is not None:
            return self.threads
        env = os.environ.get("FRAC_MILD_THREADS", "").strip()
        if not env:
            return 1
        try:
            n = int(env)
        except ValueError:
            raise DomainError(f"FRAC_MILD_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise DomainError(f"FRAC_MILD_THREADS must be positive, got {n}")
        return n


@dataclass(frozen=True)
class TrajectorySolution:
    trajectory: TrajectoryGrid
    residual: float
    iterations: int
    converged: bool
    contraction_estimates: tuple[float, ...] = ()
    residual_history: tuple[float, ...] = ()
    method: str = "picard"


# }}}


# {{{ solution operator


class MildOperator:
    """The map ``u -> Qu`` on a fixed grid with all kernel tables precomputed."""

    def __init__(self, p: ProblemSpec, cfg: SolverConfig) -> None:
        self.p = p
        self.cfg = cfg
        self.times = cfg.time_grid(p.a, p.alpha)
        self.table = KernelTable(p.op, p.alpha, self.times, cfg.kernel_cfg.ml)
        self.tmat = volterra_matrix(p.K, self.times)
        self.smat = fredholm_matrix(p.H, self.times)
        self.x0 = p.initial_state()
        # A(t_m) A^{-1}(0) u0 enters h at every node
        self.ax0 = np.einsum("mjk,k->mj", self.table.mats, self.x0)
        self.workers = cfg.worker_count()

    def forcing(self, u: np.ndarray) -> np.ndarray:
        return self.p.eval_f(self.times, u, self.tmat @ u, self.smat @ u)

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.times.size, self.p.dim):
            raise DomainError(f"trajectory has shape {u.shape}, expected "
                              f"{(self.times.size, self.p.dim)}")
        h = self.forcing(u) - self.ax0
        g = h + self.table.resolve(h)
        c = self.table._to_eig(g)

        n = self.times.size
        out = np.empty((n, self.p.dim))
        out[0] = 0.0

        def rows(chunk: range) -> None:
            for i in chunk:
                out[i] = self.table.psi_integral_row(i, g, c)

        if self.workers == 1:
            rows(range(1, n))
        else:
            bounds = np.linspace(1, n, self.workers + 1).astype(int)
            with ThreadPoolExecutor(max_workers=self.workers) as ex:
                list(ex.map(rows, [range(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]))
        return out + self.x0


def apply_Q(p: ProblemSpec, cfg: SolverConfig, u: TrajectoryGrid,
            mild: MildOperator | None = None) -> TrajectoryGrid:
    mild = MildOperator(p, cfg) if mild is None else mild
    if u.times.shape != mild.times.shape or np.any(u.times != mild.times):
        raise DomainError("trajectory is not aligned with the solver grid")
    return TrajectoryGrid(mild.times, mild.apply(u.values))


def residual(p: ProblemSpec, cfg: SolverConfig, u: TrajectoryGrid,
             mild: MildOperator | None = None) -> float:
    """``max_i ||(Qu)(t_i) - u(t_i)||``."""
    qu = apply_Q(p, cfg, u, mild)
    return float(np.linalg.norm(qu.values - u.values, axis=1).max())


def solve_picard(p: ProblemSpec, cfg: SolverConfig, *, raise_on_failure: bool = True,
                 mild: MildOperator | None = None) -> TrajectorySolution:
    """Successive approximation ``u_{k+1} = Q u_k`` from ``u_0 = A^{-1}(0) u0``.

    The returned trajectory ``u`` satisfies ``||Qu - u|| = residual`` exactly;
    ``iterations`` counts the updates of ``u``. On failure a
    :class:`ConvergenceError` is raised with the partial solution attached as
    ``exc.solution`` (or returned when ``raise_on_failure`` is false).
    """
    mild = MildOperator(p, cfg) if mild is None else mild
    u = np.tile(mild.x0, (mild.times.size, 1))
    history: list[float] = []
    ratios: list[float] = []

    for k in range(cfg.picard_max_iters + 1):
        v = mild.apply(u)
        diff = float(np.linalg.norm(v - u, axis=1).max())
        if history and history[-1] > 0:
            ratios.append(diff / history[-1])
        history.append(diff)
        if diff <= cfg.picard_tol:
            return TrajectorySolution(TrajectoryGrid(mild.times, u), diff, k, True,
                                      tuple(ratios), tuple(history))
        if not math.isfinite(diff):
            break
        if k == cfg.picard_max_iters:
            break
        u = v if cfg.damping == 0 else (1.0 - cfg.damping) * v + cfg.damping * u

    sol = TrajectorySolution(TrajectoryGrid(mild.times, u), history[-1], len(history) - 1,
                             False, tuple(ratios), tuple(history))
    if not raise_on_failure:
        return sol
    exc = ConvergenceError(f"Picard iteration did not reach {cfg.picard_tol:g} in "
                           f"{cfg.picard_max_iters} iterations (last {history[-1]:.3e})",
                           history=history)
    exc.solution = sol
    raise exc


# }}}


# {{{ reference solver


def _l1_history_weights(times: np.ndarray, n: int, alpha: float) -> np.ndarray:
    # coefficients of (u_{k+1} - u_k) / h_k for k < n - 1
    tk = times[:n - 1]
    tk1 = times[1:n]
    return ((times[n] - tk) ** (1.0 - alpha) - (times[n] - tk1) ** (1.0 - alpha)) \
        / (tk1 - tk)


def solve_reference(p: ProblemSpec, cfg: SolverConfig, *,
                    raise_on_failure: bool = True) -> TrajectorySolution:
    r"""L1 discretization of :math:`{}^C\!D^\alpha u + A(t) u = f` on the solver grid.

    ``A(t_n)`` is treated implicitly (backward Euler when ``alpha = 1``). The
    nonlinearity is lagged by an outer fixed-point loop over whole
    trajectories, because the Fredholm term couples every time.
    """
    times = cfg.time_grid(p.a, p.alpha)
    n_t = times.size
    alpha = p.alpha
    g2 = math.gamma(2.0 - alpha)
    tmat = volterra_matrix(p.K, times)
    smat = fredholm_matrix(p.H, times)
    mats = [p.op.matrix(t) for t in times]
    eye = np.eye(p.dim)
    hist_w = [None, None] + [_l1_history_weights(times, n, alpha) / g2
                             for n in range(2, n_t)]

    def sweep(forcing: np.ndarray) -> np.ndarray:
        u = np.empty((n_t, p.dim))
        u[0] = p.initial_state()
        for n in range(1, n_t):
            h = times[n] - times[n - 1]
            d = h ** (-alpha) / g2
            rhs = forcing[n] + d * u[n - 1]
            if n >= 2:
                rhs -= hist_w[n] @ (u[1:n] - u[:n - 1])
            try:
                u[n] = np.linalg.solve(d * eye + mats[n], rhs)
            except np.linalg.LinAlgError as exc:
                raise ConditioningError(f"L1 step matrix is singular at t={times[n]}") from exc
        return u

    u = np.tile(p.initial_state(), (n_t, 1))
    history: list[float] = []
    for _ in range(cfg.picard_max_iters):
        v = sweep(p.eval_f(times, u, tmat @ u, smat @ u))
        history.append(float(np.linalg.norm(v - u, axis=1).max()))
        u = v
        if history[-1] <= cfg.picard_tol:
            return TrajectorySolution(TrajectoryGrid(times, u), history[-1], len(history),
                                      True, (), tuple(history), method="l1")

    sol = TrajectorySolution(TrajectoryGrid(times, u), history[-1], len(history), False,
                             (), tuple(history), method="l1")
    if not raise_on_failure:
        return sol
    exc = ConvergenceError("reference solver outer iteration did not converge",
                           history=history)
    exc.solution = sol
    raise exc


# }}}
