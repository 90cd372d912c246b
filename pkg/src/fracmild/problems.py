"""Builtin problems: the time-fractional heat equation with memory terms, and
scalar benchmarks with exact solutions.

The heat problem lives on ``Omega = (0, 1)`` with Dirichlet conditions and a
space-constant conductivity ``kappa(t)``. States are coefficient vectors in the
orthonormal basis ``e_k(x) = sqrt(2) sin(k pi x)``, so the Euclidean norm of
the coefficients is the L2 norm of the function. The nonlinearity is applied
pointwise on ``2 n + 1`` interior points and projected back with an
orthonormal type-I sine transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import fft, optimize, special

from fracmild.errors import DomainError
from fracmild.integral_ops import exp_abs, kernel_sup, linear_lag
from fracmild.mild_solver import ProblemSpec
from fracmild.operator_family import (
    TimeDependentOperator, dirichlet_laplacian_eigenvalues, kappa_power, linear_family,
    scalar_family)
from fracmild.specfun import mittag_leffler


# {{{ sine transform


class SineTransform:
    """Synthesis/analysis between sine coefficients and interior grid values."""

    def __init__(self, n_modes: int) -> None:
        if n_modes < 1:
            raise DomainError(f"n_modes must be positive: {n_modes}")
        self.n_modes = n_modes
        self.points = 2 * n_modes + 1
        self.x = np.arange(1, self.points + 1) / (self.points + 1)
        self._scale = math.sqrt(self.points + 1)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Values ``u(x_p)`` from coefficients along the last axis."""
        coeffs = np.asarray(coeffs, dtype=float)
        pad = np.zeros((*coeffs.shape[:-1], self.points))
        pad[..., :self.n_modes] = coeffs
        return self._scale * fft.dst(pad, type=1, norm="ortho", axis=-1)

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Truncated coefficients ``int u e_k`` from interior grid values."""
        c = fft.dst(np.asarray(values, dtype=float), type=1, norm="ortho", axis=-1)
        return c[..., :self.n_modes] / self._scale

    def l2_norm(self, values: np.ndarray) -> np.ndarray:
        """Discrete L2 norm on (0, 1); exact for resolved sine series."""
        return np.sqrt(np.sum(np.asarray(values) ** 2, axis=-1) / (self.points + 1))


def parabola_coeffs(n_modes: int) -> np.ndarray:
    """Sine coefficients of ``x (1 - x)``."""
    k = np.arange(1, n_modes + 1)
    return math.sqrt(2.0) * 2.0 * (1.0 - (-1.0) ** k) / (k * np.pi) ** 3


# }}}


# {{{ heat problem


@dataclass(frozen=True)
class HeatProblemConfig:
    n_modes: int = 8
    alpha: float = 0.6
    kappa_amplitude: float = 0.5
    kappa_exponent: float = 0.5
    """``kappa(t) = 1 + amplitude t^exponent``."""
    varphi_coeffs: tuple[float, ...] | None = None
    """Sine coefficients of the datum; defaults to those of ``x (1 - x)``."""
    initial_state: str = "operator"
    """``operator``: ``u(0) = A^{-1}(0) varphi``. ``pointwise``: ``u(0) = varphi / kappa(0)``."""
    forcing: bool = True
    """``False`` replaces the nonlinearity by zero."""
    a: float = 1.0
    kappa: Callable[[float], float] | None = field(default=None, compare=False)
    """Custom conductivity overriding the power law."""

    def __post_init__(self) -> None:
        if self.n_modes < 1:
            raise DomainError(f"n_modes must be positive: {self.n_modes}")
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in (0, 1]: {self.alpha}")
        if self.initial_state not in ("operator", "pointwise"):
            raise DomainError(f"initial_state must be 'operator' or 'pointwise': "
                              f"{self.initial_state!r}")
        if self.varphi_coeffs is not None and len(self.varphi_coeffs) != self.n_modes:
            raise DomainError("varphi_coeffs must have n_modes entries")

    def kappa_fn(self) -> Callable[[float], float]:
        if self.kappa is not None:
            return self.kappa
        return kappa_power(self.kappa_amplitude, self.kappa_exponent)

    def varphi(self) -> np.ndarray:
        if self.varphi_coeffs is None:
            return parabola_coeffs(self.n_modes)
        return np.asarray(self.varphi_coeffs, dtype=float)


def heat_operator(cfg: HeatProblemConfig) -> TimeDependentOperator:
    kappa = cfg.kappa_fn()
    lam = dirichlet_laplacian_eigenvalues(cfg.n_modes)
    ts = np.linspace(0.0, cfg.a, 257)
    kv = np.array([kappa(t) for t in ts])
    if np.any(~(kv > 0)):
        raise DomainError(f"kappa must be positive on [0, {cfg.a}], min {kv.min():.3g}")

    def matrix_at(t: float) -> np.ndarray:
        k = float(kappa(t))
        if not k > 0:
            raise DomainError(f"kappa({t}) = {k} is not positive")
        return np.diag(k * lam)

    constant = bool(np.all(kv == kv[0]))
    return TimeDependentOperator(dim=cfg.n_modes, matrix_at=matrix_at, a=cfg.a,
                                 hoelder_C=0.0 if constant else 1.0,
                                 hoelder_gamma=1.0 if constant else cfg.kappa_exponent,
                                 name="heat", autonomous=constant)


def heat_nonlinearity(transform: SineTransform) -> Callable[..., np.ndarray]:
    """``sin(pi t)/(1 + |u|) + e^-t sin(Tu) + e^-t cos(Su)``, pointwise in x."""

    def f(t, u, tu, su):
        t = np.asarray(t, dtype=float)[..., None]
        up = transform.synthesize(u)
        tp = transform.synthesize(tu)
        sp = transform.synthesize(su)
        vals = (np.sin(np.pi * t) / (1.0 + np.abs(up))
                + np.exp(-t) * np.sin(tp) + np.exp(-t) * np.cos(sp))
        return transform.analyze(vals)

    return f


def build_example_41(cfg: HeatProblemConfig = HeatProblemConfig()) -> ProblemSpec:
    """The heat problem with memory terms ``K = t - s`` and ``H = exp(-|t - s|)``."""
    op = heat_operator(cfg)
    transform = SineTransform(cfg.n_modes)
    varphi = cfg.varphi()

    if cfg.initial_state == "operator":
        u0, override = varphi, None
    else:
        # u(0) = varphi / kappa(0); u0 is then A(0) u(0)
        override = varphi / cfg.kappa_fn()(0.0)
        u0 = op.matrix(0.0) @ override

    kwargs = {}
    if cfg.forcing:
        kwargs["f"] = heat_nonlinearity(transform)
    return ProblemSpec(alpha=cfg.alpha, a=cfg.a, op=op, u0=u0,
                       K=linear_lag(), H=exp_abs(), f_vectorized=True,
                       initial_state_override=override, name="heat", **kwargs)


# }}}


# {{{ assumption glue


@dataclass(frozen=True)
class FAssumptionReport:
    """Sampled checks of the growth and Lipschitz assumptions on ``f``."""

    growth_ok: bool
    growth_max_ratio: float
    """Largest ``||f|| / psi_r(t)`` seen; at most one when the bound holds."""
    lipschitz: tuple[float, float, float]
    """Largest sampled difference quotients in ``u``, ``Tu`` and ``Su``."""
    lipschitz_ok: bool
    K0: float
    H0: float
    beta: float = 0.0
    rho: float = 0.0
    L: tuple[float, float, float] = (1.0, 1.0, 1.0)
    witness: dict = field(default_factory=dict)


def psi_r_41(t) -> np.ndarray:
    """``sqrt(mes Omega) (sin(pi t) + 2 e^-t)`` with ``mes Omega = 1``."""
    t = np.asarray(t, dtype=float)
    return np.sin(np.pi * t) + 2.0 * np.exp(-t)


def verify_f_assumptions_41(cfg: HeatProblemConfig = HeatProblemConfig(),
                            samples: int = 400, seed: int = 0) -> FAssumptionReport:
    rng = np.random.default_rng(seed)
    transform = SineTransform(cfg.n_modes)
    # growth: ||f(t, u, Tu, Su)||_L2 <= psi_r(t) for arbitrary states
    t = rng.uniform(0.0, cfg.a, samples)
    scale = rng.choice([0.1, 1.0, 10.0, 100.0], size=(samples, 1))
    u, tu, su = (scale * rng.standard_normal((samples, cfg.n_modes)) for _ in range(3))
    fp = (np.sin(np.pi * t)[:, None] / (1.0 + np.abs(transform.synthesize(u)))
          + np.exp(-t)[:, None] * np.sin(transform.synthesize(tu))
          + np.exp(-t)[:, None] * np.cos(transform.synthesize(su)))
    ratio = transform.l2_norm(fp) / psi_r_41(t)
    worst = int(np.argmax(ratio))

    # Lipschitz: pointwise difference quotients of each scalar map
    def quotient(g: Callable[[np.ndarray], np.ndarray]) -> float:
        x = rng.uniform(-20.0, 20.0, samples)
        y = x + rng.uniform(-1.0, 1.0, samples) * 10.0 ** rng.uniform(-6, 0, samples)
        return float(np.max(np.abs(g(x) - g(y)) / np.abs(x - y)))

    tt = rng.uniform(0.0, cfg.a, samples)
    lu = quotient(lambda v: np.sin(np.pi * tt) / (1.0 + np.abs(v)))
    lv = quotient(lambda v: np.exp(-tt) * np.sin(v))
    lw = quotient(lambda v: np.exp(-tt) * np.cos(v))

    k0 = kernel_sup(linear_lag(), 201, cfg.a)
    h0 = kernel_sup(exp_abs(), 201, cfg.a)
    lip = (lu, lv, lw)
    return FAssumptionReport(
        growth_ok=bool(ratio.max() <= 1.0 + 1.0e-12),
        growth_max_ratio=float(ratio.max()),
        lipschitz=lip,
        lipschitz_ok=all(x <= 1.0 + 1.0e-9 for x in lip),
        K0=k0, H0=h0,
        witness={"t": float(t[worst]), "ratio": float(ratio[worst])})


def phi_sup_41(a: float = 1.0) -> float:
    """``max_{[0, a]} psi_r``; the L-infinity norm used when ``beta = 0``."""
    ts = np.linspace(0.0, a, 2001)
    vals = psi_r_41(ts)
    k = int(vals.argmax())
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, ts.size - 1)]
    res = optimize.minimize_scalar(lambda t: -float(psi_r_41(t)), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-12})
    return max(float(vals[k]), -float(res.fun))


# }}}


# {{{ benchmarks


@dataclass(frozen=True)
class Benchmark:
    problem: ProblemSpec
    exact: Callable[[np.ndarray], np.ndarray]
    """Exact solution at an array of times, shape ``(n, dim)``."""


def build_scalar_benchmark(lambda_val: float, alpha: float, u0: float = 1.0,
                           a: float = 1.0) -> Benchmark:
    """``A = lambda``, ``f = 0``: ``u(t) = E_alpha(-lambda t^alpha) u0 / lambda``."""
    p = ProblemSpec(alpha=alpha, a=a, op=scalar_family(lambda_val, a), u0=np.array([u0]),
                    name="scalar")

    def exact(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return (mittag_leffler(alpha, 1.0, -lambda_val * t**alpha) * u0 / lambda_val)[:, None]

    return Benchmark(p, exact)


def build_nonautonomous_benchmark(forcing: float = 0.0, u0: float = 1.0,
                                  a: float = 1.0) -> Benchmark:
    """``alpha = 1``, ``A(t) = 1 + t``, ``f = forcing``, solved by an integrating factor."""
    op = linear_family([[1.0]], a=a, name="one_plus_t")

    def f(t, u, tu, su):
        return np.full_like(u, forcing)

    p = ProblemSpec(alpha=1.0, a=a, op=op, u0=np.array([u0]), f=f,
                    name="nonautonomous")

    def exact(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        # int_0^t exp(r + r^2/2) dr through erfi
        acc = (np.exp(-0.5) * np.sqrt(0.5 * np.pi)
               * (special.erfi((t + 1.0) / np.sqrt(2.0)) - special.erfi(np.sqrt(0.5))))
        return (np.exp(-t - 0.5 * t * t) * (u0 + forcing * acc))[:, None]

    return Benchmark(p, exact)


# }}}
