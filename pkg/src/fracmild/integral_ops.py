"""Volterra and Fredholm integral operators on time-grid trajectories.

.. math::

    (Tu)(t) = \\int_0^t K(t, s) u(s) \\,\\mathrm{d}s, \\qquad
    (Su)(t) = \\int_0^a H(t, s) u(s) \\,\\mathrm{d}s.

Both use the composite trapezoidal rule on the trajectory's own grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from fracmild.errors import DomainError, EvaluationError


# {{{ data


@dataclass(frozen=True)
class TrajectoryGrid:
    """Samples ``values[i]`` of a vector-valued trajectory at ``times[i]``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or times.size < 1:
            raise DomainError("times must be a non-empty 1-D array")
        if times[0] != 0.0:
            raise DomainError(f"trajectory grids start at t=0, got {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise DomainError("times must be strictly increasing")
        if values.shape[0] != times.size:
            raise DomainError(f"{values.shape[0]} values for {times.size} times")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def sup_norm(self) -> float:
        return float(np.linalg.norm(self.values, axis=1).max())

    def index_of(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t))
        for j in (i - 1, i):
            if 0 <= j < self.times.size and abs(self.times[j] - t) <= 1.0e-12 * max(1.0, abs(t)):
                return j
        raise DomainError(f"time {t} is not a grid time")


@dataclass(frozen=True, eq=False)
class BivariateKernel:
    """A continuous kernel on the triangle ``0 <= s <= t <= a`` or the square."""

    eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    support: str = "triangle"
    name: str = "custom"
    params: dict = field(default_factory=dict)
    _sup: list = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if self.support not in ("triangle", "square"):
            raise DomainError(f"support must be 'triangle' or 'square': {self.support!r}")

    @property
    def sup_bound(self) -> float | None:
        return self._sup[0] if self._sup else None

    def __call__(self, t, s) -> np.ndarray:
        out = np.asarray(self.eval(np.asarray(t, dtype=float), np.asarray(s, dtype=float)),
                         dtype=float)
        out = np.broadcast_to(out, np.broadcast(np.asarray(t), np.asarray(s)).shape)
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"kernel {self.name!r} returned a non-finite value")
        return out


# }}}


# {{{ quadrature matrices


def _trapezoid_weights(times: np.ndarray, upto: int) -> np.ndarray:
    w = np.zeros(times.size)
    if upto == 0:
        return w
    h = np.diff(times[:upto + 1])
    w[:upto] += 0.5 * h
    w[1:upto + 1] += 0.5 * h
    return w


def volterra_matrix(K: BivariateKernel, times: Sequence[float]) -> np.ndarray:
    """Matrix ``W`` with ``(Tu)(t_i) ~ sum_j W[i, j] u(t_j)``."""
    times = np.asarray(times, dtype=float)
    n = times.size
    kv = K(times[:, None], times[None, :])
    out = np.zeros((n, n))
    for i in range(1, n):
        out[i] = _trapezoid_weights(times, i) * kv[i]
    return out


def fredholm_matrix(H: BivariateKernel, times: Sequence[float]) -> np.ndarray:
    """Matrix ``W`` with ``(Su)(t_i) ~ sum_j W[i, j] u(t_j)``."""
    times = np.asarray(times, dtype=float)
    w = _trapezoid_weights(times, times.size - 1)
    return H(times[:, None], times[None, :]) * w[None, :]


def volterra_apply(K: BivariateKernel, u: TrajectoryGrid, t: float) -> np.ndarray:
    """``(Tu)(t)`` for a grid time *t*."""
    i = u.index_of(t)
    if i == 0:
        return np.zeros(u.dim)
    w = _trapezoid_weights(u.times, i) * K(u.times[i], u.times)
    return w[:i + 1] @ u.values[:i + 1]


def fredholm_apply(H: BivariateKernel, u: TrajectoryGrid, t: float) -> np.ndarray:
    """``(Su)(t)`` over the whole grid; *t* need not be a grid time."""
    w = _trapezoid_weights(u.times, u.times.size - 1) * H(t, u.times)
    return w @ u.values


def kernel_sup(K: BivariateKernel, grid_density: int = 201, a: float = 1.0) -> float:
    """Maximum of ``|K|`` on a dense grid over its support; cached on *K*."""
    if grid_density < 2:
        raise DomainError(f"grid_density must be at least 2: {grid_density}")
    x = np.linspace(0.0, a, grid_density)
    vals = np.abs(K(x[:, None], x[None, :]))
    if K.support == "triangle":
        vals = np.where(x[None, :] <= x[:, None], vals, 0.0)
    sup = float(vals.max())
    K._sup[:] = [sup]
    return sup


# }}}


# {{{ builtin kernels


def linear_lag(scale: float = 1.0) -> BivariateKernel:
    return BivariateKernel(lambda t, s: scale * (t - s), "triangle", "linear_lag",
                           {"scale": scale})


def exp_abs(scale: float = 1.0, rate: float = 1.0) -> BivariateKernel:
    return BivariateKernel(lambda t, s: scale * np.exp(-rate * np.abs(t - s)), "square",
                           "exp_abs", {"scale": scale, "rate": rate})


def constant(value: float = 1.0, support: str = "triangle") -> BivariateKernel:
    return BivariateKernel(lambda t, s: np.full(np.broadcast(t, s).shape, float(value)),
                           support, "constant", {"value": value, "support": support})


_BUILTINS: dict[str, Callable[..., BivariateKernel]] = {
    "linear_lag": linear_lag,
    "exp_abs": exp_abs,
    "constant": constant,
}


def builtin_kernel(name: str, support: str | None = None, **params: Any) -> BivariateKernel:
    """Registered kernel by name; *support* overrides the kernel's default."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise DomainError(f"unknown kernel {name!r}; known: "
                          f"{', '.join(sorted(_BUILTINS))}") from None
    try:
        if name == "constant" and support is not None:
            return factory(support=support, **params)
        k = factory(**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for kernel {name!r}: {exc}") from exc
    if support is not None and support != k.support:
        k = BivariateKernel(k.eval, support, k.name, dict(k.params))
    return k


# }}}
