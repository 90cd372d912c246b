"""Finite-dimensional symmetric positive-definite operator families :math:`A(t)`.

Matrix functions (semigroup, Mittag-Leffler, inverse) are evaluated through
the eigendecomposition of :math:`A(s)` at a frozen time :math:`s`. The
decompositions are cached per exact time value, so a solver that only asks for
grid times pays for one ``eigh`` per grid node.
"""

from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from fracmild.errors import ConditioningError, DomainError
from fracmild.specfun import MLEvalConfig, mittag_leffler


# {{{ operator family


@dataclass(frozen=True, eq=False)
class TimeDependentOperator:
    """A family ``t -> A(t)`` of SPD matrices on ``[0, a]``.

    .. attribute:: hoelder_C
    .. attribute:: hoelder_gamma

        Constants of the Hoelder bound
        ``||[A(t) - A(tau)] A^{-1}(s)|| <= C |t - tau|^gamma``. Use
        :func:`verify_A2` to fit them.
    """

    dim: int
    matrix_at: Callable[[float], np.ndarray]
    a: float
    hoelder_C: float = 1.0
    hoelder_gamma: float = 1.0
    name: str = "custom"
    autonomous: bool = False
    """Declares ``A(t)`` constant in time; kernels then skip the resolvent series."""

    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise DomainError(f"dim must be positive: {self.dim}")
        if not self.a > 0:
            raise DomainError(f"horizon a must be positive: {self.a}")
        if not self.hoelder_C >= 0:
            raise DomainError(f"hoelder_C must be nonnegative: {self.hoelder_C}")
        if not 0.0 < self.hoelder_gamma <= 1.0:
            raise DomainError(f"hoelder_gamma must lie in (0, 1]: {self.hoelder_gamma}")

    def with_hoelder(self, C: float, gamma: float) -> TimeDependentOperator:
        return replace(self, hoelder_C=C, hoelder_gamma=gamma,
                       _cache={}, _lock=threading.Lock())

    def matrix(self, t: float) -> np.ndarray:
        t = _check_time(self, t)
        mat = np.asarray(self.matrix_at(t), dtype=float)
        if mat.shape != (self.dim, self.dim):
            raise DomainError(f"matrix_at({t}) has shape {mat.shape}, expected "
                              f"{(self.dim, self.dim)}")
        return mat

    def eig(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and orthonormal eigenvectors of ``A(t)``."""
        key = float(t)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit

        mat = self.matrix(key)
        scale = max(np.abs(mat).max(), 1.0e-300)
        if np.abs(mat - mat.T).max() > 1.0e-12 * scale:
            raise ConditioningError(f"A({key}) is not symmetric")
        try:
            w, v = np.linalg.eigh(0.5 * (mat + mat.T))
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(f"eigendecomposition of A({key}) failed") from exc
        if not w[0] > 0:
            raise ConditioningError(f"A({key}) is not positive definite "
                                    f"(smallest eigenvalue {w[0]:.3e})")

        w.setflags(write=False)
        v.setflags(write=False)
        with self._lock:
            self._cache.setdefault(key, (w, v))
            return self._cache[key]


def _check_time(op: TimeDependentOperator, t: float) -> float:
    t = float(t)
    slack = 1.0e-12 * op.a
    if not -slack <= t <= op.a + slack:
        raise DomainError(f"time {t} lies outside [0, {op.a}]")
    return min(max(t, 0.0), op.a)


def _as_vec(op: TimeDependentOperator, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != op.dim:
        raise DomainError(f"vector has leading size {v.shape[0]}, expected {op.dim}")
    return v


# }}}


# {{{ matrix functions


def matrix_function(op: TimeDependentOperator, s: float,
                    fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Dense ``fn(A(s))`` for a scalar function applied to the spectrum."""
    w, v = op.eig(s)
    return (v * fn(w)) @ v.T


def apply_A(op: TimeDependentOperator, t: float, v) -> np.ndarray:
    return op.matrix(t) @ _as_vec(op, v)


def apply_A_inverse(op: TimeDependentOperator, t: float, v) -> np.ndarray:
    """Solve ``A(t) x = v`` through the cached eigendecomposition."""
    v = _as_vec(op, v)
    w, vecs = op.eig(t)
    if w[0] <= op.dim * np.finfo(float).eps * w[-1]:
        raise ConditioningError(f"A({t}) is singular to working precision "
                                f"(condition number {w[-1] / w[0]:.3e})")

    out = vecs @ ((vecs.T @ v) / (w if v.ndim == 1 else w[:, None]))
    resid = np.linalg.norm(op.matrix(t) @ out - v)
    if resid > 1.0e-10 * max(np.linalg.norm(v), 1.0e-300):
        raise ConditioningError(f"inverse residual {resid:.3e} exceeds tolerance at t={t}")
    return out


def semigroup_apply(op: TimeDependentOperator, s: float, tau: float, v) -> np.ndarray:
    """``exp(-tau A(s)) v``; ``tau = 0`` returns *v*."""
    if tau < 0:
        raise DomainError(f"tau must be nonnegative: {tau}")
    v = _as_vec(op, v)
    if tau == 0:
        return v.copy()
    w, vecs = op.eig(s)
    return vecs @ (np.exp(-tau * w) * (vecs.T @ v))


def ml_matrix_apply(op: TimeDependentOperator, s: float, alpha: float, beta_param: float,
                    scale: float, v, ml_cfg: MLEvalConfig | None = None) -> np.ndarray:
    """``E_{alpha,beta}(-scale A(s)) v`` via the spectrum of ``A(s)``."""
    if scale < 0:
        raise DomainError(f"scale must be nonnegative: {scale}")
    v = _as_vec(op, v)
    w, vecs = op.eig(s)
    return vecs @ (mittag_leffler(alpha, beta_param, -scale * w, ml_cfg) * (vecs.T @ v))


# }}}


# {{{ assumption checks


@dataclass(frozen=True)
class A1Report:
    """Resolvent check ``||(lambda + A(t))^{-1}|| <= C / (|lambda| + 1)``."""

    C: float
    lambdas: tuple[float, ...]
    times: tuple[float, ...]
    max_norms: tuple[float, ...]
    """Largest resolvent norm over the time grid, one per lambda."""
    violated: bool
    """A measured norm exceeded the SPD bound ``1 / (lambda + lambda_min)``."""


def verify_A1(op: TimeDependentOperator, lambda_samples: Sequence[float],
              times: Sequence[float] | None = None) -> A1Report:
    if times is None:
        times = np.linspace(0.0, op.a, 17)
    lambdas = [float(lam) for lam in lambda_samples]
    if any(lam < 0 for lam in lambdas):
        raise DomainError("lambda samples must be nonnegative")

    C = 0.0
    violated = False
    norms = []
    for lam in lambdas:
        worst = 0.0
        for t in times:
            mat = op.matrix(t) + lam * np.eye(op.dim)
            nrm = np.linalg.norm(np.linalg.inv(mat), 2)
            bound = 1.0 / (lam + op.eig(t)[0][0])
            violated |= nrm > bound * (1.0 + 1.0e-8)
            worst = max(worst, nrm)
        norms.append(worst)
        C = max(C, worst * (abs(lam) + 1.0))

    return A1Report(C=C, lambdas=tuple(lambdas), times=tuple(float(t) for t in times),
                    max_norms=tuple(norms), violated=violated)


@dataclass(frozen=True)
class A2Report:
    """Fitted Hoelder constants; a constant family reports ``gamma=1, C=0``."""

    C: float
    gamma: float
    lags: tuple[float, ...]
    envelope: tuple[float, ...]
    """Largest ``||[A(t) - A(tau)] A^{-1}(s)||`` over pairs with ``|t - tau|`` = lag."""


def verify_A2(op: TimeDependentOperator, grid: Sequence[float],
              store: bool = False) -> A2Report | tuple[A2Report, TimeDependentOperator]:
    """Fit ``(C, gamma)`` by log-log regression of the per-lag envelope.

    With ``store=True`` also returns a copy of *op* carrying the fitted values.
    """
    grid = np.asarray(sorted(set(float(t) for t in grid)))
    if grid.size < 3:
        raise DomainError("verify_A2 needs at least three grid times")

    mats = np.stack([op.matrix(t) for t in grid])
    invs = np.stack([matrix_function(op, t, lambda w: 1.0 / w) for t in grid])

    env: dict[float, float] = {}
    for i in range(grid.size):
        for j in range(i):
            diff = mats[i] - mats[j]
            val = max(np.linalg.norm(diff @ inv, 2) for inv in invs)
            lag = round(grid[i] - grid[j], 12)
            env[lag] = max(env.get(lag, 0.0), val)

    lags = np.array(sorted(env))
    vals = np.array([env[h] for h in lags])
    scale = max(np.abs(mats).max(), 1.0)
    if vals.max() <= 1.0e-14 * scale:
        gamma, C = 1.0, 0.0
    else:
        mask = vals > 1.0e-14 * scale
        if mask.sum() >= 2:
            slope = np.polyfit(np.log(lags[mask]), np.log(vals[mask]), 1)[0]
            gamma = float(min(max(slope, 1.0e-3), 1.0))
        else:
            gamma = 1.0
        C = float(np.max(vals / lags**gamma))

    report = A2Report(C=C, gamma=gamma, lags=tuple(lags.tolist()),
                      envelope=tuple(vals.tolist()))
    if store:
        return report, op.with_hoelder(max(C, 0.0), gamma)
    return report


def remark1_constant(op: TimeDependentOperator, times: Sequence[float] | None = None) -> float:
    """Smallest ``C`` with ``||A(s) exp(-tau A(s))|| <= C / tau``; equals 1/e for SPD."""
    # sup_tau tau * lam * exp(-tau lam) = 1/e for every lam > 0
    if times is None:
        times = np.linspace(0.0, op.a, 5)
    for t in times:
        op.eig(t)
    return math.exp(-1.0)


# }}}


# {{{ construction


def scalar_family(lambda_val: float, a: float = 1.0) -> TimeDependentOperator:
    if not lambda_val > 0:
        raise DomainError(f"lambda must be positive: {lambda_val}")
    mat = np.array([[float(lambda_val)]])
    return TimeDependentOperator(dim=1, matrix_at=lambda t: mat, a=a, hoelder_C=0.0,
                                 name="scalar", autonomous=True)


def diagonal_family(values: Sequence[float], a: float = 1.0,
                    kappa: Callable[[float], float] | None = None,
                    name: str = "diagonal") -> TimeDependentOperator:
    """``A(t) = kappa(t) diag(values)``; autonomous when *kappa* is omitted."""
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 1 or np.any(vals <= 0):
        raise DomainError("diagonal entries must be positive")
    if kappa is None:
        mat = np.diag(vals)
        return TimeDependentOperator(dim=vals.size, matrix_at=lambda t: mat, a=a,
                                     hoelder_C=0.0, name=name, autonomous=True)

    def matrix_at(t: float) -> np.ndarray:
        k = float(kappa(t))
        if not k > 0:
            raise DomainError(f"kappa({t}) = {k} is not positive")
        return np.diag(k * vals)

    return TimeDependentOperator(dim=vals.size, matrix_at=matrix_at, a=a, name=name)


def linear_family(A0, A1=None, a: float = 1.0, name: str = "linear") -> TimeDependentOperator:
    """``A(t) = A0 + t A1``; with ``A1`` omitted, ``A(t) = (1 + t) A0``."""
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    A1 = A0 if A1 is None else np.atleast_2d(np.asarray(A1, dtype=float))
    if A0.shape != A1.shape or A0.shape[0] != A0.shape[1]:
        raise DomainError("A0 and A1 must be square matrices of equal size")
    return TimeDependentOperator(dim=A0.shape[0], matrix_at=lambda t: A0 + t * A1,
                                 a=a, name=name)


def random_spd_family(dim: int, seed: int = 0, a: float = 1.0,
                      autonomous: bool = False) -> TimeDependentOperator:
    """``A(t) = B0 + t B1`` with random SPD ``B0`` and PSD ``B1``."""
    rng = np.random.default_rng(seed)
    g0 = rng.standard_normal((dim, dim))
    g1 = rng.standard_normal((dim, dim))
    B0 = g0 @ g0.T / dim + np.eye(dim)
    B1 = np.zeros((dim, dim)) if autonomous else g1 @ g1.T / dim
    if autonomous:
        return TimeDependentOperator(dim=dim, matrix_at=lambda t: B0, a=a, hoelder_C=0.0,
                                     name="random_spd", autonomous=True)
    return TimeDependentOperator(dim=dim, matrix_at=lambda t: B0 + t * B1, a=a,
                                 name="random_spd")


def read_matrix_file(path: str | os.PathLike) -> np.ndarray:
    """Read a dense matrix: first line ``dim``, then ``dim`` rows of reals."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split("#", 1)[0].strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise DomainError(f"{path}: empty matrix file")
    try:
        dim = int(lines[0])
        rows = [[float(x) for x in ln.replace(",", " ").split()] for ln in lines[1:]]
    except ValueError as exc:
        raise DomainError(f"{path}: {exc}") from exc
    if dim < 1 or len(rows) != dim or any(len(r) != dim for r in rows):
        raise DomainError(f"{path}: expected {dim} rows of {dim} entries")
    return np.array(rows)


def matrix_file_family(entries: Sequence[tuple[float, str | os.PathLike]],
                       a: float) -> TimeDependentOperator:
    """Family from one matrix file per time, linearly interpolated in between.

    Convex combinations of SPD matrices are SPD, so the interpolant is valid.
    """
    entries = sorted((float(t), p) for t, p in entries)
    times = np.array([t for t, _ in entries])
    mats = np.stack([read_matrix_file(p) for _, p in entries])
    if times[0] > 0 or times[-1] < a:
        raise DomainError(f"matrix files must cover [0, {a}], got [{times[0]}, {times[-1]}]")

    def matrix_at(t: float) -> np.ndarray:
        if times.size == 1:
            return mats[0]
        k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2))
        th = (t - times[k]) / (times[k + 1] - times[k])
        return (1.0 - th) * mats[k] + th * mats[k + 1]

    return TimeDependentOperator(dim=mats.shape[1], matrix_at=matrix_at, a=a,
                                 name="matrix_files",
                                 autonomous=bool(np.all(mats == mats[0])))


def kappa_power(amplitude: float = 0.5, exponent: float = 0.5) -> Callable[[float], float]:
    """``kappa(t) = 1 + amplitude * t^exponent``."""
    if amplitude < 0 or not 0.0 < exponent <= 1.0:
        raise DomainError("kappa needs amplitude >= 0 and exponent in (0, 1]")
    return lambda t: 1.0 + amplitude * t**exponent


def dirichlet_laplacian_eigenvalues(n_modes: int) -> np.ndarray:
    """Eigenvalues ``(k pi)^2`` of ``-d^2/dx^2`` on (0, 1) with Dirichlet conditions."""
    if n_modes < 1:
        raise DomainError(f"n_modes must be positive: {n_modes}")
    return (np.pi * np.arange(1, n_modes + 1)) ** 2


def heat_family(n_modes: int, kappa_amplitude: float = 0.5, kappa_exponent: float = 0.5,
                a: float = 1.0) -> TimeDependentOperator:
    kappa = kappa_power(kappa_amplitude, kappa_exponent)
    return diagonal_family(dirichlet_laplacian_eigenvalues(n_modes), a=a,
                           kappa=kappa if kappa_amplitude > 0 else None, name="heat")


_BUILTINS: dict[str, Callable[..., TimeDependentOperator]] = {
    "scalar": scalar_family,
    "diagonal": diagonal_family,
    "linear": linear_family,
    "random_spd": random_spd_family,
    "heat": heat_family,
}


def builtin_family(name: str, **params: Any) -> TimeDependentOperator:
    """Construct a registered family by name (``scalar``, ``diagonal``, ...)."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise DomainError(f"unknown operator family {name!r}; "
                          f"known: {', '.join(sorted(_BUILTINS))}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for family {name!r}: {exc}") from exc


def builtin_names() -> tuple[str, ...]:
    return tuple(sorted(_BUILTINS))


def params_summary(op: TimeDependentOperator) -> Mapping[str, Any]:
    return {"name": op.name, "dim": op.dim, "a": op.a,
            "hoelder_C": op.hoelder_C, "hoelder_gamma": op.hoelder_gamma}


# }}}
