"""Gamma, Beta, two-parameter Mittag-Leffler function and the density xi_alpha.

Everything here is a pure function of its arguments.

Mittag-Leffler evaluation uses three regimes for real arguments ``x``:

* ``|x| <= argument_split`` or ``x > 0``: the defining power series;
* ``x < -asymptotic_split`` with ``alpha < 1``: the algebraic asymptotic
  expansion ``sum_k (-1)^(k+1) |x|^-k / Gamma(beta - alpha k)``;
* otherwise: inverse Laplace transform of ``s^(alpha-beta) / (s^alpha - x)``
  on a parabolic Hankel contour with midpoint trapezoidal nodes
  (Trefethen, Weideman & Schmelzer, BIT 46, 2006), which converges
  geometrically because for ``x < 0`` the integrand is analytic off the
  negative real axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from fracmild.errors import AccuracyError, DomainError


@dataclass(frozen=True)
class MLEvalConfig:
    """Evaluation policy for Mittag-Leffler functions and ``xi_density``."""

    series_tol: float = 1.0e-16
    """Relative size of the last retained series term."""
    max_terms: int = 2000
    argument_split: float = 1.0
    """Series regime for ``|x|`` up to this threshold."""
    asymptotic_split: float = 60.0
    """Asymptotic expansion beyond this ``|x|`` (for ``alpha < 1``)."""
    contour_nodes: int = 40
    """Trapezoidal nodes on the full parabolic contour (even)."""
    xi_split: float = 1.0
    """``xi_density`` uses its power series below this ``theta``."""

    def __post_init__(self) -> None:
        if not self.series_tol > 0:
            raise DomainError(f"series_tol must be positive: {self.series_tol}")
        if self.max_terms < 10:
            raise DomainError(f"max_terms must be at least 10: {self.max_terms}")
        if self.argument_split <= 0 or self.asymptotic_split <= self.argument_split:
            raise DomainError("need 0 < argument_split < asymptotic_split")
        if self.contour_nodes < 8 or self.contour_nodes % 2:
            raise DomainError(f"contour_nodes must be even and >= 8: {self.contour_nodes}")


DEFAULT_ML = MLEvalConfig()


# {{{ gamma / beta


def gamma(x):
    """Gamma function for positive arguments (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"gamma requires positive arguments, got {x!r}")
    if arr.ndim == 0:
        return math.gamma(float(arr))
    return special.gamma(arr)


def beta(p, q):
    """Euler Beta function ``Gamma(p) Gamma(q) / Gamma(p + q)`` for ``p, q > 0``."""
    pa = np.asarray(p, dtype=float)
    qa = np.asarray(q, dtype=float)
    if np.any(~(pa > 0)) or np.any(~(qa > 0)):
        raise DomainError(f"beta requires positive arguments, got ({p!r}, {q!r})")
    out = special.beta(pa, qa)
    return float(out) if np.ndim(out) == 0 else out


def log_beta(p: float, q: float) -> float:
    if not (p > 0 and q > 0):
        raise DomainError(f"log_beta requires positive arguments, got ({p}, {q})")
    return math.lgamma(p) + math.lgamma(q) - math.lgamma(p + q)


# }}}


# {{{ Mittag-Leffler


def _check_ml_params(alpha: float, beta_param: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1]: {alpha}")
    if not beta_param > 0.0:
        raise DomainError(f"beta must be positive: {beta_param}")


def _ml_series(alpha: float, beta_param: float, x: np.ndarray, cfg: MLEvalConfig) -> np.ndarray:
    # terms are generated in log space so that large positive x does not overflow
    out = np.zeros_like(x)
    if x.size == 0:
        return out

    logabs = np.log(np.abs(np.where(x == 0.0, 1.0, x)))
    neg = x < 0
    out += special.rgamma(beta_param)
    active = x != 0.0
    prev = np.full(x.shape, np.inf)

    for k in range(1, cfg.max_terms):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        mag = np.exp(k * logabs[idx] - special.gammaln(beta_param + alpha * k))
        out[idx] += np.where(neg[idx] & (k % 2 == 1), -mag, mag)

        # terms may grow before they decay (large |x|, small alpha)
        done = (mag < prev[idx]) & (mag <= cfg.series_tol * np.abs(out[idx]))
        prev[idx] = mag
        active[idx[done]] = False
    else:
        raise AccuracyError(
            f"Mittag-Leffler series did not converge in {cfg.max_terms} terms",
            partial=out.copy(),
            terms=cfg.max_terms,
        )

    return out


def _ml_asymptotic(alpha: float, beta_param: float, y: np.ndarray, cfg: MLEvalConfig,
                   max_terms: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Algebraic expansion of ``E(-y)`` for large ``y > 0``; returns (value, ok)."""
    out = np.zeros_like(y)
    best = np.full(y.shape, np.inf)
    ok = np.zeros(y.shape, dtype=bool)
    stalled = np.zeros(y.shape, dtype=bool)
    logy = np.log(y)
    for k in range(1, max_terms + 1):
        arg = beta_param - alpha * k
        rg = special.rgamma(arg)
        # 1/Gamma nearly vanishes close to its poles, so convergence is judged
        # on the envelope |1/Gamma(-s)| <= Gamma(1 + s) / pi instead
        lenv = math.lgamma(1.0 - arg) - math.log(math.pi) if arg < 0 else math.log(abs(rg) + 1e-300)
        env = np.exp(-k * logy + lenv)
        live = ~ok & ~stalled
        out[live] += (1.0 if k % 2 == 1 else -1.0) * rg * np.exp(-k * logy[live])
        stalled |= live & (env > best)
        best = np.minimum(best, env)
        ok |= live & (env <= cfg.series_tol * np.abs(out))
        if (ok | stalled).all():
            break
    return out, ok


@lru_cache(maxsize=16)
def _contour_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    # optimized parabola z(theta) = n (0.1309 - 0.1194 theta^2 + 0.25 i theta);
    # only theta > 0 is needed because the integrand is conjugate symmetric
    theta = (np.arange(n // 2) + 0.5) * (2.0 * np.pi / n)
    z = n * (0.1309 - 0.1194 * theta**2 + 0.25j * theta)
    dz = n * (-0.2388 * theta + 0.25j)
    return z, np.exp(z) * dz * (2.0 / n)


def _ml_contour(alpha: float, beta_param: float, y: np.ndarray, cfg: MLEvalConfig,
                chunk: int = 1 << 15) -> np.ndarray:
    """``E(-y)`` for ``y > 0`` via the Hankel contour integral."""
    z, w = _contour_nodes(cfg.contour_nodes)
    za = z**alpha
    num = w * z ** (alpha - beta_param)
    out = np.empty_like(y)
    for start in range(0, y.size, chunk):
        yy = y[start:start + chunk]
        out[start:start + chunk] = np.imag(num[None, :] / (za[None, :] + yy[:, None])).sum(axis=1)
    return out


def mittag_leffler(alpha: float, beta_param: float, x, cfg: MLEvalConfig | None = None):
    r"""Two-parameter Mittag-Leffler function :math:`E_{\alpha,\beta}(x)` for real ``x``.

    :arg alpha: order in :math:`(0, 1]`.
    :arg beta_param: second parameter, positive.
    :arg x: scalar or array of real arguments.
    :returns: a float for scalar ``x``, otherwise an array of the same shape.
    """
    _check_ml_params(alpha, beta_param)
    cfg = DEFAULT_ML if cfg is None else cfg

    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0
    flat = np.atleast_1d(xa).ravel()
    if not np.all(np.isfinite(flat)):
        raise DomainError("mittag_leffler requires finite arguments")

    if alpha == 1.0 and beta_param == 1.0:
        out = np.exp(flat)
        return float(out[0]) if scalar else out.reshape(xa.shape)

    out = np.empty_like(flat)
    series = (np.abs(flat) <= cfg.argument_split) | (flat > 0)
    if series.any():
        out[series] = _ml_series(alpha, beta_param, flat[series], cfg)

    rest = np.flatnonzero(~series)
    if rest.size:
        y = -flat[rest]
        use_contour = np.ones(rest.size, dtype=bool)
        if alpha < 1.0:
            big = y > cfg.asymptotic_split
            if big.any():
                val, ok = _ml_asymptotic(alpha, beta_param, y[big], cfg)
                bidx = np.flatnonzero(big)
                out[rest[bidx[ok]]] = val[ok]
                use_contour[bidx[ok]] = False
        if use_contour.any():
            out[rest[use_contour]] = _ml_contour(alpha, beta_param, y[use_contour], cfg)

    return float(out[0]) if scalar else out.reshape(xa.shape)


# }}}


# {{{ xi_alpha


@lru_cache(maxsize=4)
def _legendre_panels(panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, np.pi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _xi_series(alpha: float, theta: np.ndarray, cfg: MLEvalConfig) -> np.ndarray:
    # xi(theta) = (1/pi) sum_n (-theta)^n Gamma(alpha (n+1)) sin(pi alpha (n+1)) / n!
    out = np.zeros_like(theta)
    with np.errstate(divide="ignore"):
        logt = np.log(theta)
    active = np.ones(theta.shape, dtype=bool)
    for n in range(cfg.max_terms):
        lmag = special.gammaln(alpha * (n + 1)) - special.gammaln(n + 1.0)
        mag = np.exp(n * logt[active] + lmag) if n else np.full(active.sum(), math.exp(lmag))
        s = math.sin(math.pi * alpha * (n + 1))
        out[active] += (-1.0) ** n * s * mag
        idx = np.flatnonzero(active)
        done = (n > 2) & (mag <= cfg.series_tol * np.maximum(np.abs(out[active]), 1e-300))
        active[idx[done]] = False
        if not active.any():
            break
    else:
        raise AccuracyError("xi_density series did not converge", partial=out / np.pi,
                            terms=cfg.max_terms)
    return out / np.pi


def _xi_integral(alpha: float, theta: np.ndarray) -> np.ndarray:
    # Zolotarev-type representation with a positive integrand:
    # xi(theta) = theta^(a/(1-a)) / (pi (1-a)) int_0^pi A(phi) exp(-theta^(1/(1-a)) A(phi)) dphi
    phi, w = _legendre_panels(24, 24)
    q = 1.0 / (1.0 - alpha)
    log_a = (q * (np.log(np.sin(alpha * phi)) - np.log(np.sin(phi)))
             + np.log(np.sin((1.0 - alpha) * phi)) - np.log(np.sin(alpha * phi)))
    amp = np.exp(log_a)
    c = theta ** q
    integrand = np.exp(log_a[None, :] - c[:, None] * amp[None, :])
    return theta ** (alpha * q) / (np.pi * (1.0 - alpha)) * (integrand @ w)


def xi_density(alpha: float, theta, cfg: MLEvalConfig | None = None):
    r"""One-sided probability density :math:`\xi_\alpha(\theta)` on :math:`[0, \infty)`.

    Its Laplace transform is :math:`E_{\alpha}(-x)`. Only ``0 < alpha < 1``
    is accepted; at ``alpha = 1`` the density degenerates to a point mass at
    ``theta = 1`` and callers must branch on that case themselves.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"xi_density requires 0 < alpha < 1, got {alpha}")
    cfg = DEFAULT_ML if cfg is None else cfg

    ta = np.asarray(theta, dtype=float)
    if np.any(ta < 0):
        raise DomainError("xi_density is supported on theta >= 0")
    flat = np.atleast_1d(ta).ravel()
    out = np.empty_like(flat)
    small = flat <= cfg.xi_split
    if small.any():
        out[small] = _xi_series(alpha, flat[small], cfg)
    if (~small).any():
        out[~small] = _xi_integral(alpha, flat[~small])

    out = np.maximum(out, 0.0)
    return float(out[0]) if ta.ndim == 0 else out.reshape(ta.shape)


# }}}
