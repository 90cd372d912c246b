"""Quadrature for endpoint-singular finite integrals and semi-infinite integrals.

The basic object is a :class:`SingularRule` on :math:`(0, 1)` for

.. math::

    \\int_0^1 s^{\\mu - 1} g(s) \\,\\mathrm{d}s.

The first panel is a Gauss-Jacobi rule that absorbs :math:`s^{\\mu - 1}`
exactly, the remaining panels are Gauss-Legendre rules with the weight folded
into the weights. Panel breakpoints are graded geometrically toward
:math:`s = 1`, so that integrable singularities of ``g`` at the far
endpoint (for example :math:`\\eta^{\\gamma - 1}` at :math:`\\eta = 0`) are
resolved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from fracmild.errors import AccuracyError, DomainError, EvaluationError
from fracmild.specfun import beta as beta_fn


# {{{ rules


@dataclass(frozen=True)
class SingularRule:
    r"""Weighted rule for :math:`\int_0^1 s^{\mu - 1} g(s) \,\mathrm{d}s`.

    ``complement`` holds ``1 - nodes`` computed without cancellation, which
    keeps the heavily graded panels near :math:`s = 1` distinct.
    """

    mu: float
    panel_count: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    complement: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.mu <= 2.0:
            raise DomainError(f"mu must lie in (0, 2]: {self.mu}")
        if self.panel_count < 1:
            raise DomainError(f"panel_count must be positive: {self.panel_count}")
        if not (self.nodes.shape == self.weights.shape == self.complement.shape) \
                or self.nodes.ndim != 1:
            raise DomainError("nodes and weights must be 1-D arrays of equal length")
        if np.any(np.diff(self.complement) >= 0):
            raise DomainError("nodes must be strictly increasing")

        for ary in (self.nodes, self.weights, self.complement):
            ary.setflags(write=False)

    def __call__(self, g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.tensordot(self.weights, _sample(g, self.nodes), axes=(0, 0))


@lru_cache(maxsize=64)
def _rule_arrays(mu: float, panel_count: int, order: int,
                 ratio: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # [0, 1/2] carries the exact Jacobi weight; the rest is graded toward 1.
    # The right panels are laid out in c = 1 - s.
    cedges = np.concatenate([0.5 * ratio ** np.arange(panel_count - 1, dtype=float), [0.0]])

    xs, cs, ws = [], [], []

    b = 0.5 if panel_count > 1 else 1.0
    x, w = special.roots_jacobi(order, 0.0, mu - 1.0)
    xs.append(0.5 * b * (x + 1.0))
    cs.append(1.0 - xs[-1])
    ws.append(w * (0.5 * b) ** mu)

    xl, wl = np.polynomial.legendre.leggauss(order)
    for hi, lo in zip(cedges[:-1], cedges[1:]):
        c = lo + 0.5 * (hi - lo) * (1.0 - xl)
        xs.append(1.0 - c)
        cs.append(c)
        ws.append(0.5 * (hi - lo) * wl * (1.0 - c) ** (mu - 1.0))

    return np.concatenate(xs), np.concatenate(ws), np.concatenate(cs)


def make_singular_rule(mu: float, panel_count: int = 16, order: int = 16,
                       ratio: float = 0.15) -> SingularRule:
    """Build a :class:`SingularRule` with *panel_count* panels of *order* nodes.

    :arg ratio: geometric grading factor of the panel widths near both ends.
    """
    if not 0.0 < ratio < 1.0:
        raise DomainError(f"ratio must lie in (0, 1): {ratio}")
    if order < 2:
        raise DomainError(f"order must be at least 2: {order}")
    if not 0.0 < mu <= 2.0:
        raise DomainError(f"mu must lie in (0, 2]: {mu}")

    x, w, c = _rule_arrays(float(mu), int(panel_count), int(order), float(ratio))
    return SingularRule(mu=float(mu), panel_count=int(panel_count),
                        nodes=x.copy(), weights=w.copy(), complement=c.copy())


# }}}


# {{{ integrals


def _sample(g: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    # g is vectorized over its first axis; scalars broadcast; otherwise node by node
    try:
        vals = np.asarray(g(x), dtype=float)
    except (TypeError, ValueError, ArithmeticError):
        vals = None
    if vals is not None and vals.ndim == 0:
        vals = np.broadcast_to(vals, (x.size,))
    elif vals is None or vals.shape[0] != x.size:
        rows = []
        for xi in x:
            try:
                rows.append(np.asarray(g(xi), dtype=float))
            except (TypeError, ValueError, ArithmeticError) as exc:
                raise EvaluationError(f"integrand failed at node {float(xi)!r}: {exc}",
                                      node=float(xi)) from exc
        vals = np.stack(rows)

    bad = ~np.isfinite(vals.reshape(x.size, -1)).all(axis=1)
    if bad.any():
        node = float(x[np.flatnonzero(bad)[0]])
        raise EvaluationError(f"integrand is not finite at node {node!r}", node=node)
    return vals


def singular_integrate(mu: float, upper: float, g: Callable[[np.ndarray], np.ndarray],
                       rule: SingularRule | None = None) -> np.ndarray | float:
    r"""Approximate :math:`\int_0^U (U - \eta)^{\mu - 1} g(\eta) \,\mathrm{d}\eta`.

    *g* receives a 1-D array of nodes and returns values along the first axis.
    Substituting :math:`\eta = U (1 - s)` gives
    :math:`U^\mu \int_0^1 s^{\mu - 1} g(U (1 - s)) \,\mathrm{d}s`.
    """
    if not upper >= 0:
        raise DomainError(f"upper must be nonnegative: {upper}")
    if rule is None:
        rule = make_singular_rule(mu)
    elif rule.mu != mu:
        raise DomainError(f"rule exponent {rule.mu} does not match mu={mu}")

    vals = _sample(g, upper * rule.complement)
    out = upper**mu * np.tensordot(rule.weights, vals, axes=(0, 0))
    return float(out) if np.ndim(out) == 0 else out


def double_singular_integrate(alpha: float, gamma_exp: float, t: float,
                              g: Callable[[np.ndarray], np.ndarray],
                              panel_count: int = 16) -> np.ndarray | float:
    r"""Iterated integral
    :math:`\int_0^t \int_0^\eta (t - \eta)^{\alpha - 1} (\eta - s)^{\gamma - 1} g(s)
    \,\mathrm{d}s \,\mathrm{d}\eta`
    via the reduction to :math:`B(\alpha, \gamma)\int_0^t (t - \eta)^{\alpha + \gamma - 1}
    g(\eta) \,\mathrm{d}\eta`.
    """
    for name, v in (("alpha", alpha), ("gamma_exp", gamma_exp)):
        if not 0.0 < v <= 1.0:
            raise DomainError(f"{name} must lie in (0, 1]: {v}")

    rule = make_singular_rule(alpha + gamma_exp, panel_count)
    return beta_fn(alpha, gamma_exp) * singular_integrate(alpha + gamma_exp, t, g, rule)


def double_singular_integrate_direct(alpha: float, gamma_exp: float, t: float,
                                     g: Callable[[np.ndarray], np.ndarray],
                                     panel_count: int = 16) -> np.ndarray | float:
    """Same integral as :func:`double_singular_integrate` by nested quadrature.

    Costs one inner rule per outer node; intended for cross-checks only.
    """
    inner = make_singular_rule(gamma_exp, panel_count)
    outer = make_singular_rule(alpha, panel_count)

    def h(eta: np.ndarray) -> np.ndarray:
        return np.stack([np.asarray(singular_integrate(gamma_exp, e, g, inner))
                         if e > 0 else 0.0 * np.asarray(g(np.zeros(1)))[0]
                         for e in eta])

    return singular_integrate(alpha, t, h, outer)


def semi_infinite_quad(integrand: Callable[[np.ndarray], np.ndarray],
                       decay_scale: float = 1.0, *,
                       order: int = 32, tol: float = 1.0e-15,
                       max_panels: int = 200) -> float:
    r"""Approximate :math:`\int_0^\infty f(\theta) \,\mathrm{d}\theta`.

    Composite Gauss-Legendre on panels whose widths grow geometrically from
    ``decay_scale / 8``; stops once three consecutive panels contribute less
    than *tol* relative to the running total.
    """
    if not decay_scale > 0:
        raise DomainError(f"decay_scale must be positive: {decay_scale}")

    xl, wl = np.polynomial.legendre.leggauss(order)
    total = 0.0
    lo, width = 0.0, decay_scale / 8.0
    quiet = 0
    history = []
    for k in range(max_panels):
        hi = lo + width
        x = 0.5 * width * (xl + 1.0) + lo
        vals = _sample(integrand, x)
        part = float(0.5 * width * np.dot(wl, vals))
        total += part
        history.append(part)

        quiet = quiet + 1 if abs(part) <= tol * abs(total) else 0
        if quiet >= 3:
            return total

        lo = hi
        if k >= 3:
            width *= 2.0
    raise AccuracyError(f"tail did not decay within {max_panels} panels",
                        partial=total, terms=len(history))


# }}}
