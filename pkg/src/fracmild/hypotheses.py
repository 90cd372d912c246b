r"""Constants and inequalities behind the existence results, and the index
:math:`n_0` of the convex-power condensing argument.

.. math::

    \delta_1 = \Big(\frac{1 - \beta}{\alpha - \beta}\Big)^{1 - \beta}
        + C B(\alpha, \gamma) a^\gamma
          \Big(\frac{1 - \beta}{\alpha + \gamma - \beta}\Big)^{1 - \beta},
    \qquad
    \delta_2 = 1 + C a^\alpha \Big(\frac{1}{\alpha} + a^\gamma B(\alpha, \gamma + 1)\Big),

    M = L_1 + a K_0 L_2 + a H_0 L_3,

    c_n = \sum_{j=0}^n \binom{n}{j} (4 C M \Gamma(\alpha))^{n-j}
          (8 C^2 M \Gamma(\alpha) \Gamma(\gamma))^j
          \frac{a^{j\gamma + n\alpha}}{\Gamma(1 + j\gamma + n\alpha)}.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import integrate, special

from fracmild.errors import DomainError, NotFoundError, RangeError
from fracmild.specfun import beta as beta_fn


# {{{ inputs


@dataclass(frozen=True)
class HypothesisInputs:
    alpha: float
    beta_exp: float
    gamma_exp: float
    C: float
    a: float
    rho: float = 0.0
    L1: float = 0.0
    L2: float = 0.0
    L3: float = 0.0
    K0: float = 0.0
    H0: float = 0.0
    u0_norm: float = 0.0
    phi_norm: float | None = None
    """``||phi||`` in ``L^(1/beta)`` of the growth bound ``||f|| <= phi(t) Phi(||u||)``."""
    Phi: Callable[[float], float] | None = field(default=None, compare=False)
    Phi_slope: float | None = None
    """``liminf Phi(r) / r``, supplied by the user."""

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in (0, 1]: {self.alpha}")
        if not 0.0 < self.gamma_exp <= 1.0:
            raise DomainError(f"gamma must lie in (0, 1]: {self.gamma_exp}")
        if not 0.0 <= self.beta_exp < min(self.alpha, self.gamma_exp):
            raise DomainError(f"need 0 <= beta < min(alpha, gamma), got beta={self.beta_exp}")
        for name in ("C", "a", "rho", "L1", "L2", "L3", "K0", "H0", "u0_norm"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be finite and nonnegative: {v}")
        if not self.a > 0:
            raise DomainError(f"a must be positive: {self.a}")


def _check_exponents(alpha: float, beta_exp: float, gamma_exp: float) -> None:
    if not 0.0 <= beta_exp < min(alpha, gamma_exp):
        raise DomainError(f"need 0 <= beta < min(alpha, gamma), got beta={beta_exp}, "
                          f"alpha={alpha}, gamma={gamma_exp}")


# }}}


# {{{ constants


def delta1(alpha: float, beta_exp: float, gamma_exp: float, C: float, a: float) -> float:
    _check_exponents(alpha, beta_exp, gamma_exp)
    q = 1.0 - beta_exp
    return ((q / (alpha - beta_exp)) ** q
            + C * beta_fn(alpha, gamma_exp) * a**gamma_exp
            * (q / (alpha + gamma_exp - beta_exp)) ** q)


def delta2(alpha: float, gamma_exp: float, C: float, a: float) -> float:
    return 1.0 + C * a**alpha * (1.0 / alpha + a**gamma_exp * beta_fn(alpha, gamma_exp + 1.0))


def M_constant(L1: float, L2: float, L3: float, a: float, K0: float, H0: float) -> float:
    return L1 + a * K0 * L2 + a * H0 * L3


def lp_norm(values: Sequence[float], times: Sequence[float], beta_exp: float) -> float:
    """``L^(1/beta)`` norm of sampled values; ``beta = 0`` gives the sup norm."""
    v = np.abs(np.asarray(values, dtype=float))
    if beta_exp == 0:
        return float(v.max())
    return float(integrate.trapezoid(v ** (1.0 / beta_exp), np.asarray(times, dtype=float)) ** beta_exp)


# }}}


# {{{ verdicts


@dataclass(frozen=True)
class Verdict:
    name: str
    lhs: float
    rhs: float
    relation: str
    passed: bool

    def __post_init__(self) -> None:
        ok = {"<": self.lhs < self.rhs, "<=": self.lhs <= self.rhs}[self.relation]
        if ok != self.passed:
            raise DomainError(f"verdict {self.name} inconsistent with its witnesses")


def _verdict(name: str, lhs: float, rhs: float, relation: str) -> Verdict:
    passed = lhs < rhs if relation == "<" else lhs <= rhs
    return Verdict(name, float(lhs), float(rhs), relation, bool(passed))


def check_theorem1(inp: HypothesisInputs) -> Verdict:
    """``C rho a^(alpha - beta) delta1 < 1``."""
    d1 = delta1(inp.alpha, inp.beta_exp, inp.gamma_exp, inp.C, inp.a)
    return _verdict("theorem1", inp.C * inp.rho * inp.a ** (inp.alpha - inp.beta_exp) * d1,
                    1.0, "<")


def _require_growth(inp: HypothesisInputs) -> tuple[Callable[[float], float], float]:
    if inp.Phi is None or inp.phi_norm is None:
        raise DomainError("this condition needs Phi and phi_norm")
    return inp.Phi, inp.phi_norm


def check_theorem2(inp: HypothesisInputs, R: float) -> Verdict:
    """``delta1 Phi(R) a^(alpha - beta) ||phi|| <= R / C - delta2 ||u0||``."""
    if not R > 0:
        raise DomainError(f"R must be positive: {R}")
    Phi, pn = _require_growth(inp)
    d1 = delta1(inp.alpha, inp.beta_exp, inp.gamma_exp, inp.C, inp.a)
    d2 = delta2(inp.alpha, inp.gamma_exp, inp.C, inp.a)
    lhs = d1 * Phi(R) * inp.a ** (inp.alpha - inp.beta_exp) * pn
    rhs = (R / inp.C if inp.C > 0 else math.inf) - d2 * inp.u0_norm
    return _verdict("theorem2", lhs, rhs, "<=")


def find_radius(inp: HypothesisInputs, r_min: float = 1.0e-6, r_max: float = 1.0e12,
                points: int = 1000, refine: bool = True) -> float | None:
    """Smallest passing ``R`` on a logarithmic grid, refined by bisection.

    Returns ``None`` when no grid point passes.
    """
    rs = np.geomspace(r_min, r_max, points)
    ok = [check_theorem2(inp, r).passed for r in rs]
    if not any(ok):
        return None
    k = ok.index(True)
    if k == 0 or not refine:
        return float(rs[k])
    lo, hi = float(rs[k - 1]), float(rs[k])
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if check_theorem2(inp, mid).passed:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1.0e-15 * hi:
            break
    return hi


def check_corollary1(inp: HypothesisInputs) -> Verdict:
    """``liminf Phi(r) / r < 1 / (C delta1 a^(alpha - beta) ||phi||)``."""
    if inp.Phi_slope is None or inp.phi_norm is None:
        raise DomainError("this condition needs Phi_slope and phi_norm")
    d1 = delta1(inp.alpha, inp.beta_exp, inp.gamma_exp, inp.C, inp.a)
    den = inp.C * d1 * inp.a ** (inp.alpha - inp.beta_exp) * inp.phi_norm
    return _verdict("corollary1", inp.Phi_slope, 1.0 / den if den > 0 else math.inf, "<")


def estimate_slope(Phi: Callable[[float], float], r_grid: Sequence[float]) -> float:
    """Crude ``liminf Phi(r) / r``: the minimum over the largest tenth of *r_grid*."""
    r = np.sort(np.asarray(r_grid, dtype=float))
    tail = r[-max(1, r.size // 10):]
    return float(min(Phi(x) / x for x in tail))


def check_legacy(inp: HypothesisInputs, l: float | None = None,
                 l123: tuple[float, float, float] | None = None) -> dict[str, Verdict]:
    """Earlier restrictions ``a l < 1`` and ``2 a (l1 + a K0 l2 + a H0 l3) < 1``."""
    out = {}
    if l is not None:
        out["legacy_single"] = _verdict("legacy_single", inp.a * l, 1.0, "<")
    if l123 is not None:
        l1, l2, l3 = l123
        out["legacy_split"] = _verdict("legacy_split", 2.0 * inp.a * M_constant(l1, l2, l3, inp.a, inp.K0, inp.H0),
                             1.0, "<")
    return out


# }}}


# {{{ convex-power coefficients


def _log_terms(n: int, C: float, M: float, alpha: float, gamma_exp: float,
               a: float) -> np.ndarray:
    j = np.arange(n + 1, dtype=float)
    log_binom = special.gammaln(n + 1.0) - special.gammaln(j + 1.0) - special.gammaln(n - j + 1.0)
    l1 = math.log(4.0 * C * M * math.gamma(alpha))
    l2 = math.log(8.0 * C * C * M * math.gamma(alpha) * math.gamma(gamma_exp))
    ex = j * gamma_exp + n * alpha
    return (log_binom + (n - j) * l1 + j * l2 + ex * math.log(a)
            - special.gammaln(1.0 + ex))


def log_mnc_bound_coeff(n: int, C: float, M: float, alpha: float, gamma_exp: float,
                        a: float) -> float:
    """``log c_n``; ``-inf`` when ``C M = 0``."""
    if n < 1:
        raise DomainError(f"n must be positive: {n}")
    if not (0.0 < alpha <= 1.0 and 0.0 < gamma_exp <= 1.0 and a > 0 and C >= 0 and M >= 0):
        raise DomainError("need alpha, gamma in (0, 1], a > 0 and C, M >= 0")
    if C == 0 or M == 0:
        return -math.inf
    return float(special.logsumexp(_log_terms(n, C, M, alpha, gamma_exp, a)))


def mnc_bound_coeff(n: int, C: float, M: float, alpha: float, gamma_exp: float,
                    a: float) -> float:
    lv = log_mnc_bound_coeff(n, C, M, alpha, gamma_exp, a)
    if lv > math.log(np.finfo(float).max):
        raise RangeError(f"coefficient for n={n} overflows (log value {lv:.6g})")
    return math.exp(lv)


def find_n0(C: float, M: float, alpha: float, gamma_exp: float, a: float,
            cap: int = 10000) -> int:
    """Smallest ``n <= cap`` with ``c_n < 1`` (compared in log space)."""
    if cap < 1:
        raise DomainError(f"cap must be positive: {cap}")
    trace = []
    for n in range(1, cap + 1):
        lv = log_mnc_bound_coeff(n, C, M, alpha, gamma_exp, a)
        if lv < 0.0:
            return n
        trace.append(lv)
    raise NotFoundError(f"no n <= {cap} with coefficient below one", trace=trace)


def check_sadovskii(C: float, M: float, alpha: float, gamma_exp: float, a: float) -> Verdict:
    lv = log_mnc_bound_coeff(1, C, M, alpha, gamma_exp, a)
    return _verdict("sadovskii", math.exp(lv) if lv > -math.inf else 0.0, 1.0, "<")


# }}}


# {{{ report


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass(frozen=True)
class HypothesisReport:
    delta1: float
    delta2: float
    M: float
    n0: int | None
    C: float
    rho: float
    K0: float
    H0: float
    verdicts: dict[str, Verdict]
    radius: float | None = None
    log_coefficients: tuple[float, ...] = ()
    """``log c_n`` for ``n = 1 .. n0 + 30``."""
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["verdicts"] = {k: asdict(v) for k, v in self.verdicts.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> HypothesisReport:
        d = dict(d)
        d["verdicts"] = {k: Verdict(**v) for k, v in d["verdicts"].items()}
        d["log_coefficients"] = tuple(d.get("log_coefficients", ()))
        return cls(**d)

    def table(self) -> str:
        rows = [("quantity", "value", "")]
        for k in ("delta1", "delta2", "M", "C", "rho", "K0", "H0", "n0", "radius"):
            v = getattr(self, k)
            rows.append((k, "-" if v is None else f"{v:.10g}", ""))
        for v in self.verdicts.values():
            rows.append((f"condition {v.name}", f"{v.lhs:.6g} {v.relation} {v.rhs:.6g}",
                         "pass" if v.passed else "FAIL"))
        w = [max(len(r[i]) for r in rows) for i in range(3)]
        return "\n".join(f"{r[0]:<{w[0]}}  {r[1]:>{w[1]}}  {r[2]}".rstrip() for r in rows)


def audit(inp: HypothesisInputs, legacy_l: float | None = None,
          legacy_l123: tuple[float, float, float] | None = None,
          n0_cap: int = 10000) -> HypothesisReport:
    """Evaluate every condition that the inputs allow."""
    d1 = delta1(inp.alpha, inp.beta_exp, inp.gamma_exp, inp.C, inp.a)
    d2 = delta2(inp.alpha, inp.gamma_exp, inp.C, inp.a)
    M = M_constant(inp.L1, inp.L2, inp.L3, inp.a, inp.K0, inp.H0)

    verdicts = {"theorem1": check_theorem1(inp)}
    radius = None
    if inp.Phi is not None and inp.phi_norm is not None:
        radius = find_radius(inp)
        if radius is not None:
            verdicts["theorem2"] = check_theorem2(inp, radius)
    if inp.Phi_slope is not None and inp.phi_norm is not None:
        verdicts["corollary1"] = check_corollary1(inp)
    verdicts.update(check_legacy(inp, legacy_l, legacy_l123))
    verdicts["sadovskii"] = check_sadovskii(inp.C, M, inp.alpha, inp.gamma_exp, inp.a)

    n0 = None
    coeffs: list[float] = []
    if inp.C > 0 and M > 0:
        n0 = find_n0(inp.C, M, inp.alpha, inp.gamma_exp, inp.a, n0_cap)
        coeffs = [log_mnc_bound_coeff(n, inp.C, M, inp.alpha, inp.gamma_exp, inp.a)
                  for n in range(1, n0 + 31)]

    return HypothesisReport(delta1=d1, delta2=d2, M=M, n0=n0, C=inp.C, rho=inp.rho,
                            K0=inp.K0, H0=inp.H0, verdicts=verdicts, radius=radius,
                            log_coefficients=tuple(coeffs))


# }}}
