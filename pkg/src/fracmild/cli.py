"""Command-line driver: ``frac-mild solve|check|bench|selftest``.

Configuration is a TOML file with one table per concern::

    [problem]      # name = "heat" | "scalar" | "nonautonomous" | "custom", plus its parameters
    [operator]     # custom problems only: builtin family or matrix files
    [solver]       # grid_points, picard_tol, picard_max_iters, grading, damping
    [kernel]       # phi_series_tol, phi_max_terms, quad_panels, epsilon_guard
    [hypotheses]   # theorem to check and overrides of the fitted constants
    [bench]        # alphas, lambda, grids
    [output]       # dir, formats

Unknown tables or keys are errors. Exit status: 0 success, 1 configuration
error (nothing written), 2 no convergence (outputs still written), 3 a checked
condition fails (report still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import tomli

from fracmild import hypotheses as hyp
from fracmild.errors import ConfigError, ConvergenceError, DomainError
from fracmild.integral_ops import builtin_kernel, constant, kernel_sup
from fracmild.kernels import KernelConfig, fit_kernel_bounds
from fracmild.mild_solver import (
    ProblemSpec, SolverConfig, TrajectorySolution, solve_picard, solve_reference)
from fracmild.operator_family import (
    builtin_family, matrix_file_family, remark1_constant, verify_A1, verify_A2)
from fracmild.problems import (
    HeatProblemConfig, build_example_41, build_nonautonomous_benchmark,
    build_scalar_benchmark, phi_sup_41, verify_f_assumptions_41)

logger = logging.getLogger("fracmild")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_CHECK_FAILED = 0, 1, 2, 3


# {{{ configuration


_SCHEMA: dict[str, dict[str, type | tuple[type, ...]]] = {
    "problem": {
        "name": str, "alpha": (int, float), "a": (int, float),
        # heat
        "n_modes": int, "kappa_amplitude": (int, float), "kappa_exponent": (int, float),
        "initial_state": str, "forcing": (bool, int, float), "varphi_coeffs": list,
        # scalar / nonautonomous / custom
        "lambda": (int, float), "u0": (int, float, list),
        "K": dict, "H": dict,
    },
    "operator": {"family": str, "params": dict, "files": list},
    "solver": {"grid_points": int, "picard_tol": (int, float), "picard_max_iters": int,
               "grading": str, "damping": (int, float)},
    "kernel": {"phi_series_tol": (int, float), "phi_max_terms": int, "quad_panels": int,
               "epsilon_guard": (int, float)},
    "hypotheses": {"theorem": str, "beta": (int, float), "rho": (int, float),
                   "L1": (int, float), "L2": (int, float), "L3": (int, float),
                   "K0": (int, float), "H0": (int, float), "C": (int, float),
                   "gamma": (int, float), "phi_norm": (int, float), "Phi": str,
                   "Phi_scale": (int, float), "Phi_slope": (int, float),
                   "legacy_l": (int, float), "legacy_l123": list, "n0_cap": int,
                   "fit_kernels": bool},
    "bench": {"alphas": list, "lambda": (int, float), "grids": list},
    "output": {"dir": str, "formats": list},
}

_THEOREMS = ("theorem1", "theorem2", "corollary1", "legacy_single", "legacy_split",
             "sadovskii")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    problem: dict[str, Any]
    solver: SolverConfig
    kernel: KernelConfig
    hypotheses: dict[str, Any] = field(default_factory=dict)
    bench: dict[str, Any] = field(default_factory=dict)
    operator: dict[str, Any] = field(default_factory=dict)
    output_dir: Path = Path("frac-mild-out")
    formats: tuple[str, ...] = ("csv", "json")
    base_dir: Path = Path(".")


def _validate(raw: dict[str, Any]) -> None:
    for section, body in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown table [{section}]; known: {', '.join(_SCHEMA)}")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, val in body.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"[{section}] unknown key {key!r}; known: "
                                  f"{', '.join(_SCHEMA[section])}")
            want = _SCHEMA[section][key]
            if not isinstance(val, want) or (isinstance(val, bool) and bool not in
                                             (want if isinstance(want, tuple) else (want,))):
                raise ConfigError(f"[{section}] {key} has type {type(val).__name__}")


def load_config(path: str | os.PathLike | None, subcommand: str,
                out: str | None = None) -> RunConfig:
    raw: dict[str, Any] = {}
    base = Path(".")
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomli.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base = Path(path).resolve().parent
    _validate(raw)

    problem = dict(raw.get("problem", {}))
    problem.setdefault("name", "heat")
    if problem["name"] not in ("heat", "scalar", "nonautonomous", "custom"):
        raise ConfigError(f"[problem] name must be heat, scalar, nonautonomous or custom, "
                          f"got {problem['name']!r}")

    try:
        kernel = KernelConfig(**raw.get("kernel", {}))
        solver = SolverConfig(kernel_cfg=kernel, **raw.get("solver", {}))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc

    hy = dict(raw.get("hypotheses", {}))
    if hy.get("theorem", "theorem1") not in _THEOREMS:
        raise ConfigError(f"[hypotheses] theorem must be one of {', '.join(_THEOREMS)}")
    if hy.get("Phi", "constant") not in ("constant", "linear"):
        raise ConfigError("[hypotheses] Phi must be 'constant' or 'linear'")

    outsec = raw.get("output", {})
    formats = tuple(outsec.get("formats", ["csv", "json"]))
    if not set(formats) <= {"csv", "json"}:
        raise ConfigError(f"[output] formats must be a subset of csv, json: {formats}")
    out_dir = Path(out) if out is not None else Path(outsec.get("dir", "frac-mild-out"))

    return RunConfig(subcommand=subcommand, problem=problem, solver=solver, kernel=kernel,
                     hypotheses=hy, bench=dict(raw.get("bench", {})),
                     operator=dict(raw.get("operator", {})), output_dir=out_dir,
                     formats=formats, base_dir=base)


def build_problem(cfg: RunConfig) -> ProblemSpec:
    pr = dict(cfg.problem)
    name = pr.pop("name")
    try:
        if name == "heat":
            allowed = {"alpha", "a", "n_modes", "kappa_amplitude", "kappa_exponent",
                       "initial_state", "forcing", "varphi_coeffs"}
            _only(pr, allowed, name)
            if "varphi_coeffs" in pr:
                pr["varphi_coeffs"] = tuple(float(x) for x in pr["varphi_coeffs"])
            if "forcing" in pr:
                pr["forcing"] = bool(pr["forcing"])
            return build_example_41(HeatProblemConfig(**pr))
        if name == "scalar":
            _only(pr, {"alpha", "a", "lambda", "u0"}, name)
            return build_scalar_benchmark(float(pr.get("lambda", 1.0)),
                                          float(pr.get("alpha", 0.5)),
                                          float(pr.get("u0", 1.0)),
                                          float(pr.get("a", 1.0))).problem
        if name == "nonautonomous":
            _only(pr, {"forcing", "u0", "a"}, name)
            return build_nonautonomous_benchmark(float(pr.get("forcing", 0.0)),
                                                 float(pr.get("u0", 1.0)),
                                                 float(pr.get("a", 1.0))).problem
        return _custom_problem(cfg, pr)
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(f"[problem] {exc}") from exc


def _only(pr: dict[str, Any], allowed: set[str], name: str) -> None:
    extra = set(pr) - allowed
    if extra:
        raise ConfigError(f"[problem] keys {sorted(extra)} do not apply to {name!r}")


def _custom_problem(cfg: RunConfig, pr: dict[str, Any]) -> ProblemSpec:
    _only(pr, {"alpha", "a", "u0", "K", "H"}, "custom")
    a = float(pr.get("a", 1.0))
    op_sec = cfg.operator
    if "files" in op_sec:
        entries = [(float(t), cfg.base_dir / p) for t, p in op_sec["files"]]
        op = matrix_file_family(entries, a)
    elif "family" in op_sec:
        op = builtin_family(op_sec["family"], **{"a": a, **op_sec.get("params", {})})
    else:
        raise ConfigError("[operator] needs 'family' or 'files' for a custom problem")

    def kernel(spec: dict[str, Any] | None, support: str):
        if spec is None:
            return constant(0.0, support)
        spec = dict(spec)
        return builtin_kernel(spec.pop("name"), support=support, **spec)

    u0 = np.atleast_1d(np.asarray(pr.get("u0", [1.0] * op.dim), dtype=float))
    return ProblemSpec(alpha=float(pr.get("alpha", 0.5)), a=a, op=op, u0=u0,
                       K=kernel(pr.get("K"), "triangle"), H=kernel(pr.get("H"), "square"),
                       name="custom")


# }}}


# {{{ output


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_trajectory_csv(path: Path, sol: TrajectorySolution) -> None:
    tr = sol.trajectory
    norms = np.linalg.norm(tr.values, axis=1)
    lines = [",".join(["t", "norm"] + [f"c{k + 1}" for k in range(tr.dim)])]
    for t, nrm, row in zip(tr.times, norms, tr.values):
        lines.append(",".join([_fmt(t), _fmt(nrm)] + [_fmt(x) for x in row]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _json_ready(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    return obj


def write_json(path: Path, data: dict[str, Any]) -> None:
    path.write_text(json.dumps(_json_ready(data), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


# }}}


# {{{ hypothesis inputs


def fitted_constants(p: ProblemSpec, cfg: RunConfig) -> dict[str, Any]:
    """Fit the operator constants; the single ``C`` is the largest of them."""
    op = p.op
    grid = np.linspace(0.0, p.a, 33)
    a2, op2 = verify_A2(op, grid, store=True)
    a1 = verify_A1(op, [0.0, 0.5, 1.0, 10.0, 1.0e2, 1.0e4, 1.0e8], grid[::4])
    w0, _ = op.eig(0.0)
    consts = {"A1": a1.C, "A2": a2.C, "remark1": remark1_constant(op),
              "A_inv_0": float(1.0 / w0[0])}
    if cfg.hypotheses.get("fit_kernels", True):
        kb = fit_kernel_bounds(op2, p.alpha, cfg.kernel, samples=4, u0=p.u0)
        consts.update({"psi": kb.psi, "phi": kb.phi, "U": kb.U, "psi_U": kb.psi_U})
    return {"constants": consts, "C": max(consts.values()), "gamma": a2.gamma,
            "A1_violated": a1.violated}


def hypothesis_inputs(p: ProblemSpec, cfg: RunConfig) -> tuple[hyp.HypothesisInputs,
                                                                dict[str, Any]]:
    hy = cfg.hypotheses
    fit = fitted_constants(p, cfg)
    extra: dict[str, Any] = {"fitted": fit}

    if p.name == "heat":
        fa = verify_f_assumptions_41()
        extra["f_assumptions"] = {"growth_ok": fa.growth_ok,
                                  "growth_max_ratio": fa.growth_max_ratio,
                                  "lipschitz": fa.lipschitz, "lipschitz_ok": fa.lipschitz_ok}
        defaults = {"beta": 0.0, "rho": 0.0, "L1": 1.0, "L2": 1.0, "L3": 1.0,
                    "K0": fa.K0, "H0": fa.H0, "phi_norm": phi_sup_41(p.a),
                    "Phi_slope": 0.0, "legacy_l123": [1.0, 1.0, 1.0]}
    else:
        defaults = {"beta": 0.0, "rho": 0.0, "L1": 0.0, "L2": 0.0, "L3": 0.0,
                    "K0": kernel_sup(p.K, 101, p.a), "H0": kernel_sup(p.H, 101, p.a),
                    "phi_norm": 1.0, "Phi_slope": 0.0}
    v = {**defaults, **hy}

    scale = float(v.get("Phi_scale", 1.0))
    Phi = (lambda r: scale) if v.get("Phi", "constant") == "constant" else (lambda r: scale * r)
    slope = float(v["Phi_slope"]) if "Phi_slope" in hy or v.get("Phi", "constant") == "constant" \
        else scale

    try:
        inp = hyp.HypothesisInputs(
            alpha=p.alpha, beta_exp=float(v["beta"]),
            gamma_exp=float(v.get("gamma", fit["gamma"])),
            C=float(v.get("C", fit["C"])), a=p.a, rho=float(v["rho"]),
            L1=float(v["L1"]), L2=float(v["L2"]), L3=float(v["L3"]),
            K0=float(v["K0"]), H0=float(v["H0"]),
            u0_norm=float(np.linalg.norm(p.u0)), phi_norm=float(v["phi_norm"]),
            Phi=Phi, Phi_slope=slope)
    except DomainError as exc:
        raise ConfigError(f"[hypotheses] {exc}") from exc
    extra["legacy_l"] = v.get("legacy_l")
    extra["legacy_l123"] = v.get("legacy_l123")
    return inp, extra


def run_audit(p: ProblemSpec, cfg: RunConfig) -> tuple[hyp.HypothesisReport, str]:
    inp, extra = hypothesis_inputs(p, cfg)
    l123 = extra.get("legacy_l123")
    report = hyp.audit(inp, legacy_l=extra.get("legacy_l"),
                       legacy_l123=tuple(l123) if l123 is not None else None,
                       n0_cap=int(cfg.hypotheses.get("n0_cap", 10000)))
    report = replace(report, extra={k: v for k, v in extra.items()
                                    if k not in ("legacy_l", "legacy_l123")})
    return report, cfg.hypotheses.get("theorem", "theorem1")


# }}}


# {{{ subcommands


def run_solve(cfg: RunConfig, with_check: bool = False) -> int:
    p = build_problem(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)

    status = EXIT_OK
    try:
        sol = solve_picard(p, cfg.solver)
    except ConvergenceError as exc:
        sol = exc.solution
        status = EXIT_NONCONVERGED
        logger.warning("%s", exc)

    diag: dict[str, Any] = {
        "problem": p.name, "alpha": p.alpha, "a": p.a, "dim": p.dim,
        "grid_points": cfg.solver.grid_points, "grading": cfg.solver.grading,
        "converged": sol.converged, "iterations": sol.iterations, "residual": sol.residual,
        "residual_history": list(sol.residual_history),
        "contraction_estimates": list(sol.contraction_estimates),
        "sup_norm": sol.trajectory.sup_norm(),
    }
    if with_check:
        report, theorem = run_audit(p, cfg)
        diag["kernel_constants"] = report.extra.get("fitted")
        diag["hypotheses"] = report.to_dict()
        diag["n0"] = report.n0
        diag["selected_theorem"] = theorem
    else:
        a2 = verify_A2(p.op, np.linspace(0.0, p.a, 33))
        diag["kernel_constants"] = {"A2": {"C": a2.C, "gamma": a2.gamma}}

    if "csv" in cfg.formats:
        write_trajectory_csv(cfg.output_dir / "trajectory.csv", sol)
    if "json" in cfg.formats:
        write_json(cfg.output_dir / "diagnostics.json", diag)
    print(f"{'converged' if sol.converged else 'NOT converged'}: "
          f"{sol.iterations} iterations, residual {sol.residual:.3e}")
    return status


def run_check(cfg: RunConfig) -> int:
    p = build_problem(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    report, theorem = run_audit(p, cfg)

    if "json" in cfg.formats:
        (cfg.output_dir / "check_report.json").write_text(report.to_json() + "\n",
                                                          encoding="utf-8")
    table = report.table()
    (cfg.output_dir / "check_report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)

    v = report.verdicts.get(theorem)
    if v is None:
        print(f"condition {theorem} could not be evaluated with the given inputs")
        return EXIT_CHECK_FAILED
    print(f"selected condition {theorem}: {'pass' if v.passed else 'FAIL'} "
          f"({v.lhs!r} {v.relation} {v.rhs!r})")
    return EXIT_OK if v.passed else EXIT_CHECK_FAILED


def bench_rows(alphas: Sequence[float], lam: float, grids: Sequence[int],
               picard_tol: float = 1.0e-12) -> list[dict[str, Any]]:
    rows = []
    for alpha in alphas:
        bm = build_scalar_benchmark(lam, alpha)
        for method, solver in (("picard", solve_picard), ("l1", solve_reference)):
            prev = None
            for n in grids:
                sol = solver(bm.problem, SolverConfig(grid_points=n, picard_tol=picard_tol))
                tr = sol.trajectory
                err = float(np.abs(tr.values - bm.exact(tr.times)).max())
                order = (math.log2(prev / err) if prev is not None and err > 1e-13
                         and prev > 1e-13 else float("nan"))
                rows.append({"alpha": alpha, "method": method, "grid_points": n,
                             "error": err, "order": order})
                prev = err
    return rows


def run_bench(cfg: RunConfig) -> int:
    b = cfg.bench
    alphas = [float(x) for x in b.get("alphas", [0.5, 0.8, 1.0])]
    grids = [int(x) for x in b.get("grids", [16, 32, 64, 128])]
    lam = float(b.get("lambda", 1.0))
    rows = bench_rows(alphas, lam, grids)

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    lines = ["alpha,method,grid_points,error,order"]
    for r in rows:
        lines.append(f"{r['alpha']},{r['method']},{r['grid_points']},"
                     f"{_fmt(r['error'])},{_fmt(r['order'])}")
    (cfg.output_dir / "bench.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    print(f"{'alpha':>6} {'method':>7} {'N':>6} {'error':>12} {'order':>7}")
    for r in rows:
        print(f"{r['alpha']:>6.2f} {r['method']:>7} {r['grid_points']:>6d} "
              f"{r['error']:>12.3e} {r['order']:>7.3f}")
    return EXIT_OK


def selftest_checks() -> list[tuple[str, bool, str]]:
    from fracmild.quadrature import (
        double_singular_integrate, double_singular_integrate_direct, semi_infinite_quad)
    from fracmild.specfun import mittag_leffler, xi_density

    out = []
    err = max(abs(semi_infinite_quad(lambda th: np.exp(-x * th) * xi_density(al, th))
                  / mittag_leffler(al, 1.0, -x) - 1.0)
              for al in (0.3, 0.7) for x in (0.1, 5.0))
    out.append(("laplace transform of xi", err <= 1e-6, f"{err:.2e}"))

    err = max(abs(double_singular_integrate(al, ga, 1.0, np.exp)
                  / double_singular_integrate_direct(al, ga, 1.0, np.exp) - 1.0)
              for al in (0.4, 1.0) for ga in (0.6, 1.0))
    out.append(("double singular integral reduction", err <= 1e-6, f"{err:.2e}"))

    bm = build_scalar_benchmark(1.0, 0.5)
    sol = solve_picard(bm.problem, SolverConfig(grid_points=64))
    err = float(np.abs(sol.trajectory.values - bm.exact(sol.trajectory.times)).max())
    out.append(("scalar fractional oracle", err <= 1e-4, f"{err:.2e}"))

    bm = build_nonautonomous_benchmark(1.0)
    sol = solve_picard(bm.problem, SolverConfig(grid_points=128))
    err = float(np.abs(sol.trajectory.values - bm.exact(sol.trajectory.times)).max())
    out.append(("non-autonomous classical oracle", err <= 1e-4, f"{err:.2e}"))
    return out


def run_selftest(cfg: RunConfig) -> int:
    ok = True
    for name, passed, detail in selftest_checks():
        print(f"{'PASS' if passed else 'FAIL'}  {name} ({detail})")
        ok &= passed
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# }}}


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="frac-mild", description=__doc__.split("\n")[0])
    parser.add_argument("subcommand", choices=("solve", "check", "bench", "selftest"))
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("--with-check", action="store_true",
                        help="solve: also audit the existence conditions")
    parser.add_argument("--out", help="output directory (overrides [output] dir)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")

    if args.config is None and args.subcommand in ("solve", "check"):
        print("error: --config is required for solve and check", file=sys.stderr)
        return EXIT_CONFIG

    try:
        cfg = load_config(args.config, args.subcommand, args.out)
        if args.subcommand in ("solve", "check"):
            build_problem(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    t0 = time.perf_counter()
    try:
        if args.subcommand == "solve":
            status = run_solve(cfg, with_check=args.with_check)
        elif args.subcommand == "check":
            status = run_check(cfg)
        elif args.subcommand == "bench":
            status = run_bench(cfg)
        else:
            status = run_selftest(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logger.info("%s finished in %.2f s", args.subcommand, time.perf_counter() - t0)
    return status


if __name__ == "__main__":
    sys.exit(main())
