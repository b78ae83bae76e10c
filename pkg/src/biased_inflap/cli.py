"""Command-line front end: ``biased-inflap --config run.json``.

The configuration schema is documented in ``docs/config.md``. Every run
writes ``report.json`` into the output directory and prints one
``PASS``/``FAIL`` line per check; the exit status is nonzero iff a check
failed (1), the configuration was invalid (2) or a computation raised (3).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import _kernels, fieldio
from .cone_profiles import flat_start_profile
from .expr import Expression, ExprError, parse
from .geometry import DomainError, DomainSpec, Grid, build_grid, domain_dict_errors, neighborhoods
from .problems import Problem, exponential_1d, exponential_mixed_box, flat_start_disc
from .scheme import FROM_ABOVE, FROM_BELOW, SWEEPS, NonConvergedError, SchemeError, SchemeParams, solve
from .verify import (
    CASES,
    VerifyReport,
    check_apriori,
    check_cone_comparison,
    check_fd_comparison,
    check_perturbation,
    convergence_study,
    random_fd_comparison_instance,
    stability_study,
)

logger = logging.getLogger(__name__)

MODES = ("solve", "verify", "converge", "stability")
FORMATS = ("csv", "json", "pgm", "profile", "slices", "grid")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_TOP_KEYS = {"mode", "domain", "scheme", "data", "solver", "output", "converge", "stability", "verify"}
_DOMAIN_KEYS = {"dimension", "shape", "bounds", "center", "radius", "halfspaces", "vertices", "dirichlet",
                "neumann", "delta"}
_BLOCK_KEYS = {
    "scheme": {"eps", "beta"},
    "data": {"f", "g", "exact"},
    "solver": {"seed", "tol", "max_sweeps", "sweep"},
    "output": {"directory", "formats", "slices"},
    "converge": {"eps_list", "delta_ratio"},
    "stability": {"betas", "f_shifts", "margin", "final_rtol"},
    "verify": {"suite", "fd_instances", "rng_seed"},
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class RunConfig:
    mode: str
    spec: DomainSpec | None
    delta: float | None
    eps: float | None
    beta: float
    f: Expression | None
    g: Expression | None
    exact: Expression | None
    seed: str
    seed_path: Path | None
    tol: float
    max_sweeps: int
    sweep: str
    out_dir: Path
    formats: tuple[str, ...]
    slices: list[dict[str, float]]
    converge: dict[str, Any] = field(default_factory=dict)
    stability: dict[str, Any] = field(default_factory=dict)
    verify: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, Any] = field(default_factory=dict)


def _num(block: dict, key: str, where: str, errors: list[str], default=None, positive=False, integer=False):
    if key not in block:
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        errors.append(f"{where}.{key} must be a finite number")
        return default
    if integer and (not isinstance(v, int) and not float(v).is_integer()):
        errors.append(f"{where}.{key} must be an integer")
        return default
    if positive and not v > 0:
        errors.append(f"{where}.{key} must be positive")
        return default
    return int(v) if integer else float(v)


def _num_list(block: dict, key: str, where: str, errors: list[str], positive=False) -> list[float] | None:
    if key not in block:
        return None
    v = block[key]
    if not isinstance(v, list) or not v or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        errors.append(f"{where}.{key} must be a nonempty list of numbers")
        return None
    if positive and any(x <= 0 for x in v):
        errors.append(f"{where}.{key} entries must be positive")
        return None
    return [float(x) for x in v]


def parse_config(text: str, base_dir: Path | str = ".", overrides: dict[str, Any] | None = None) -> RunConfig:
    """Validate a JSON configuration, collecting every error before raising.

    ``base_dir`` anchors relative paths. ``overrides`` holds command-line
    values (``mode``, ``out``, ``tol``, ``seed_field``) that replace the file's.
    """
    base_dir = Path(base_dir)
    overrides = overrides or {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"JSON syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    if not isinstance(data, dict):
        raise ConfigError(["configuration must be a JSON object"])
    errors = [f"unknown key {k!r}" for k in sorted(set(data) - _TOP_KEYS)]
    blocks: dict[str, dict] = {}
    for name, allowed in _BLOCK_KEYS.items():
        block = data.get(name, {})
        if not isinstance(block, dict):
            errors.append(f"{name} must be an object")
            block = {}
        errors.extend(f"{name}: unknown key {k!r}" for k in sorted(set(block) - allowed))
        blocks[name] = block

    mode = overrides.get("mode") or data.get("mode", "solve")
    if mode not in MODES:
        errors.append(f"mode must be one of {', '.join(MODES)}")
    verify_blk = blocks["verify"]
    suite = verify_blk.get("suite", "default" if "domain" not in data else "config")
    if suite not in ("default", "config"):
        errors.append("verify.suite must be 'default' or 'config'")
    needs_problem = not (mode == "verify" and suite == "default")

    spec = delta = None
    if "domain" in data:
        dom = data["domain"]
        dom_errors = domain_dict_errors(dom)
        errors.extend(dom_errors)
        structural = [e for e in dom_errors if "unknown key" not in e]
        if not structural:
            known = {k: v for k, v in dom.items() if k in _DOMAIN_KEYS}
            try:
                spec = DomainSpec.from_dict(known)
            except DomainError as exc:
                errors.extend(exc.errors)
        if isinstance(dom, dict):
            if "delta" not in dom:
                errors.append("domain.delta is required")
            delta = _num(dom, "delta", "domain", errors, positive=True)
    elif needs_problem:
        errors.append("domain block is required")

    sch = blocks["scheme"]
    eps = _num(sch, "eps", "scheme", errors, positive=True)
    beta = _num(sch, "beta", "scheme", errors, default=0.0)
    if needs_problem and mode != "converge" and eps is None and "eps" not in sch:
        errors.append("scheme.eps is required")
    if eps is not None and delta is not None and delta > eps:
        errors.append(f"grid spacing delta={delta:g} exceeds eps={eps:g}")

    dom_dim = data.get("domain", {}).get("dimension") if isinstance(data.get("domain"), dict) else None
    dim = spec.dimension if spec is not None else (dom_dim if dom_dim in (1, 2, 3) else 3)
    exprs: dict[str, Expression | None] = {}
    for key, default in (("f", 0.0), ("g", 0.0), ("exact", None)):
        src = blocks["data"].get(key, default)
        if src is None:
            exprs[key] = None
            continue
        try:
            exprs[key] = parse(src, dim)
        except ExprError as exc:
            errors.append(f"data.{key}: {exc}")
            exprs[key] = None

    sol = blocks["solver"]
    tol = _num(sol, "tol", "solver", errors, default=1e-8, positive=True)
    if overrides.get("tol") is not None:
        tol = float(overrides["tol"])
        if not tol > 0:
            errors.append("--tol must be positive")
    max_sweeps = _num(sol, "max_sweeps", "solver", errors, default=100_000, positive=True, integer=True)
    sweep = sol.get("sweep", "gauss_seidel")
    if sweep not in SWEEPS:
        errors.append(f"solver.sweep must be one of {', '.join(SWEEPS)}")
    seed = sol.get("seed", FROM_ABOVE)
    seed_path = None
    if overrides.get("seed_field"):
        seed_path = Path(overrides["seed_field"]).resolve()
    elif isinstance(seed, str) and seed not in (FROM_ABOVE, FROM_BELOW):
        seed_path = (base_dir / seed).resolve()
    elif not isinstance(seed, str):
        errors.append("solver.seed must be 'from_above', 'from_below' or a field CSV path")
    if seed_path is not None:
        seed = "given"
        if not seed_path.is_file():
            errors.append(f"seed field file not found: {seed_path}")

    out = blocks["output"]
    out_dir = Path(overrides["out"]) if overrides.get("out") else base_dir / out.get("directory", "out")
    out_dir = out_dir.resolve()
    formats = out.get("formats", ["csv", "json", "pgm", "profile", "slices"])
    if not isinstance(formats, list) or any(f not in FORMATS for f in formats):
        errors.append(f"output.formats must be a list drawn from {', '.join(FORMATS)}")
        formats = []
    slices = out.get("slices", [])
    if not isinstance(slices, list) or any(not isinstance(s, dict) or set(s) != {"axis", "value"} for s in slices):
        errors.append("output.slices must be a list of {axis, value} objects")
        slices = []
    elif any(s["axis"] not in (1, 2, 3) for s in slices):
        errors.append("output.slices axis must be 1, 2 or 3")

    conv = blocks["converge"]
    converge = {"eps_list": _num_list(conv, "eps_list", "converge", errors, positive=True),
                "delta_ratio": _num(conv, "delta_ratio", "converge", errors, default=0.25, positive=True)}
    if mode == "converge":
        if converge["eps_list"] is None and "eps_list" not in conv:
            errors.append("converge.eps_list is required in converge mode")
        if "exact" not in blocks["data"]:
            errors.append("data.exact is required in converge mode")
        if converge["delta_ratio"] is not None and converge["delta_ratio"] > 1:
            errors.append("converge.delta_ratio must be at most 1 (delta <= eps)")

    stab = blocks["stability"]
    stability = {"betas": _num_list(stab, "betas", "stability", errors),
                 "f_shifts": _num_list(stab, "f_shifts", "stability", errors),
                 "margin": _num(stab, "margin", "stability", errors, positive=True),
                 "final_rtol": _num(stab, "final_rtol", "stability", errors, default=1e-2, positive=True)}
    if mode == "stability" and ("betas" in stab) == ("f_shifts" in stab):
        errors.append("stability needs exactly one of betas, f_shifts")

    verify = {"suite": suite,
              "fd_instances": _num(verify_blk, "fd_instances", "verify", errors, default=10, positive=True,
                                   integer=True),
              "rng_seed": _num(verify_blk, "rng_seed", "verify", errors, default=0, integer=True)}

    if errors:
        raise ConfigError(errors)
    return RunConfig(mode, spec, delta, eps, beta, exprs["f"], exprs["g"], exprs["exact"], seed, seed_path,
                     tol, max_sweeps, sweep, out_dir, tuple(formats), list(slices), converge, stability,
                     verify, data)


# ---------------------------------------------------------------- run


class _Run:
    """Collects checks, timings and artifacts for one invocation."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.checks: list[dict[str, Any]] = []
        self.timing: dict[str, float] = {}
        self.sections: dict[str, Any] = {}
        self.partial = False

    def check(self, name: str, passed: bool, detail: str, **extra) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} {name}: {detail}"
        print(line, flush=True)
        self.checks.append({"name": name, "passed": bool(passed), "detail": detail, **extra})
        return passed

    def add_report(self, rep: VerifyReport, name: str | None = None) -> bool:
        d = rep.to_dict()
        d["name"] = name or rep.name
        print(rep.summary() if name is None else rep.summary().replace(rep.name, name, 1), flush=True)
        self.checks.append({"name": d["name"], "passed": bool(rep.passed), "detail": rep.status, "report": d})
        return rep.passed

    def write(self, name: str, content: str | bytes) -> Path:
        return fieldio.write_text(self.cfg.out_dir / name, content, partial=self.partial)

    def report(self) -> dict[str, Any]:
        return {"mode": self.cfg.mode, "config": self.cfg.raw, "backend": _kernels.backend(),
                "checks": self.checks, "all_passed": all(c["passed"] for c in self.checks),
                "status": "partial" if self.partial else "complete", **self.sections,
                "timing": self.timing}


def _write_field_outputs(run: _Run, grid: Grid, u: np.ndarray, eps: float) -> None:
    cfg = run.cfg
    if "csv" in cfg.formats:
        run.write("solution.csv", fieldio.field_csv(grid, u))
    if "grid" in cfg.formats:
        run.write("grid.csv", fieldio.grid_csv(grid, eps))
    if grid.dimension == 1 and "profile" in cfg.formats:
        run.write("profile.csv", fieldio.profile_csv(grid, u))
    if grid.dimension == 2 and "pgm" in cfg.formats:
        img, scale = fieldio.heatmap_pgm(grid, u)
        run.write("heatmap.pgm", img)
        run.write("heatmap.scale.json", fieldio.dumps_json(scale))
    if grid.dimension == 3 and "slices" in cfg.formats:
        for s in cfg.slices:
            run.write(f"slice_x{s['axis']}_{s['value']:g}.csv",
                      fieldio.slice_csv(grid, u, int(s["axis"]) - 1, float(s["value"])))


def _solve_configured(run: _Run, grid: Grid, params: SchemeParams, seed=None):
    cfg = run.cfg
    if seed is None:
        seed = cfg.seed
        if cfg.seed_path is not None:
            seed = fieldio.read_field_csv(cfg.seed_path.read_text(), grid)
    t0 = time.perf_counter()
    u, rep = solve(grid, params, cfg.f, cfg.g, seed=seed, tol=cfg.tol, max_sweeps=cfg.max_sweeps, sweep=cfg.sweep)
    run.timing[f"solve_{rep.seed}"] = time.perf_counter() - t0
    return u, rep


def _solve_dict(rep) -> dict:
    d = rep.to_dict()
    d.pop("timing", None)
    return d


def _mode_solve(run: _Run) -> None:
    cfg = run.cfg
    grid = build_grid(cfg.spec, cfg.delta)
    params = SchemeParams(cfg.eps, cfg.beta)
    run.sections["grid"] = {"n_nodes": grid.n_nodes, "grid_hash": grid.grid_hash(), "delta": grid.delta}
    run.sections["params"] = {"eps": params.eps, "beta": params.beta, "a_plus": params.a_plus,
                              "a_minus": params.a_minus, "p_plus": params.p_plus, "p_minus": params.p_minus}
    try:
        u, rep = _solve_configured(run, grid, params)
    except NonConvergedError as exc:
        run.partial = True
        run.sections["solve"] = _solve_dict(exc.report)
        _write_field_outputs(run, grid, exc.field, cfg.eps)
        run.check("solve", False, f"not converged after {exc.report.iterations} sweeps, "
                                  f"residual={exc.report.residual:.3e} tol={cfg.tol:.3e}")
        return
    run.sections["solve"] = _solve_dict(rep)
    _write_field_outputs(run, grid, u, cfg.eps)
    run.check("solve", rep.converged or rep.status == "empty_omega_eps",
              f"{rep.status} in {rep.iterations} sweeps, residual={rep.residual:.3e} tol={cfg.tol:.3e}")
    if cfg.exact is not None:
        err = np.abs(u - cfg.exact(grid.coords))
        om = grid.omega_mask(cfg.eps)
        run.sections["error"] = {"sup_all": float(err.max()),
                                 "sup_omega_eps": float(err[om].max()) if om.any() else None}


def _config_problem(cfg: RunConfig, beta: float | None = None) -> Problem:
    return Problem("config", cfg.spec, cfg.beta if beta is None else beta, cfg.f, cfg.g, cfg.exact)


def _mode_converge(run: _Run) -> None:
    cfg = run.cfg
    eps_list = cfg.converge["eps_list"]
    t0 = time.perf_counter()
    table = convergence_study(_config_problem(cfg), eps_list, delta_ratio=cfg.converge["delta_ratio"],
                              tol=cfg.tol, max_sweeps=cfg.max_sweeps)
    run.timing["converge"] = time.perf_counter() - t0
    run.write("convergence.csv", table.to_csv())
    run.sections["convergence"] = table.to_dict()
    errs = table.errors()
    converged = all(r["status"] == "converged" for r in table.rows)
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    run.check("convergence", converged and decreasing,
              "errors on Omega_eps " + " > ".join(f"{e:.3e}" for e in errs)
              + ("" if decreasing else " (not strictly decreasing)")
              + ("" if converged else " (a solve did not converge)"))


def _mode_stability(run: _Run) -> None:
    cfg = run.cfg
    st = cfg.stability
    t0 = time.perf_counter()
    rep = stability_study(_config_problem(cfg), cfg.eps, cfg.delta, betas=st["betas"], f_shifts=st["f_shifts"],
                          margin=st["margin"], final_rtol=st["final_rtol"], tol=cfg.tol)
    run.timing["stability"] = time.perf_counter() - t0
    lines = ["member,param,distance,iterations"]
    lines.extend(f"{r['member']},{r['param']!r},{r['distance']!r},{r['iterations']}" for r in rep.table)
    run.write("stability.csv", "\n".join(lines) + "\n")
    run.add_report(rep)


def _mode_verify_config(run: _Run) -> None:
    """All applicable checkers on the configured problem."""
    cfg = run.cfg
    grid = build_grid(cfg.spec, cfg.delta)
    params = SchemeParams(cfg.eps, cfg.beta)
    try:
        u, rep = _solve_configured(run, grid, params, seed=FROM_ABOVE)
        v, rep_lo = _solve_configured(run, grid, params, seed=FROM_BELOW)
    except NonConvergedError as exc:
        run.partial = True
        _write_field_outputs(run, grid, exc.field, cfg.eps)
        run.check("solve", False, f"not converged after {exc.report.iterations} sweeps")
        return
    _write_field_outputs(run, grid, u, cfg.eps)
    run.sections["solve"] = {"from_above": _solve_dict(rep), "from_below": _solve_dict(rep_lo)}
    run.check("solve", rep.converged and rep_lo.converged and rep.monotone and rep_lo.monotone,
              f"from_above {rep.iterations} sweeps, from_below {rep_lo.iterations} sweeps, "
              f"monotone={rep.monotone and rep_lo.monotone}")
    f_nodes = cfg.f(grid.coords)
    g_nodes = cfg.g(grid.coords)
    gap = float(np.abs(u - v).max())
    one_signed = bool(np.all(f_nodes >= 0) or np.all(f_nodes <= 0))
    if one_signed:
        run.check("seed_gap", gap <= 1e-6 * (1 + float(np.abs(u).max())), f"gap={gap:.3e} (f has one sign)")
    else:
        run.check("seed_gap", True, f"gap={gap:.3e} reported only (f changes sign)", reported_only=True)
    if grid.omega_mask(2 * cfg.eps).any():
        run.add_report(check_perturbation(u, f_nodes, params, grid))
    k = float(np.abs(f_nodes).max())
    collar = ~grid.omega_mask(cfg.eps)
    run.add_report(check_apriori(u, float(g_nodes[collar].max()), cfg.beta, k, grid, cfg.eps))


def _mode_verify_default(run: _Run) -> None:
    """Self-contained benchmark suite: closed forms, solver runs and randomized comparison."""
    from .cone_profiles import fd_identity_check, from_initial
    from .scheme import coefficients

    cfg = run.cfg
    rng = np.random.default_rng(cfg.verify["rng_seed"])
    t0 = time.perf_counter()

    betas = rng.uniform(-50, 50, 1000) * 10.0 ** rng.uniform(-10, 0, 1000)
    epss = 10.0 ** rng.uniform(-3, 0, 1000)
    worst = 0.0
    for b, e in zip(betas, epss):
        ap, am = coefficients(b, e)
        worst = max(worst, abs((am - ap) - b) / (ap + am))
    run.check("coefficients", worst <= 1e-12, f"max |a- - a+ - beta|/(a+ + a-)={worst:.3e} tol=1e-12")

    worst = 0.0
    for _ in range(50):
        b = float(rng.uniform(-3, 3))
        kk = float(rng.uniform(-2, 2))
        prof = from_initial(b, kk, 0.0, float(rng.uniform(0.5, 2.0)))
        eps = float(rng.uniform(0.01, 0.2))
        r = min(prof.r_max, 1.0)
        if r < 2 * eps:
            continue
        lhs, rhs = fd_identity_check(prof, eps, r)
        worst = max(worst, abs(lhs - rhs))
    run.check("cone_identity", worst <= 1e-10, f"max |lhs - rhs|={worst:.3e} tol=1e-10")
    run.timing["closed_forms"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    prob = exponential_1d(1.0)
    eps, delta = 0.1, 0.025
    grid = build_grid(prob.spec, delta)
    params = SchemeParams(eps, prob.beta)
    nbr = neighborhoods(grid, eps)
    u_hi, rep_hi = solve(grid, params, prob.f, prob.g, seed=FROM_ABOVE, tol=1e-10, nbr=nbr)
    u_lo, rep_lo = solve(grid, params, prob.f, prob.g, seed=FROM_BELOW, tol=1e-10, nbr=nbr)
    gap = float(np.abs(u_hi - u_lo).max())
    run.check("seed_agreement_1d", gap <= 1e-8 and rep_hi.monotone and rep_lo.monotone,
              f"gap={gap:.3e} tol=1e-8 monotone={rep_hi.monotone and rep_lo.monotone}")
    run.add_report(check_perturbation(u_hi, 0.0, params, grid), "perturbation_1d")
    run.add_report(check_apriori(u_hi, 1.0, 1.0, 0.0, grid, eps), "apriori_1d")
    exact = prob.exact(grid.coords)
    run.add_report(check_perturbation(exact, 0.0, params, grid, tol=1e-10), "perturbation_1d_exact")

    box = exponential_mixed_box(1.0)
    grid2 = build_grid(box.spec, delta)
    u2, _ = solve(grid2, params, box.f, box.g, tol=1e-10)
    ref = np.interp(grid2.coords[:, 0], grid.coords[:, 0], u_hi)
    diff = float(np.abs(u2 - ref).max())
    run.check("mixed_box_matches_1d", diff <= 1e-8, f"max |u2d - u1d|={diff:.3e} tol=1e-8")
    run.timing["benchmarks_1d_2d"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    disc = flat_start_disc(1.0, -1.0)
    eps_d, delta_d = 0.2, 0.05
    grid_d = build_grid(disc.spec, delta_d)
    params_d = SchemeParams(eps_d, disc.beta)
    u_d, _ = solve(grid_d, params_d, disc.f, disc.g, tol=1e-10)
    run.add_report(check_perturbation(u_d, disc.f, params_d, grid_d), "perturbation_disc")
    run.add_report(check_perturbation(disc.exact(grid_d.coords), disc.f, params_d, grid_d),
                   "perturbation_disc_exact")
    collar = ~grid_d.omega_mask(eps_d)
    g_d = disc.exact(grid_d.coords)
    run.add_report(check_apriori(u_d, float(g_d[collar].max()), 1.0, 1.0, grid_d, eps_d), "apriori_disc")
    prof = flat_start_profile(1.0, -1.0)
    run.add_report(check_cone_comparison(disc.exact(grid_d.coords), prof, (0.0, 0.0), 1.0, grid_d),
                   "cone_comparison_disc")
    run.timing["benchmarks_disc"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    n_inst = cfg.verify["fd_instances"]
    for case in CASES:
        worst = -math.inf
        ok = True
        for _ in range(n_inst):
            inst = random_fd_comparison_instance(rng, case)
            rep = check_fd_comparison(inst["u"], inst["v"], inst["f"], inst["f_tilde"], inst["params"],
                                      inst["grid"], case)
            ok &= rep.passed
            worst = max(worst, rep.worst_violation)
        run.check(f"fd_comparison_{case}", ok, f"{n_inst} instances, worst excess={worst:.3e}")
    run.timing["fd_comparison"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    table = convergence_study(prob, [0.2, 0.1, 0.05], delta_ratio=0.25)
    errs = table.errors()
    run.write("convergence.csv", table.to_csv())
    run.sections["convergence"] = table.to_dict()
    run.check("convergence_1d", all(b < a for a, b in zip(errs, errs[1:])),
              "errors on Omega_eps " + " > ".join(f"{e:.3e}" for e in errs))
    run.timing["convergence"] = time.perf_counter() - t0


def run(cfg: RunConfig) -> int:
    """Execute one mode; returns the process exit status."""
    r = _Run(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    status = EXIT_OK
    try:
        if cfg.mode == "solve":
            _mode_solve(r)
        elif cfg.mode == "converge":
            _mode_converge(r)
        elif cfg.mode == "stability":
            _mode_stability(r)
        elif cfg.verify["suite"] == "default":
            _mode_verify_default(r)
        else:
            _mode_verify_config(r)
    except (SchemeError, DomainError, ExprError, fieldio.FieldIOError, ValueError) as exc:
        r.partial = True
        r.sections["error"] = f"{type(exc).__name__}: {exc}"
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        status = EXIT_RUNTIME
    r.timing["total"] = time.perf_counter() - t0
    rep = r.report()
    r.write("report.json", fieldio.dumps_json(rep))
    if status == EXIT_OK and not rep["all_passed"]:
        status = EXIT_CHECK_FAILED
    n_pass = sum(c["passed"] for c in r.checks)
    print(f"{cfg.mode}: {n_pass}/{len(r.checks)} checks passed; artifacts in {cfg.out_dir}")
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="biased-inflap", description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, help="JSON run configuration (see docs/config.md)")
    p.add_argument("--mode", choices=MODES, help="override the configured mode")
    p.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    p.add_argument("--threads", type=int, help="worker cap for parallel kernels; 1 = sequential reference")
    p.add_argument("--tol", type=float, help="override solver.tol")
    p.add_argument("--seed-field", type=Path, help="field CSV used as the initial iterate")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("ERROR --threads must be at least 1", file=sys.stderr)
            return EXIT_CONFIG
        _kernels.set_threads(args.threads)
    if args.config is None:
        if args.mode not in (None, "verify"):
            print("ERROR --config is required outside the default verify suite", file=sys.stderr)
            return EXIT_CONFIG
        text, base = json.dumps({"mode": "verify"}), Path.cwd()
    else:
        try:
            text = args.config.read_text()
        except OSError as exc:
            print(f"ERROR cannot read config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        base = args.config.resolve().parent
    overrides = {"mode": args.mode, "out": args.out, "tol": args.tol, "seed_field": args.seed_field}
    try:
        cfg = parse_config(text, base, overrides)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"CONFIG ERROR {e}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
