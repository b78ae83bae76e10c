"""Time the numba and numpy kernel backends on a 2D disc problem.

Usage: ``python benchmarks/bench_kernels.py [--delta 0.02] [--eps 0.06] [--repeat 3]``

Both kernel sets are called directly, so one process measures both. The
full-solve comparison runs ``solve`` in a subprocess per backend because the
backend is fixed at import time by ``BIASED_INFLAP_NUMBA``.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from biased_inflap import _kernels
from biased_inflap.geometry import build_grid, neighborhoods, omega_eps_nodes
from biased_inflap.problems import flat_start_disc
from biased_inflap.scheme import SchemeParams

_SOLVE = """
import json, time
from biased_inflap import _kernels
from biased_inflap.geometry import build_grid
from biased_inflap.problems import flat_start_disc
from biased_inflap.scheme import SchemeParams, solve
prob = flat_start_disc(1.0, -1.0)
grid = build_grid(prob.spec, {delta})
t0 = time.perf_counter()
u, rep = solve(grid, SchemeParams({eps}, 1.0), prob.f, prob.g, tol=1e-8)
print(json.dumps({{"backend": _kernels.backend(), "seconds": time.perf_counter() - t0,
                  "sweeps": rep.iterations, "nodes": grid.n_nodes}}))
"""


def best_of(fn, repeat: int) -> float:
    fn()  # warm-up, includes jit compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_timings(delta: float, eps: float, repeat: int) -> list[tuple[str, float, float]]:
    prob = flat_start_disc(1.0, -1.0)
    grid = build_grid(prob.spec, delta)
    nbr = neighborhoods(grid, eps)
    nodes = omega_eps_nodes(grid, eps)
    params = SchemeParams(eps, 1.0)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(grid.n_nodes)
    src = np.full(grid.n_nodes, 0.01)
    coords = np.ascontiguousarray(grid.coords)
    mask = np.ones(grid.n_nodes, bool)
    table = nbr.table
    ap, am = params.a_plus, params.a_minus
    pm, pp = params.p_minus, params.p_plus

    cases = {
        "ball_max": lambda k: k["ball_max"](u, table),
        "residual_nodes": lambda k: k["residual_nodes"](u, src, table, nodes, ap, am, eps),
        "gs_sweep": lambda k: k["gs_sweep"](u.copy(), table, nodes, pm, pp, src, 0.0),
        "jacobi_step": lambda k: k["jacobi_step"](u, np.empty_like(u), table, nodes, pm, pp, src),
        "pair_slopes": lambda k: k["pair_slopes"](u, coords, table, nodes, mask, 0.0),
    }
    rows = []
    for name, call in cases.items():
        np_k = {n: getattr(_kernels, n + "_np") for n in cases}
        t_np = best_of(lambda: call(np_k), repeat)
        t_nb = float("nan")
        if _kernels.HAVE_NUMBA:
            nb_k = {n: getattr(_kernels, n + "_nb") for n in cases}
            t_nb = best_of(lambda: call(nb_k), repeat)
        rows.append((name, t_np, t_nb))
    return rows


def solve_timings(delta: float, eps: float) -> list[dict]:
    out = []
    for flag in ("1", "0"):
        env = dict(os.environ, BIASED_INFLAP_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _SOLVE.format(delta=delta, eps=eps)],
                             env=env, capture_output=True, text=True, check=True)
        out.append(json.loads(res.stdout.strip().splitlines()[-1]))
    return out


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--delta", type=float, default=0.02)
    ap.add_argument("--eps", type=float, default=0.06)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-solve", action="store_true", help="only time the individual kernels")
    args = ap.parse_args(argv)

    print(f"kernels on the unit disc, delta={args.delta}, eps={args.eps} (best of {args.repeat})")
    print(f"{'kernel':16s} {'numpy [s]':>11s} {'numba [s]':>11s} {'speedup':>8s}")
    for name, t_np, t_nb in kernel_timings(args.delta, args.eps, args.repeat):
        print(f"{name:16s} {t_np:11.4f} {t_nb:11.4f} {t_np / t_nb:8.1f}")
    if not args.skip_solve:
        print("\nfull solve (flat-start disc, beta=1, tol 1e-8)")
        for row in solve_timings(args.delta, args.eps):
            print(f"{row['backend']:8s} {row['seconds']:9.3f}s  sweeps={row['sweeps']}  nodes={row['nodes']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
