"""Acceptance criteria 1-9, each at its stated tolerance and runtime budget.

Every test records one line per sub-check; the terminal summary prints one
PASS/FAIL line per criterion. Run just this file with
``pytest tests/test_acceptance.py -v``.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from biased_inflap.cone_profiles import fd_identity_check, flat_start_profile, from_initial, lipschitz_majorant
from biased_inflap.geometry import DomainSpec, build_grid, neighborhoods, omega_eps_nodes
from biased_inflap.problems import exponential_1d, exponential_mixed_box, flat_start_disc
from biased_inflap.scheme import SchemeParams, coefficients, residual_field, solve
from biased_inflap.verify import (
    CASES,
    check_apriori,
    check_comparison_continuum,
    check_fd_comparison,
    check_perturbation,
    comparison_trend,
    convergence_study,
    random_fd_comparison_instance,
    seed_gap,
    stability_study,
)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def _within_budget(acceptance, elapsed: float, budget: float) -> bool:
    return acceptance(elapsed < budget, f"runtime {elapsed:.2f}s < {budget:g}s")


# ---------------------------------------------------------------- 1


@pytest.mark.criterion(1)
def test_c1_coefficient_identities(acceptance):
    rng = np.random.default_rng(20261015)
    n = 10_000
    with Timer() as t:
        eps = 10.0 ** rng.uniform(-3, 0, n)
        x = rng.choice([-1.0, 1.0], n) * 10.0 ** rng.uniform(-10, 2, n)  # x = eps * beta
        beta = x / eps
        worst_diff = worst_p = 0.0
        for b, e in zip(beta, eps):
            ap, am = coefficients(b, e)
            # the two coefficients are O(1/eps); their difference is checked at that scale
            worst_diff = max(worst_diff, abs((am - ap) - b) / (ap + am))
            p_plus = SchemeParams(e, b).p_plus
            worst_p = max(worst_p, abs(p_plus - 1 / (1 + math.exp(e * b))) / p_plus)
        worst_cont = 0.0
        for e in eps[:2000]:
            a0 = coefficients(0.0, e)
            for xb in (1e-10, -1e-8, 1e-7, -1e-6):
                ap, am = coefficients(xb / e, e)
                worst_cont = max(worst_cont, e * abs(ap - a0[0]), e * abs(am - a0[1]))
    ok = [
        acceptance(worst_diff <= 1e-12, f"max |a- - a+ - beta| / (a+ + a-) = {worst_diff:.2e} <= 1e-12"),
        acceptance(worst_p <= 1e-12, f"max rel |p+ - 1/(1+e^(eps beta))| = {worst_p:.2e} <= 1e-12"),
        acceptance(worst_cont <= 1e-6, f"beta=0 continuity: max eps*|a(beta) - a(0)| = {worst_cont:.2e} <= 1e-6"),
        _within_budget(acceptance, t.elapsed, 1.0),
    ]
    assert all(ok)


# ---------------------------------------------------------------- 2


def _random_increasing_profile(rng, beta):
    k = float(rng.uniform(-3, 3))
    return from_initial(beta, k, float(rng.uniform(-1, 1)), float(rng.uniform(0.2, 3.0)))


@pytest.mark.criterion(2)
def test_c2_cone_exactness(acceptance):
    rng = np.random.default_rng(2)
    worst_eq = worst_lattice = -math.inf
    clipped_ok = True
    n_eq = n_clip = n_lattice_nodes = 0
    with Timer() as t:
        for i in range(100):
            beta = 0.0 if i % 4 == 0 else float(rng.choice([-1, 1]) * rng.uniform(0.05, 4))
            # unclipped: the ball of radius 2 eps stays inside the monotone interval
            while True:
                prof = _random_increasing_profile(rng, beta)
                r = min(prof.r_max, 2.0)
                if r > 0.1:
                    break
            eps = float(rng.uniform(0.01, r / 2))
            lhs, rhs = fd_identity_check(prof, eps, r)
            worst_eq = max(worst_eq, abs(lhs - rhs))
            n_eq += 1

            # clipped: profile with a vanishing slope at r < 2 eps
            while True:
                top = from_initial(beta, float(rng.uniform(0.2, 3)), 0.0, float(rng.uniform(0.2, 2.0)))
                r_c = top.r_max
                if math.isfinite(r_c):
                    break
            eps_c = float(rng.uniform(r_c / 2 * 1.01, r_c * 0.99))
            lhs_c, rhs_c = fd_identity_check(top, eps_c, r_c)
            clipped_ok &= lhs_c < rhs_c
            n_clip += 1

            # lattice residual of the sampled profile
            m = int(rng.integers(2, 6))
            delta = r / (2 * m * int(rng.integers(2, 5)))
            eps_l = m * delta
            length = delta * math.floor(r / delta + 1e-9)
            grid = build_grid(DomainSpec.box([0.0], [length]), delta)
            nbr = neighborhoods(grid, eps_l)
            u = prof.eval(np.minimum(grid.coords[:, 0], prof.r_max))
            x = grid.coords[:, 0]
            nodes = np.flatnonzero((x - eps_l >= -1e-12) & (x + eps_l <= length + 1e-12))
            res = residual_field(u, np.full(grid.n_nodes, prof.k), SchemeParams(eps_l, beta), nbr, nodes)
            worst_lattice = max(worst_lattice, float(np.abs(res).max()))
            n_lattice_nodes += len(nodes)
    ok = [
        acceptance(worst_eq <= 1e-10, f"{n_eq} unclipped identities, max |lhs - eps k| = {worst_eq:.2e} <= 1e-10"),
        acceptance(bool(clipped_ok), f"{n_clip} clipped cases all satisfy lhs < eps k"),
        acceptance(worst_lattice <= 1e-10,
                   f"lattice residual - k over {n_lattice_nodes} unclipped nodes: max {worst_lattice:.2e} <= 1e-10"),
        _within_budget(acceptance, t.elapsed, 5.0),
    ]
    assert all(ok)


# ---------------------------------------------------------------- 3


@pytest.fixture(scope="module")
def c3_table():
    with Timer() as t:
        table = convergence_study(exponential_1d(1.0), [0.2, 0.1, 0.05], delta_ratio=0.25, tol=1e-10)
    return table, t.elapsed


@pytest.mark.criterion(3)
def test_c3_errors_strictly_decrease(acceptance, c3_table):
    table, _ = c3_table
    errs = table.errors()
    assert acceptance(errs[0] > errs[1] > errs[2] and all(r["status"] == "converged" for r in table.rows),
                      "sup errors on Omega_eps strictly decrease: " + " > ".join(f"{e:.4f}" for e in errs))


@pytest.mark.criterion(3)
def test_c3_finest_error_threshold(acceptance, c3_table):
    table, _ = c3_table
    finest = table.errors()[-1]
    assert acceptance(finest <= 0.02, f"finest error (eps=0.05) {finest:.4f} <= 0.02")


@pytest.mark.criterion(3)
def test_c3_mixed_box_matches_1d(acceptance, c3_table):
    _, elapsed_1d = c3_table
    worst = 0.0
    with Timer() as t:
        for eps in (0.2, 0.1, 0.05):
            delta = eps / 4
            line = build_grid(DomainSpec.box([0.0], [1.0]), delta)
            params = SchemeParams(eps, 1.0)
            u1, _ = solve(line, params, 0.0, lambda p: p[:, 0], tol=1e-10)
            box = exponential_mixed_box(1.0)
            grid = build_grid(box.spec, delta)
            u2, _ = solve(grid, params, box.f, box.g, tol=1e-10)
            j = np.rint(grid.coords[:, 0] / delta).astype(int)
            worst = max(worst, float(np.abs(u2 - u1[j]).max()))
    ok = [acceptance(worst <= 1e-8, f"2D mixed box vs 1D profile: max node difference {worst:.2e} <= 1e-8"),
          _within_budget(acceptance, elapsed_1d + t.elapsed, 60.0)]
    assert all(ok)


# ---------------------------------------------------------------- 4


@pytest.mark.criterion(4)
def test_c4_perturbation(acceptance):
    with Timer() as t:
        prob = exponential_1d(1.0)
        exact_reports = []
        for m, delta in ((4, 0.025), (3, 0.02), (5, 0.01)):
            grid = build_grid(prob.spec, delta)
            params = SchemeParams(m * delta, 1.0)
            u = prob.exact(grid.coords)
            exact_reports.append((check_perturbation(u, 0.0, params, grid),
                                  check_perturbation(u, 0.0, params, grid, tol=1e-10)))
        disc_reports = []
        for beta, k in ((1.0, -1.0), (0.0, -2.0), (-0.7, -0.5)):
            disc = flat_start_disc(beta, k)
            grid = build_grid(disc.spec, 0.025)
            disc_reports.append(check_perturbation(disc.exact(grid.coords), disc.f, SchemeParams(0.1, beta), grid))
        solved = []
        rng = np.random.default_rng(4)
        for i in range(20):
            beta = float(rng.uniform(-2, 2))
            kind = i % 4
            if kind == 0:
                spec, delta, eps = DomainSpec.box([0.0], [1.0]), 0.02, 0.02 * int(rng.integers(2, 6))
            elif kind == 1:
                spec, delta, eps = DomainSpec.box([0, 0], [1, 1], neumann=("x2-", "x2+")), 0.05, 0.15
            elif kind == 2:
                spec, delta, eps = DomainSpec.ball([0, 0], 1.0), 0.05, 0.15
            else:
                spec, delta, eps = DomainSpec.box([0, 0], [1, 1]), 0.05, 0.1
            grid = build_grid(spec, delta)
            a, b = rng.normal(size=2)
            f = float(rng.uniform(-1, 1))
            g = lambda p, a=a, b=b: a * p[:, 0] + b * p[:, -1] ** 2
            params = SchemeParams(eps, beta)
            u, _ = solve(grid, params, f, g, tol=1e-10)
            solved.append(check_perturbation(u, f, params, grid))
    ok = [
        acceptance(all(r.passed for r, _ in exact_reports),
                   "1D exact solution within grid budget: worst "
                   + ", ".join(f"{r.worst_violation:.1e}/{r.tolerance:.1e}" for r, _ in exact_reports)),
        acceptance(all(r.passed for _, r in exact_reports),
                   "1D exact solution, eps = m delta, bound 1e-10: worst "
                   + ", ".join(f"{r.worst_violation:.1e}" for _, r in exact_reports)),
        acceptance(all(r.passed for r in disc_reports),
                   "flat-start disc fields with f = k < 0: worst "
                   + ", ".join(f"{r.worst_violation:.1e}/{r.tolerance:.1e}" for r in disc_reports)),
        acceptance(all(r.passed for r in solved),
                   f"{sum(r.passed for r in solved)}/20 solver fields within grid budget, worst ratio "
                   f"{max(r.worst_violation / r.tolerance for r in solved):.2e}"),
        _within_budget(acceptance, t.elapsed, 60.0),
    ]
    assert all(ok)


# ---------------------------------------------------------------- 5


@pytest.mark.criterion(5)
def test_c5_fd_comparison(acceptance):
    rng = np.random.default_rng(5)
    ok = []
    with Timer() as t:
        for case in CASES:
            reps = []
            for _ in range(50):
                inst = random_fd_comparison_instance(rng, case, max_nodes=500)
                assert inst["grid"].n_nodes <= 500
                reps.append(check_fd_comparison(inst["u"], inst["v"], inst["f"], inst["f_tilde"], inst["params"],
                                                inst["grid"], case))
            n_pass = sum(r.passed for r in reps)
            worst = max(r.worst_violation / r.tolerance for r in reps)
            ok.append(acceptance(n_pass == 50, f"case {case}: {n_pass}/50 instances, max excess/tol {worst:.2e}"))
    ok.append(_within_budget(acceptance, t.elapsed, 120.0))
    assert all(ok)


# ---------------------------------------------------------------- 6


@pytest.mark.criterion(6)
def test_c6_continuum_comparison_trend(acceptance):
    spec = DomainSpec.ball([0, 0], 1.0)
    instances = {
        "h=0": (0.0, 0.0, lambda p: p[:, 0] * p[:, 1], lambda p: p[:, 0] - p[:, 1]),
        "h=1<h~=2": (1.0, 2.0, lambda p: p[:, 0] ** 2, lambda p: p[:, 0] ** 2 + 0.2 * p[:, 1]),
    }
    ok = []
    with Timer() as t:
        for name, (h, h_t, g_u, g_v) in instances.items():
            reps = []
            for eps in (0.2, 0.1, 0.05):
                grid = build_grid(spec, eps / 4)
                params = SchemeParams(eps, 1.0)
                nbr = neighborhoods(grid, eps)
                u, _ = solve(grid, params, h, g_u, tol=1e-9, nbr=nbr)
                v, _ = solve(grid, params, h_t, g_v, tol=1e-9, nbr=nbr)
                reps.append(check_comparison_continuum(u, v, grid, eps))
            trend = comparison_trend(reps, final_rtol=1e-3)
            ok.append(acceptance(trend.passed, f"{name}: excess " + " -> ".join(
                f"{r.worst_violation:.1e}" for r in reps) + f", final tol 1e-3*osc = {trend.tolerance:.1e}"))
    ok.append(_within_budget(acceptance, t.elapsed, 120.0))
    assert all(ok)


# ---------------------------------------------------------------- 7


@pytest.mark.criterion(7)
def test_c7_monotone_existence(acceptance):
    ok = []
    with Timer() as t:
        cases = {
            "disc": (build_grid(DomainSpec.ball([0, 0], 1.0), 0.05), SchemeParams(0.15, 1.5),
                     lambda p: np.abs(p[:, 0]) - p[:, 1] ** 2),
            "mixed box": (build_grid(DomainSpec.box([0, 0], [1, 1], neumann=("x2+",)), 0.025),
                          SchemeParams(0.1, -1.0), lambda p: p[:, 0] * (1 - p[:, 1])),
            "interval": (build_grid(DomainSpec.box([0.0], [1.0]), 0.0125), SchemeParams(0.05, 1.0),
                         lambda p: p[:, 0]),
        }
        for name, (grid, params, g) in cases.items():
            res = seed_gap(grid, params, 0.0, g, tol=1e-11)
            mono = res["above"].monotone and res["below"].monotone
            ok.append(acceptance(res["gap"] <= 1e-8 and mono,
                                 f"{name}, f=0: |u_above - u_below| = {res['gap']:.1e} <= 1e-8, monotone={mono}"))
        grid = build_grid(DomainSpec.ball([0, 0], 1.0), 0.05)
        res = seed_gap(grid, SchemeParams(0.15, 1.0), lambda p: np.sign(p[:, 0]) * 2.0, lambda p: 0 * p[:, 0],
                       tol=1e-11)
        acceptance(True, f"sign-changing f: gap {res['gap']:.2e} reported, not asserted")
    ok.append(_within_budget(acceptance, t.elapsed, 60.0))
    assert all(ok)


# ---------------------------------------------------------------- 8


@pytest.mark.criterion(8)
def test_c8_apriori_bound(acceptance):
    ok = [
        acceptance(lipschitz_majorant(0.0, 1.0, 1.0).eval(1.0) == pytest.approx(0.5, abs=1e-15),
                   "C1(beta=0, k=1, d=1) = 0.5"),
        acceptance(lipschitz_majorant(1.0, 1.0, 1.0).eval(1.0) == pytest.approx(math.e - 2, abs=1e-14),
                   f"C1(beta=1, k=1, d=1) = e - 2 = {math.e - 2:.6f}"),
    ]
    with Timer() as t:
        benchmarks = []
        line = DomainSpec.box([0.0], [1.0])
        benchmarks.append(("interval beta=0 f=1", line, 0.0125, 0.05, 0.0, 1.0, lambda p: 0 * p[:, 0]))
        benchmarks.append(("interval beta=1 f=1", line, 0.0125, 0.05, 1.0, 1.0, lambda p: 0 * p[:, 0]))
        benchmarks.append(("interval exponential", line, 0.0125, 0.05, 1.0, 0.0, lambda p: p[:, 0]))
        box = exponential_mixed_box(1.0)
        benchmarks.append(("mixed box", box.spec, 0.025, 0.1, 1.0, 0.0, box.g))
        disc = flat_start_disc(1.0, -1.0)
        benchmarks.append(("flat-start disc", disc.spec, 0.025, 0.1, 1.0, -1.0, disc.g))
        benchmarks.append(("disc beta=-2 f=3", disc.spec, 0.05, 0.15, -2.0, 3.0, lambda p: p[:, 1]))
        for name, spec, delta, eps, beta, f, g in benchmarks:
            grid = build_grid(spec, delta)
            u, _ = solve(grid, SchemeParams(eps, beta), f, g, tol=1e-10)
            collar = ~grid.omega_mask(eps)
            g_max = float(u[collar].max())
            rep = check_apriori(u, g_max, beta, abs(f), grid, eps)
            ok.append(acceptance(rep.passed, f"{name}: max u - max g = {rep.info['max_u'] - g_max:.4f} "
                                             f"<= C1 = {rep.info['C1']:.4f}; Lip {rep.info['interior_lipschitz']:.2f}"
                                             f" <= C2 = {rep.info['C2']:.2f}"))
    ok.append(_within_budget(acceptance, t.elapsed, 10.0))
    assert all(ok)


# ---------------------------------------------------------------- 9


@pytest.mark.criterion(9)
def test_c9_stability(acceptance):
    betas = [1 + 2.0 ** -j for j in range(1, 9)]
    ok = []
    with Timer() as t:
        for prob, eps, delta in ((exponential_1d(1.0), 0.05, 0.0125), (flat_start_disc(1.0, -1.0), 0.1, 0.025)):
            rep = stability_study(prob, eps, delta, betas=betas, final_rtol=1e-2)
            d = [row["distance"] for row in rep.table]
            ok.append(acceptance(rep.passed, f"{prob.name}: distances " + ", ".join(f"{x:.1e}" for x in d)
                                 + f"; final <= 1e-2*osc = {rep.tolerance:.1e}"))
    ok.append(_within_budget(acceptance, t.elapsed, 60.0))
    assert all(ok)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
