"""The numba and numpy backends must agree."""

from __future__ import annotations

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from biased_inflap import _kernels
from biased_inflap.geometry import DomainSpec, build_grid, neighborhoods, omega_eps_nodes

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture(scope="module")
def setup():
    grid = build_grid(DomainSpec.box([0, 0], [1, 1], neumann=("x2+",)), 0.05)
    nbr = neighborhoods(grid, 0.15)
    nodes = np.ascontiguousarray(omega_eps_nodes(grid, 0.15), dtype=np.int64)
    u = np.random.default_rng(0).normal(size=grid.n_nodes)
    return grid, nbr, nodes, u


@needs_numba
def test_ball_extrema_agree(setup):
    _, nbr, _, u = setup
    np.testing.assert_array_equal(_kernels.ball_max_np(u, nbr.table), _kernels.ball_max_nb(u, nbr.table))
    np.testing.assert_array_equal(_kernels.ball_min_np(u, nbr.table), _kernels.ball_min_nb(u, nbr.table))


@needs_numba
def test_residuals_agree(setup):
    _, nbr, nodes, u = setup
    f = np.cos(u)
    a = _kernels.residual_nodes_np(u, f, nbr.table, nodes, 0.7, 1.9, 0.15)
    b = _kernels.residual_nodes_nb(u, f, nbr.table, nodes, 0.7, 1.9, 0.15)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@needs_numba
def test_sweeps_agree(setup):
    _, nbr, nodes, u = setup
    src = np.full(u.shape, 0.01)
    a, b = u.copy(), u.copy()
    ra = _kernels.gs_sweep_np(a, nbr.table, nodes, 0.6, 0.4, src, 1e-12)
    rb = _kernels.gs_sweep_nb(b, nbr.table, nodes, 0.6, 0.4, src, 1e-12)
    np.testing.assert_allclose(a, b, atol=1e-15)
    assert ra[1:] == rb[1:]
    ja, jb = np.empty_like(u), np.empty_like(u)
    ja[:] = u
    jb[:] = u
    _kernels.jacobi_step_np(u, ja, nbr.table, nodes, 0.6, 0.4, src)
    _kernels.jacobi_step_nb(u, jb, nbr.table, nodes, 0.6, 0.4, src)
    np.testing.assert_allclose(ja, jb, atol=1e-15)


@needs_numba
def test_pair_slopes_agree(setup):
    grid, nbr, nodes, u = setup
    mask = grid.dist_dirichlet > 0.2
    a = _kernels.pair_slopes_np(u, np.ascontiguousarray(grid.coords), nbr.table, np.arange(grid.n_nodes), mask)
    b = _kernels.pair_slopes_nb(u, np.ascontiguousarray(grid.coords), nbr.table, np.arange(grid.n_nodes), mask)
    assert a == pytest.approx(b, rel=1e-14)
    a2 = _kernels.pair_slopes_np(u, np.ascontiguousarray(grid.coords), nbr.table, np.arange(grid.n_nodes), mask, 0.1)
    b2 = _kernels.pair_slopes_nb(u, np.ascontiguousarray(grid.coords), nbr.table, np.arange(grid.n_nodes), mask, 0.1)
    assert a2 == pytest.approx(b2, rel=1e-14)
    assert a2 <= a


_SCRIPT = """
import json
from biased_inflap import _kernels
from biased_inflap.problems import flat_start_disc
from biased_inflap.geometry import build_grid
from biased_inflap.scheme import SchemeParams, solve
p = flat_start_disc(0.7, -1.0)
g = build_grid(p.spec, 0.05)
u, rep = solve(g, SchemeParams(0.15, 0.7), p.f, p.g, tol=1e-10)
print(json.dumps({"backend": _kernels.backend(), "u": u.tolist(), "it": rep.iterations}))
"""


@needs_numba
def test_env_flag_forces_numpy_and_solutions_match():
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, BIASED_INFLAP_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _SCRIPT], env=env, capture_output=True, text=True, check=True)
        out[flag] = json.loads(res.stdout.strip().splitlines()[-1])
    assert out["0"]["backend"] == "numpy" and out["1"]["backend"] == "numba"
    assert out["0"]["it"] == out["1"]["it"]
    np.testing.assert_allclose(out["0"]["u"], out["1"]["u"], atol=1e-12)
