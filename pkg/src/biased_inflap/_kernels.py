"""Inner loops of the ball scheme.

Every kernel has a numba version and a pure-numpy version with identical
semantics. The numba path is used when numba imports and the environment
variable ``BIASED_INFLAP_NUMBA`` is not set to ``0``; set it to ``0`` to
force the numpy path (useful for debugging and for the parity benchmark).

Neighborhood tables are dense ``(n_nodes, n_offsets)`` integer arrays in
which missing neighbors are replaced by the node's own index. Since every
node belongs to its own ball, the padding never changes a max or a min.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

_WANT_NUMBA = os.environ.get("BIASED_INFLAP_NUMBA", "1").strip().lower() not in {"0", "false", "no", "off"}

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # an outdated system TBB only disables that layer, but warns on every import
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    warnings.filterwarnings("ignore", message=".*TBB threading layer.*")
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _WANT_NUMBA


# ---------------------------------------------------------------- numpy path


def ball_max_np(u, table):
    return u[table].max(axis=1)


def ball_min_np(u, table):
    return u[table].min(axis=1)


def residual_nodes_np(u, f, table, nodes, a_plus, a_minus, eps):
    vals = u[table[nodes]]
    un = u[nodes]
    s_minus = (un - vals.min(axis=1)) / eps
    s_plus = (vals.max(axis=1) - un) / eps
    return a_plus * s_minus - a_minus * s_plus - f[nodes]


def gs_sweep_np(u, table, nodes, w_max, w_min, src, move_tol):
    max_change = 0.0
    n_up = 0
    n_down = 0
    for i in nodes:
        vals = u[table[i]]
        new = w_max * vals.max() + w_min * vals.min() + src[i]
        change = new - u[i]
        if change > move_tol:
            n_up += 1
        elif change < -move_tol:
            n_down += 1
        if abs(change) > max_change:
            max_change = abs(change)
        u[i] = new
    return max_change, n_up, n_down


def jacobi_step_np(u, out, table, nodes, w_max, w_min, src):
    vals = u[table[nodes]]
    out[nodes] = w_max * vals.max(axis=1) + w_min * vals.min(axis=1) + src[nodes]
    return out


def pair_slopes_np(u, coords, table, nodes, mask, min_dist=0.0):
    """Largest |u(x) - u(y)| / |x - y| over table pairs with both ends in ``mask``
    and ``|x - y| >= min_dist``."""
    best = 0.0
    for i in nodes:
        if not mask[i]:
            continue
        row = table[i]
        keep = mask[row] & (row != i)
        if not keep.any():
            continue
        row = row[keep]
        dist = np.sqrt(((coords[row] - coords[i]) ** 2).sum(axis=1))
        far = dist >= min_dist
        if not far.any():
            continue
        slope = (np.abs(u[row[far]] - u[i]) / dist[far]).max()
        if slope > best:
            best = slope
    return best


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def ball_max_nb(u, table):
        n, m = table.shape
        out = np.empty(n)
        for i in range(n):
            best = u[table[i, 0]]
            for j in range(1, m):
                v = u[table[i, j]]
                if v > best:
                    best = v
            out[i] = best
        return out

    @njit(cache=True)
    def ball_min_nb(u, table):
        n, m = table.shape
        out = np.empty(n)
        for i in range(n):
            best = u[table[i, 0]]
            for j in range(1, m):
                v = u[table[i, j]]
                if v < best:
                    best = v
            out[i] = best
        return out

    @njit(cache=True)
    def residual_nodes_nb(u, f, table, nodes, a_plus, a_minus, eps):
        m = table.shape[1]
        out = np.empty(nodes.shape[0])
        for q in range(nodes.shape[0]):
            i = nodes[q]
            hi = u[table[i, 0]]
            lo = hi
            for j in range(1, m):
                v = u[table[i, j]]
                if v > hi:
                    hi = v
                elif v < lo:
                    lo = v
            out[q] = a_plus * (u[i] - lo) / eps - a_minus * (hi - u[i]) / eps - f[i]
        return out

    @njit(cache=True)
    def gs_sweep_nb(u, table, nodes, w_max, w_min, src, move_tol):
        m = table.shape[1]
        max_change = 0.0
        n_up = 0
        n_down = 0
        for q in range(nodes.shape[0]):
            i = nodes[q]
            hi = u[table[i, 0]]
            lo = hi
            for j in range(1, m):
                v = u[table[i, j]]
                if v > hi:
                    hi = v
                elif v < lo:
                    lo = v
            new = w_max * hi + w_min * lo + src[i]
            change = new - u[i]
            if change > move_tol:
                n_up += 1
            elif change < -move_tol:
                n_down += 1
            if abs(change) > max_change:
                max_change = abs(change)
            u[i] = new
        return max_change, n_up, n_down

    @njit(cache=True, parallel=True)
    def jacobi_step_nb(u, out, table, nodes, w_max, w_min, src):
        m = table.shape[1]
        for q in prange(nodes.shape[0]):
            i = nodes[q]
            hi = u[table[i, 0]]
            lo = hi
            for j in range(1, m):
                v = u[table[i, j]]
                if v > hi:
                    hi = v
                elif v < lo:
                    lo = v
            out[i] = w_max * hi + w_min * lo + src[i]
        return out

    @njit(cache=True)
    def pair_slopes_nb(u, coords, table, nodes, mask, min_dist=0.0):
        m = table.shape[1]
        d = coords.shape[1]
        best = 0.0
        for q in range(nodes.shape[0]):
            i = nodes[q]
            if not mask[i]:
                continue
            for j in range(m):
                k = table[i, j]
                if k == i or not mask[k]:
                    continue
                dist2 = 0.0
                for c in range(d):
                    diff = coords[k, c] - coords[i, c]
                    dist2 += diff * diff
                dist = np.sqrt(dist2)
                if dist < min_dist:
                    continue
                slope = abs(u[k] - u[i]) / dist
                if slope > best:
                    best = slope
        return best


def _pick(name):
    if USE_NUMBA:
        return globals()[name + "_nb"]
    return globals()[name + "_np"]


ball_max = _pick("ball_max")
ball_min = _pick("ball_min")
residual_nodes = _pick("residual_nodes")
gs_sweep = _pick("gs_sweep")
jacobi_step = _pick("jacobi_step")
pair_slopes = _pick("pair_slopes")


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n: int | None) -> None:
    """Cap the worker count used by the parallel Jacobi kernel."""
    if n is None or not USE_NUMBA:
        return
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
