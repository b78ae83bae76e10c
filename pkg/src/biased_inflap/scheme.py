"""Ball finite-difference scheme for ``-Δ∞u - β|Du| = f``.

At a node ``x`` farther than ``eps`` from the Dirichlet boundary the scheme
reads

    a+ * S- u(x) - a- * S+ u(x) = f(x)

with the normalized ball increments ``S+ u = (max_ball u - u) / eps`` and
``S- u = (u - min_ball u) / eps`` and the exponential rates
``a+ = beta / (e^{eps beta} - 1)``, ``a- = beta / (1 - e^{-eps beta})``.
The rate that multiplies each increment is the one for which the
one-dimensional cone identity holds, so closed-form cone profiles are exact
discrete solutions and the scheme is consistent with ``-Δ∞u - β|Du|``.
Solving for ``u(x)`` gives the dynamic-programming form

    u(x) = p- * max_ball u + p+ * min_ball u + eps / (a+ + a-) * f(x)

with ``p± = a± / (a+ + a-)``; the remaining nodes (the Dirichlet collar)
hold the boundary data extended by nearest-point values.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Union

import numpy as np

from . import _kernels
from . import cone_profiles
from .geometry import Grid, NeighborhoodTable, neighborhoods, omega_eps_nodes

logger = logging.getLogger(__name__)

FieldLike = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]

FROM_ABOVE = "from_above"
FROM_BELOW = "from_below"
GIVEN = "given"
SWEEPS = ("gauss_seidel", "jacobi")


class SchemeError(ValueError):
    pass


class EmptyOmegaError(SchemeError):
    pass


class NonConvergedError(RuntimeError):
    """Solver hit ``max_sweeps``; carries the last iterate and the report."""

    def __init__(self, field: np.ndarray, report: SolveReport):
        self.field = field
        self.report = report
        super().__init__(f"no convergence after {report.iterations} sweeps (residual {report.residual:.3e})")


def coefficients(beta: float, eps: float) -> tuple[float, float]:
    """The rates ``(a+, a-)``; both equal ``1/eps`` at ``beta = 0``."""
    beta, eps = float(beta), float(eps)
    if not eps > 0:
        raise SchemeError(f"eps must be positive, got {eps}")
    x = eps * beta
    if x == 0.0:
        return 1.0 / eps, 1.0 / eps
    # x / expm1(x) keeps full relative accuracy down to |x| ~ 1e-300
    return (x / math.expm1(x)) / eps, (x / -math.expm1(-x)) / eps


@dataclass(frozen=True)
class SchemeParams:
    eps: float
    beta: float = 0.0
    a_plus: float = field(init=False)
    a_minus: float = field(init=False)
    p_plus: float = field(init=False)
    p_minus: float = field(init=False)
    source_scale: float = field(init=False)

    def __post_init__(self):
        a_plus, a_minus = coefficients(self.beta, self.eps)
        total = a_plus + a_minus
        object.__setattr__(self, "a_plus", a_plus)
        object.__setattr__(self, "a_minus", a_minus)
        object.__setattr__(self, "p_plus", a_plus / total)
        object.__setattr__(self, "p_minus", a_minus / total)
        object.__setattr__(self, "source_scale", self.eps / total)


# ---------------------------------------------------------------- fields


def node_values(grid: Grid, value: FieldLike) -> np.ndarray:
    """Evaluate a scalar, per-node array, or callable of coordinates on the nodes."""
    if callable(value):
        out = np.asarray(value(np.asarray(grid.coords)), float)
        out = np.broadcast_to(out, (grid.n_nodes,)).copy()
    elif np.ndim(value) == 0:
        out = np.full(grid.n_nodes, float(value))
    else:
        out = np.array(value, float)
        if out.shape != (grid.n_nodes,):
            raise SchemeError(f"field has shape {out.shape}, grid has {grid.n_nodes} nodes")
    if not np.all(np.isfinite(out)):
        raise SchemeError("field has non-finite values")
    return out


def collar_extension(grid: Grid, g: FieldLike) -> np.ndarray:
    """Boundary data at every node, read at the nearest Dirichlet boundary point.

    A per-node array is taken as already extended.
    """
    if callable(g):
        out = np.asarray(g(np.asarray(grid.nearest_dirichlet)), float)
        out = np.broadcast_to(out, (grid.n_nodes,)).copy()
        if not np.all(np.isfinite(out)):
            raise SchemeError("boundary data has non-finite values")
        return out
    return node_values(grid, g)


def max_ball(u: np.ndarray, nbr: NeighborhoodTable) -> np.ndarray:
    return _kernels.ball_max(np.ascontiguousarray(u, float), nbr.table)


def min_ball(u: np.ndarray, nbr: NeighborhoodTable) -> np.ndarray:
    return _kernels.ball_min(np.ascontiguousarray(u, float), nbr.table)


def s_plus(u: np.ndarray, nbr: NeighborhoodTable, node: int) -> float:
    return float((u[nbr.table[node]].max() - u[node]) / nbr.radius)


def s_minus(u: np.ndarray, nbr: NeighborhoodTable, node: int) -> float:
    return float((u[node] - u[nbr.table[node]].min()) / nbr.radius)


def _check_nbr(params: SchemeParams, nbr: NeighborhoodTable) -> None:
    if not math.isclose(nbr.radius, params.eps, rel_tol=1e-12):
        raise SchemeError(f"neighborhood radius {nbr.radius} does not match eps {params.eps}")


def residual_field(u: np.ndarray, f: np.ndarray, params: SchemeParams, nbr: NeighborhoodTable,
                   nodes: np.ndarray | None = None) -> np.ndarray:
    """Scheme residual at ``nodes`` (default: all of the interior set).

    Negative or zero means a discrete subsolution at the node, positive or
    zero a supersolution.
    """
    _check_nbr(params, nbr)
    if nodes is None:
        nodes = omega_eps_nodes(nbr.grid, params.eps)
    nodes = np.ascontiguousarray(nodes, dtype=np.int64)
    u = np.ascontiguousarray(u, float)
    f = np.ascontiguousarray(np.broadcast_to(np.asarray(f, float), u.shape))
    return _kernels.residual_nodes(u, f, nbr.table, nodes, params.a_plus, params.a_minus, params.eps)


def residual(u: np.ndarray, f: np.ndarray, params: SchemeParams, nbr: NeighborhoodTable, node: int) -> float:
    if not nbr.grid.omega_mask(params.eps)[node]:
        raise SchemeError(f"node {node} lies in the Dirichlet collar")
    return float(residual_field(u, f, params, nbr, np.array([node]))[0])


def dpp_apply(u: np.ndarray, f: np.ndarray, g_ext: np.ndarray, params: SchemeParams,
              nbr: NeighborhoodTable, omega: np.ndarray | None = None) -> np.ndarray:
    """One Jacobi application of the dynamic-programming operator."""
    _check_nbr(params, nbr)
    if omega is None:
        omega = omega_eps_nodes(nbr.grid, params.eps)
    omega = np.ascontiguousarray(omega, dtype=np.int64)
    u = np.ascontiguousarray(u, float)
    src = params.source_scale * np.broadcast_to(np.asarray(f, float), u.shape)
    out = np.array(g_ext, float)
    return _kernels.jacobi_step(u, out, nbr.table, omega, params.p_minus, params.p_plus, np.ascontiguousarray(src))


# ---------------------------------------------------------------- solver


@dataclass
class SolveReport:
    iterations: int
    residual: float
    sweep: str
    seed: str
    monotone: bool
    status: str
    n_active: int
    barrier_k: float | None = None
    moves_up: int = 0
    moves_down: int = 0
    residual_history: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    backend: str = field(default_factory=_kernels.backend)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self, max_history: int = 200) -> dict:
        out = asdict(self)
        hist = self.residual_history
        if len(hist) > max_history:
            picks = np.unique(np.linspace(0, len(hist) - 1, max_history).astype(int))
            out["residual_history"] = [hist[i] for i in picks]
        del out["wall_time"]
        out["timing"] = {"wall_time": self.wall_time}
        return out


def barrier_anchor(grid: Grid) -> np.ndarray:
    """Cone tip for the barrier seeds, well outside the domain."""
    lo, hi = grid.spec.bounding_box()
    x0 = 0.5 * (lo + hi)
    x0[0] -= 2.0 * grid.diameter
    return x0


def barrier_seed(grid: Grid, params: SchemeParams, f: np.ndarray, g_ext: np.ndarray, nbr: NeighborhoodTable,
                 active: np.ndarray, above: bool, max_doublings: int = 40) -> tuple[np.ndarray, float]:
    """Discrete super- (``above``) or subsolution built from a radial barrier.

    Uses ``max g + g_up(|x - x0|)`` resp. ``min g + g_down(|x - x0|)`` with the
    cone tip outside the domain, so the barrier is smooth on the closure.
    The level starts at ``max |f|`` and doubles until the lattice residual
    has the right sign, absorbing ball-quadrature error.
    """
    x0 = barrier_anchor(grid)
    r = np.linalg.norm(grid.coords - x0, axis=1)
    reach = float(r.max()) * (1 + 1e-9)
    k = float(np.abs(f[active]).max()) if len(active) else 0.0
    collar = ~grid.omega_mask(params.eps)
    slack = 1e-9 * (1.0 + float(np.abs(f).max()))
    for _ in range(max_doublings):
        if above:
            prof = cone_profiles.lipschitz_majorant(params.beta, k, reach)
            seed = g_ext.max() + prof.eval(r)
        else:
            prof = cone_profiles.subsolution_minorant(params.beta, k, reach)
            seed = g_ext.min() + prof.eval(r)
        seed[collar] = g_ext[collar]
        res = residual_field(seed, f, params, nbr, active)
        ok = np.all(res >= f[active] - slack) if above else np.all(res <= f[active] + slack)
        if ok or k == 0.0:
            break
        k *= 2.0
    else:
        logger.warning("barrier seed is not a discrete %s-solution after %d doublings",
                       "super" if above else "sub", max_doublings)
    return seed, k


def solve(grid: Grid, params: SchemeParams, f: FieldLike = 0.0, g: FieldLike = 0.0,
          seed: str | np.ndarray = FROM_ABOVE, tol: float = 1e-8, max_sweeps: int = 100_000,
          sweep: str = "gauss_seidel", nbr: NeighborhoodTable | None = None,
          raise_on_failure: bool = True) -> tuple[np.ndarray, SolveReport]:
    """Solve the scheme by monotone sweeps of the dynamic-programming operator.

    ``seed`` is ``"from_above"`` (barrier supersolution, iterates decrease),
    ``"from_below"`` (barrier subsolution, iterates increase) or a per-node
    array. Stops when the sup-norm residual over the interior set is at most
    ``tol``. If ``max_sweeps`` is reached, raises :class:`NonConvergedError`
    unless ``raise_on_failure`` is false.
    """
    t0 = time.perf_counter()
    if not tol > 0:
        raise SchemeError("tol must be positive")
    if sweep not in SWEEPS:
        raise SchemeError(f"sweep must be one of {SWEEPS}")
    nbr = nbr if nbr is not None else neighborhoods(grid, params.eps)
    _check_nbr(params, nbr)
    f_nodes = node_values(grid, f)
    g_ext = collar_extension(grid, g)
    active = np.ascontiguousarray(omega_eps_nodes(grid, params.eps), dtype=np.int64)

    if isinstance(seed, str):
        seed_name = seed
        if seed not in (FROM_ABOVE, FROM_BELOW):
            raise SchemeError(f"seed must be {FROM_ABOVE!r}, {FROM_BELOW!r} or an array")
    else:
        seed_name = GIVEN

    if len(active) == 0:
        report = SolveReport(0, 0.0, sweep, seed_name, True, "empty_omega_eps", 0,
                             wall_time=time.perf_counter() - t0)
        logger.warning("interior set is empty at eps=%g; returning the collar data", params.eps)
        return g_ext, report

    barrier_k = None
    if seed_name == FROM_ABOVE:
        u, barrier_k = barrier_seed(grid, params, f_nodes, g_ext, nbr, active, above=True)
    elif seed_name == FROM_BELOW:
        u, barrier_k = barrier_seed(grid, params, f_nodes, g_ext, nbr, active, above=False)
    else:
        u = node_values(grid, seed)
    collar = ~grid.omega_mask(params.eps)
    u[collar] = g_ext[collar]

    src = np.ascontiguousarray(params.source_scale * f_nodes)
    w_max, w_min = params.p_minus, params.p_plus
    move_tol = 1e-12 * (1.0 + float(np.abs(u).max()))
    history = []
    ups = downs = 0
    res = float(np.abs(residual_field(u, f_nodes, params, nbr, active)).max())
    history.append(res)
    sweeps = 0
    buf = np.empty_like(u)
    while res > tol and sweeps < max_sweeps:
        if sweep == "gauss_seidel":
            _, n_up, n_down = _kernels.gs_sweep(u, nbr.table, active, w_max, w_min, src, move_tol)
        else:
            buf[:] = u
            _kernels.jacobi_step(u, buf, nbr.table, active, w_max, w_min, src)
            diff = buf[active] - u[active]
            n_up, n_down = int((diff > move_tol).sum()), int((diff < -move_tol).sum())
            u, buf = buf, u
        ups += n_up
        downs += n_down
        sweeps += 1
        res = float(np.abs(residual_field(u, f_nodes, params, nbr, active)).max())
        history.append(res)
        if not np.isfinite(res):
            raise SchemeError("iteration produced non-finite values")

    if seed_name == FROM_ABOVE:
        monotone = ups == 0
    elif seed_name == FROM_BELOW:
        monotone = downs == 0
    else:
        monotone = ups == 0 or downs == 0
    status = "converged" if res <= tol else "non_converged"
    report = SolveReport(sweeps, res, sweep, seed_name, bool(monotone), status, len(active), barrier_k,
                         ups, downs, history, time.perf_counter() - t0)
    if status != "converged" and raise_on_failure:
        raise NonConvergedError(u, report)
    return u, report


def sup_ball(h: np.ndarray, grid: Grid, radius: float) -> np.ndarray:
    """``h`` maximized over the lattice ball of ``radius`` around each node."""
    return max_ball(h, neighborhoods(grid, radius))


def inf_ball(h: np.ndarray, grid: Grid, radius: float) -> np.ndarray:
    return min_ball(h, neighborhoods(grid, radius))
